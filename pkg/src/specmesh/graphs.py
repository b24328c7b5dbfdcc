"""Undirected mesh graphs and their spectral operators.

A triangular mesh is treated as an undirected graph: the adjacency matrix
holds one symmetric 0/1 entry per face edge, the degree matrix is diagonal
row sums, and the (unnormalized) Laplacian is degree minus adjacency.
Eigendecomposition is dense and deterministic: all meshes handled here are
desk scale (|V| <= ~5000), where an exact symmetric solver beats iterative
methods on reproducibility.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ArgumentError, NumericalError, StructuralError

# Eigenvalues above this magnitude count as nonzero when counting connected
# components; below it, tiny negatives are clamped to exactly zero.
ZERO_EIGENVALUE_TOL = 1e-8

# First eigenvector component with magnitude above this threshold is forced
# positive, fixing the sign ambiguity of every eigenvector.
SIGN_CONVENTION_TOL = 1e-10


@dataclass(frozen=True)
class MeshGraph:
    """Undirected graph of a mesh: positions, faces, adjacency, degrees.

    ``adjacency`` is a symmetric CSR 0/1 matrix with zero diagonal and
    canonically sorted indices; ``degrees`` holds its row sums (the diagonal
    of the degree matrix).
    """

    positions: np.ndarray  # (V, 3) float64, meters
    faces: np.ndarray  # (F, 3) int32, may be empty for edge-built graphs
    adjacency: sp.csr_matrix  # (V, V)
    degrees: np.ndarray = field(repr=False)  # (V,)

    @property
    def n_vertices(self) -> int:
        return self.adjacency.shape[0]

    def degree_matrix(self) -> sp.csr_matrix:
        return sp.diags(self.degrees, format="csr")

    def edge_array(self) -> np.ndarray:
        """Unique undirected edges as an (E, 2) array with i < j, sorted."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        edges = np.stack([coo.row, coo.col], axis=1).astype(np.int64)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        return edges[order]


@dataclass(frozen=True)
class Laplacian:
    """Symmetric |V| x |V| graph operator.

    Outputs of :func:`laplacian` satisfy zero row sums and positive
    semi-definiteness; outputs of :func:`scaled_laplacian` instead have
    spectrum inside [-1, 1]. The wrapper itself does not re-validate.
    """

    matrix: sp.csr_matrix

    @property
    def n_vertices(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Spectrum:
    """The k smallest eigenpairs of a Laplacian, ascending.

    Column i of ``eigenvectors`` pairs with ``eigenvalues[i]``. Signs follow
    the first-significant-component-positive convention so repeated runs are
    bitwise identical.
    """

    eigenvalues: np.ndarray  # (k,) nonnegative, ascending
    eigenvectors: np.ndarray  # (V, k) orthonormal columns

    @property
    def k(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.eigenvectors.shape[0]


def build_mesh_graph(positions, faces) -> MeshGraph:
    """Build the undirected graph of a triangular mesh.

    Every face contributes its three edges; shared edges collapse to a
    single symmetric adjacency entry.

    Raises:
        StructuralError: a face references an out-of-range vertex or repeats
            a vertex (degenerate face).
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise StructuralError(f"positions must be (V, 3), got {positions.shape}")
    n = positions.shape[0]
    faces = np.asarray(faces, dtype=np.int64)
    if faces.size == 0:
        faces = faces.reshape(0, 3)
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise StructuralError(f"faces must be (F, 3), got {faces.shape}")
    if faces.size:
        if faces.min() < 0 or faces.max() >= n:
            bad = int(np.argmax((faces < 0) | (faces >= n)).item() // 3)
            raise StructuralError(f"face {bad} references a vertex outside [0, {n})")
        degenerate = (
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        )
        if degenerate.any():
            raise StructuralError(f"degenerate face {int(np.argmax(degenerate))}: repeated vertex index")
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0)
    return graph_from_edges(positions, edges, faces=faces.astype(np.int32))


def graph_from_edges(positions, edges, faces=None) -> MeshGraph:
    """Build a MeshGraph from an explicit edge list (duplicates allowed)."""
    positions = np.ascontiguousarray(positions, dtype=np.float64)
    n = positions.shape[0]
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size:
        if edges.min() < 0 or edges.max() >= n:
            raise StructuralError("edge endpoint outside vertex range")
        keep = edges[:, 0] != edges[:, 1]  # self loops carry no structure
        edges = edges[keep]
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(rows.shape[0], dtype=np.float64)
    adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    adj.data[:] = 1.0  # collapse duplicate entries to 0/1
    adj.sort_indices()
    degrees = np.asarray(adj.sum(axis=1)).ravel()
    if faces is None:
        faces = np.zeros((0, 3), dtype=np.int32)
    return MeshGraph(positions=positions, faces=faces, adjacency=adj, degrees=degrees)


def laplacian(g: MeshGraph) -> Laplacian:
    """The unnormalized Laplacian: degree matrix minus adjacency."""
    mat = (g.degree_matrix() - g.adjacency).tocsr()
    mat.sort_indices()
    return Laplacian(matrix=mat)


def eigendecompose(l: Laplacian, k: int) -> Spectrum:
    """The k smallest eigenpairs of a Laplacian, ascending, sign-fixed.

    Dense symmetric solve: tridiagonal reduction plus QL iteration for the
    full spectrum, or the subset variant of the same reduction when k < |V|
    (identical results to rounding, much cheaper on the 4023-vertex
    template). Eigenvalue clamping and the sign convention make the result
    deterministic.

    Raises:
        ArgumentError: k outside [1, |V|].
        NumericalError: the eigensolver failed to converge.
    """
    n = l.n_vertices
    if not 1 <= k <= n:
        raise ArgumentError(f"k must be in [1, {n}], got {k}")
    dense = l.matrix.toarray()
    try:
        if k == n:
            eigenvalues, eigenvectors = scipy.linalg.eigh(dense, driver="ev")
        else:
            eigenvalues, eigenvectors = scipy.linalg.eigh(
                dense, driver="evr", subset_by_index=[0, k - 1])
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalError(f"eigendecomposition failed to converge: {exc}") from exc
    eigenvalues = eigenvalues[:k].copy()
    eigenvectors = eigenvectors[:, :k].copy()
    small_negative = (eigenvalues < 0) & (eigenvalues > -ZERO_EIGENVALUE_TOL)
    eigenvalues[small_negative] = 0.0
    if (eigenvalues < 0).any():
        worst = float(eigenvalues.min())
        raise NumericalError(f"eigenvalue {worst:g} below the PSD tolerance")
    _fix_signs(eigenvectors)
    return Spectrum(eigenvalues=eigenvalues, eigenvectors=eigenvectors)


def _fix_signs(vectors: np.ndarray) -> None:
    """Flip columns in place so the first significant component is positive."""
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        significant = np.abs(col) > SIGN_CONVENTION_TOL
        if significant.any():
            lead = col[np.argmax(significant)]
            if lead < 0:
                col *= -1.0


def lambda_max(l: Laplacian) -> float:
    """Exact largest eigenvalue of a Laplacian (dense, top value only)."""
    n = l.n_vertices
    values = scipy.linalg.eigh(l.matrix.toarray(), driver="evr",
                               subset_by_index=[n - 1, n - 1], eigvals_only=True)
    return float(values[0])


def scaled_laplacian(l: Laplacian, lam_max: float) -> Laplacian:
    """Rescale so the spectrum lands in [-1, 1]: 2 L / lambda_max - I.

    Raises:
        ArgumentError: lam_max is not positive.
    """
    if not lam_max > 0:
        raise ArgumentError(f"lambda_max must be positive, got {lam_max}")
    n = l.n_vertices
    mat = (l.matrix * (2.0 / lam_max) - sp.identity(n, format="csr")).tocsr()
    mat.sort_indices()
    return Laplacian(matrix=mat)
