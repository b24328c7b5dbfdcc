"""Triangle mesh ingestion and topology utilities.

Handles Wavefront OBJ round-tripping (quads are split into triangle pairs),
area-weighted vertex normals, watertightness checks, unique edge extraction
with lengths, and deterministic farthest-point subsampling used to build the
coarse token templates.

All positions are meters. OBJ text is ASCII with 1-based ``v``/``f`` records;
``#`` comments and unknown record types are ignored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ParseError


@dataclass
class TriMesh:
    """Triangular surface mesh with lazily computed vertex normals."""

    positions: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int32
    non_manifold: bool = False  # set by load_obj when an edge has >2 faces
    _normals: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return self.positions.shape[0]

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    @property
    def normals(self) -> np.ndarray:
        """Per-vertex unit normals, area-weighted over incident faces."""
        if self._normals is None:
            self._normals = vertex_normals(self.positions, self.faces)
        return self._normals

    def with_positions(self, positions: np.ndarray) -> "TriMesh":
        """Same topology, new vertex positions (normals recomputed lazily)."""
        return TriMesh(
            positions=np.ascontiguousarray(positions, dtype=np.float64),
            faces=self.faces,
            non_manifold=self.non_manifold,
        )


@dataclass(frozen=True)
class EdgeSet:
    """Unique undirected edges of a mesh and their current lengths."""

    edges: np.ndarray  # (E, 2) int32, i < j, lexicographically sorted
    lengths: np.ndarray  # (E,) float64, meters

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]


@dataclass(frozen=True)
class SubsampleMap:
    """Result of uniform subsampling: which vertices were kept.

    ``kept_indices`` is strictly increasing; ``coarse_faces`` re-triangulates
    the surviving vertices by nearest-kept-vertex projection and is only used
    for visualization.
    """

    kept_indices: np.ndarray  # (V',) int32
    coarse_faces: np.ndarray  # (F', 3) int32 over coarse indices

    @property
    def n_kept(self) -> int:
        return self.kept_indices.shape[0]


def vertex_normals(positions: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals; isolated vertices get +z."""
    normals = np.zeros_like(positions)
    if faces.size:
        p0 = positions[faces[:, 0]]
        e1 = positions[faces[:, 1]] - p0
        e2 = positions[faces[:, 2]] - p0
        face_n = np.cross(e1, e2)  # magnitude = 2 * area, the weighting
        for c in range(3):
            np.add.at(normals, faces[:, c], face_n)
    norms = np.linalg.norm(normals, axis=1)
    degenerate = norms < 1e-30
    normals[degenerate] = (0.0, 0.0, 1.0)
    norms[degenerate] = 1.0
    return normals / norms[:, None]


def load_obj(source) -> TriMesh:
    """Parse OBJ text (str or bytes) into a TriMesh.

    Quad faces are split along the 0-2 diagonal into two triangles. Indices
    are 1-based; anything malformed raises :class:`ParseError` naming the
    line. Non-manifold connectivity is accepted but flagged on the mesh.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    positions: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    pending: list[tuple[int, list[int]]] = []  # faces checked after all v records
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError(f"line {lineno}: vertex record needs 3 coordinates")
            try:
                positions.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError as exc:
                raise ParseError(f"line {lineno}: bad vertex coordinate: {exc}") from exc
        elif tag == "f":
            if len(parts) not in (4, 5):
                raise ParseError(f"line {lineno}: face record needs 3 or 4 indices")
            idx = []
            for token in parts[1:]:
                head = token.split("/", 1)[0]
                try:
                    value = int(head)
                except ValueError as exc:
                    raise ParseError(f"line {lineno}: bad face index {token!r}") from exc
                if value < 1:
                    raise ParseError(f"line {lineno}: face indices must be positive (1-based)")
                idx.append(value - 1)
            pending.append((lineno, idx))
        # other record types (vn, vt, o, g, usemtl, s, mtllib) are ignored
    n = len(positions)
    for lineno, idx in pending:
        for value in idx:
            if value >= n:
                raise ParseError(f"line {lineno}: face index {value + 1} exceeds vertex count {n}")
        if len(idx) == 3:
            faces.append((idx[0], idx[1], idx[2]))
        else:
            faces.append((idx[0], idx[1], idx[2]))
            faces.append((idx[0], idx[2], idx[3]))
    pos = np.array(positions, dtype=np.float64).reshape(n, 3)
    fac = np.array(faces, dtype=np.int32).reshape(len(faces), 3)
    mesh = TriMesh(positions=pos, faces=fac)
    counts = _edge_face_counts(fac)
    mesh.non_manifold = bool(counts.size and counts.max() > 2)
    return mesh


def save_obj(mesh: TriMesh) -> str:
    """Serialize to OBJ text; float repr round-trips bit-exactly."""
    lines = []
    for x, y, z in mesh.positions:
        lines.append(f"v {float(x)!r} {float(y)!r} {float(z)!r}")
    for i, j, k in mesh.faces:
        lines.append(f"f {i + 1} {j + 1} {k + 1}")
    return "\n".join(lines) + "\n"


def _unique_edges(faces: np.ndarray) -> np.ndarray:
    if faces.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0)
    e = np.sort(e.astype(np.int64), axis=1)
    e = np.unique(e, axis=0)
    return e


def _edge_face_counts(faces: np.ndarray) -> np.ndarray:
    if faces.size == 0:
        return np.zeros(0, dtype=np.int64)
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0)
    e = np.sort(e.astype(np.int64), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return counts


def edge_set(mesh: TriMesh) -> EdgeSet:
    """Every undirected face edge exactly once, with its current length."""
    edges = _unique_edges(mesh.faces)
    lengths = np.linalg.norm(
        mesh.positions[edges[:, 0]] - mesh.positions[edges[:, 1]], axis=1
    )
    return EdgeSet(edges=edges.astype(np.int32), lengths=lengths)


def is_watertight(mesh: TriMesh) -> bool:
    """True iff every edge is shared by exactly two faces."""
    counts = _edge_face_counts(mesh.faces)
    return bool(counts.size) and bool((counts == 2).all())


def subsample_to_count(mesh: TriMesh, n_keep: int, seed: int) -> SubsampleMap:
    """Keep exactly ``n_keep`` vertices by farthest-point sampling.

    The walk starts at vertex ``seed mod V`` and repeatedly adds the vertex
    farthest from the kept set (ties broken by lowest index), so the result
    is deterministic in (mesh, n_keep, seed).
    """
    n = mesh.n_vertices
    if not 1 <= n_keep <= n:
        raise ArgumentError(f"n_keep must be in [1, {n}], got {n_keep}")
    start = seed % n
    kept = [start]
    dist = np.linalg.norm(mesh.positions - mesh.positions[start], axis=1)
    for _ in range(n_keep - 1):
        nxt = int(np.argmax(dist))
        kept.append(nxt)
        np.minimum(dist, np.linalg.norm(mesh.positions - mesh.positions[nxt], axis=1), out=dist)
    kept_sorted = np.array(sorted(kept), dtype=np.int32)
    coarse_faces = _project_faces(mesh, kept_sorted)
    return SubsampleMap(kept_indices=kept_sorted, coarse_faces=coarse_faces)


def subsample_uniform(mesh: TriMesh, factor: int, seed: int) -> SubsampleMap:
    """Uniform surface subsampling keeping ceil(V / factor) vertices.

    Raises:
        ArgumentError: factor < 1 or factor > V.
    """
    if factor < 1:
        raise ArgumentError(f"factor must be >= 1, got {factor}")
    if factor > mesh.n_vertices:
        raise ArgumentError(f"factor {factor} exceeds vertex count {mesh.n_vertices}")
    if factor == 1:
        identity = np.arange(mesh.n_vertices, dtype=np.int32)
        return SubsampleMap(kept_indices=identity, coarse_faces=mesh.faces.copy())
    n_keep = math.ceil(mesh.n_vertices / factor)
    return subsample_to_count(mesh, n_keep, seed)


def _project_faces(mesh: TriMesh, kept: np.ndarray) -> np.ndarray:
    """Re-triangulate over kept vertices by nearest-kept projection."""
    kept_pos = mesh.positions[kept]
    # nearest kept vertex for every original vertex, chunked to bound memory
    owner = np.empty(mesh.n_vertices, dtype=np.int64)
    chunk = 2048
    for lo in range(0, mesh.n_vertices, chunk):
        hi = min(lo + chunk, mesh.n_vertices)
        d = np.linalg.norm(mesh.positions[lo:hi, None, :] - kept_pos[None, :, :], axis=2)
        owner[lo:hi] = np.argmin(d, axis=1)
    mapped = owner[mesh.faces.astype(np.int64)]
    valid = (
        (mapped[:, 0] != mapped[:, 1])
        & (mapped[:, 1] != mapped[:, 2])
        & (mapped[:, 0] != mapped[:, 2])
    )
    mapped = mapped[valid]
    if mapped.size == 0:
        return np.zeros((0, 3), dtype=np.int32)
    canon = np.sort(mapped, axis=1)
    _, first = np.unique(canon, axis=0, return_index=True)
    return mapped[np.sort(first)].astype(np.int32)
