"""Precomputed coarsening hierarchies for the mesh decoder.

Each coarser level is produced by greedy edge collapse (matching passes over
the finer graph) stopped exactly when the requested vertex count is reached,
so level sizes are hit exactly with real vertices and every coarse vertex
keeps at least one child. Coarse positions are child means; coarse edges are
contracted fine edges.

Pyramids persist as a JSON manifest plus a little-endian binary sidecar
(magic ``SGPY``) holding positions, edge lists, and parent arrays.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError, StructuralError
from .graphs import MeshGraph, graph_from_edges

_MAGIC = b"SGPY"
_VERSION = 1


@dataclass(frozen=True)
class GraphPyramid:
    """Coarsened graphs (coarsest first) with child-to-parent maps.

    ``parent_maps[i]`` maps each vertex of ``levels[i + 1]`` (finer) to its
    parent in ``levels[i]`` (coarser).
    """

    levels: tuple[MeshGraph, ...]
    parent_maps: tuple[np.ndarray, ...]

    @property
    def level_sizes(self) -> list[int]:
        return [g.n_vertices for g in self.levels]

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def trace_to_coarsest(self, fine_vertex: int) -> int:
        """Follow parents from the finest level down to the coarsest."""
        v = fine_vertex
        for pmap in reversed(self.parent_maps):
            v = int(pmap[v])
        return v


def build_pyramid(fine: MeshGraph, target_sizes, seed: int = 0) -> GraphPyramid:
    """Coarsen ``fine`` to the exact vertex counts in ``target_sizes``.

    ``target_sizes`` is ascending and ends at ``fine.n_vertices``. Matching
    order is seeded, so the pyramid is deterministic in (fine, sizes, seed).

    Raises:
        StructuralError: sizes not ascending / wrong finest size, or a level
            target is unreachable (fewer merges available than required).
    """
    sizes = [int(s) for s in target_sizes]
    if not sizes:
        raise StructuralError("target_sizes must be non-empty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise StructuralError(f"target_sizes must be strictly ascending, got {sizes}")
    if sizes[-1] != fine.n_vertices:
        raise StructuralError(
            f"finest target {sizes[-1]} must equal the graph size {fine.n_vertices}")
    rng = np.random.default_rng(seed)
    levels_fine_first = [fine]
    maps_fine_first: list[np.ndarray] = []
    current = fine
    for t in reversed(sizes[:-1]):
        coarse, parent = _contract_exact(current, t, rng)
        levels_fine_first.append(coarse)
        maps_fine_first.append(parent)
        current = coarse
    levels = tuple(reversed(levels_fine_first))
    parent_maps = tuple(reversed(maps_fine_first))
    return GraphPyramid(levels=levels, parent_maps=parent_maps)


def _contract_exact(graph: MeshGraph, target: int, rng: np.random.Generator):
    """Contract edges until exactly ``target`` vertices remain."""
    n = graph.n_vertices
    if target >= n:
        raise StructuralError(f"coarse target {target} not below level size {n}")
    adj = _adjacency_lists(graph)
    total_parent = np.arange(n, dtype=np.int64)
    positions = graph.positions.copy()
    weights = np.ones(n)  # children counts, for mean positions
    cur_n = n
    while cur_n > target:
        needed = cur_n - target
        match = np.full(cur_n, -1, dtype=np.int64)
        merges = 0
        for u in rng.permutation(cur_n):
            if merges >= needed:
                break
            if match[u] >= 0:
                continue
            for v in adj[u]:
                if match[v] < 0:
                    match[u] = v
                    match[v] = u
                    merges += 1
                    break
        if merges == 0:
            raise StructuralError(
                f"cannot coarsen level of {cur_n} vertices to {target}: no edges left to collapse")
        # new ids in order of first appearance scanning old ids ascending
        new_id = np.full(cur_n, -1, dtype=np.int64)
        nxt = 0
        for u in range(cur_n):
            if new_id[u] >= 0:
                continue
            new_id[u] = nxt
            if match[u] >= 0:
                new_id[match[u]] = nxt
            nxt += 1
        new_positions = np.zeros((nxt, 3))
        new_weights = np.zeros(nxt)
        np.add.at(new_positions, new_id, positions * weights[:, None])
        np.add.at(new_weights, new_id, weights)
        positions = new_positions / new_weights[:, None]
        weights = new_weights
        adj = _contract_lists(adj, new_id, nxt)
        total_parent = new_id[total_parent]
        cur_n = nxt
    edges = [(u, v) for u in range(cur_n) for v in adj[u] if u < v]
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    coarse = graph_from_edges(positions, edges)
    return coarse, total_parent


def _adjacency_lists(graph: MeshGraph) -> list[list[int]]:
    indptr, indices = graph.adjacency.indptr, graph.adjacency.indices
    return [indices[indptr[i]:indptr[i + 1]].tolist() for i in range(graph.n_vertices)]


def _contract_lists(adj, new_id, n_new):
    sets: list[set[int]] = [set() for _ in range(n_new)]
    for u, neigh in enumerate(adj):
        nu = new_id[u]
        for v in neigh:
            nv = new_id[v]
            if nu != nv:
                sets[nu].add(int(nv))
    return [sorted(s) for s in sets]


def upsample_signal(pyramid: GraphPyramid, level: int, signal: np.ndarray,
                    weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Learned fully-connected upsampling of a per-vertex signal.

    The same (n_fine, n_coarse) map applies to every feature channel:
    ``out = weight @ signal (+ bias)``. ``signal`` must live on ``level``;
    the output row count follows the weight (normally the next finer level).

    Raises:
        ArgumentError: level out of range or shapes inconsistent.
    """
    if not 0 <= level < pyramid.n_levels:
        raise ArgumentError(f"level must be in [0, {pyramid.n_levels}), got {level}")
    n_coarse = pyramid.level_sizes[level]
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim != 2 or signal.shape[0] != n_coarse:
        raise ArgumentError(f"signal must be ({n_coarse}, F), got {signal.shape}")
    weight = np.asarray(weight, dtype=np.float64)
    if weight.ndim != 2 or weight.shape[1] != n_coarse:
        raise ArgumentError(f"weight must be (n_fine, {n_coarse}), got {weight.shape}")
    out = weight @ signal
    if bias is not None:
        out = out + bias
    return out


def save_pyramid(pyramid: GraphPyramid, base: str | Path) -> None:
    """Write ``<base>.json`` manifest and ``<base>.bin`` sidecar."""
    base = Path(base)
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<HH", _VERSION, pyramid.n_levels)
    for g in pyramid.levels:
        edges = g.edge_array().astype(np.uint32)
        blob += struct.pack("<QQ", g.n_vertices, edges.shape[0])
        blob += np.ascontiguousarray(g.positions, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(edges, dtype="<u4").tobytes()
    for pmap in pyramid.parent_maps:
        blob += np.ascontiguousarray(pmap, dtype="<u4").tobytes()
    bin_path = base.with_suffix(".bin")
    bin_path.write_bytes(bytes(blob))
    manifest = {
        "format": f"SGPY/{_VERSION}",
        "level_sizes": pyramid.level_sizes,
        "binary": bin_path.name,
    }
    base.with_suffix(".json").write_text(json.dumps(manifest, sort_keys=True) + "\n")


def load_pyramid(base: str | Path) -> GraphPyramid:
    """Read a pyramid written by :func:`save_pyramid`."""
    base = Path(base)
    manifest = json.loads(base.with_suffix(".json").read_text())
    raw = base.parent.joinpath(manifest["binary"]).read_bytes()
    if raw[:4] != _MAGIC:
        raise StructuralError("bad pyramid sidecar magic")
    version, n_levels = struct.unpack_from("<HH", raw, 4)
    if version != _VERSION:
        raise StructuralError(f"unsupported pyramid sidecar version {version}")
    offset = 8
    levels = []
    for _ in range(n_levels):
        n, m = struct.unpack_from("<QQ", raw, offset)
        offset += 16
        pos = np.frombuffer(raw, dtype="<f8", count=n * 3, offset=offset).reshape(n, 3).copy()
        offset += n * 24
        edges = np.frombuffer(raw, dtype="<u4", count=m * 2, offset=offset).reshape(m, 2).astype(np.int64)
        offset += m * 8
        levels.append(graph_from_edges(pos, edges))
    parent_maps = []
    for i in range(n_levels - 1):
        count = levels[i + 1].n_vertices
        pmap = np.frombuffer(raw, dtype="<u4", count=count, offset=offset).astype(np.int64)
        offset += count * 4
        parent_maps.append(pmap)
    return GraphPyramid(levels=tuple(levels), parent_maps=tuple(parent_maps))
