"""Structured triangulation of the rectangular reservoir.

The rectangle ``[0, width] x [0, height]`` is cut into ``nx * ny`` squares
and every square into two right triangles.  Boundary edges carry one tag:

* ``"S"`` on the free surface side,
* ``"C<k>"`` / ``"T<k>"`` on the collector / injector span of pump ``k``
  (1-based),
* ``"N"`` everywhere else.

Quadratic (P2) degrees of freedom are numbered vertices first, then one node
per unique edge (``n_vertices + edge_id``).  Linear (P1) pressure dofs are the
vertices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import LayoutError, ParameterError, QueryError, RecircError

SIDES = ("bottom", "right", "top", "left")

OUTWARD_NORMALS = {
    "bottom": np.array([0.0, -1.0]),
    "right": np.array([1.0, 0.0]),
    "top": np.array([0.0, 1.0]),
    "left": np.array([-1.0, 0.0]),
}

_GEOM_TOL = 1e-9


def _side_length(side: str, width: float, height: float) -> float:
    return width if side in ("bottom", "top") else height


@dataclass(frozen=True)
class Span:
    """Interval ``[start, end]`` (m) along one side of the rectangle.

    Bottom/top spans are measured along x, left/right spans along y.
    """

    side: str
    start: float
    end: float

    def __post_init__(self):
        if self.side not in SIDES:
            raise LayoutError(f"unknown side {self.side!r}; expected one of {SIDES}")
        if not self.end > self.start:
            raise LayoutError(f"span on {self.side} has non-positive length: [{self.start}, {self.end}]")

    @property
    def length(self) -> float:
        return self.end - self.start

    def overlaps(self, other: "Span") -> bool:
        return self.side == other.side and self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class PumpPair:
    collector: Span
    injector: Span

    def __post_init__(self):
        if self.collector == self.injector:
            raise LayoutError("collector and injector spans of a pair must differ")


@dataclass(frozen=True)
class PumpLayout:
    pairs: tuple[PumpPair, ...] = ()
    surface_side: str = "top"

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        if self.surface_side not in SIDES:
            raise LayoutError(f"unknown surface side {self.surface_side!r}")
        spans = self.spans()
        for i, (_, a) in enumerate(spans):
            for _, b in spans[i + 1:]:
                if a.overlaps(b):
                    raise LayoutError(f"spans overlap: {a} and {b}")

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def spans(self) -> list[tuple[str, Span]]:
        out = []
        for k, pair in enumerate(self.pairs, start=1):
            out.append((f"C{k}", pair.collector))
            out.append((f"T{k}", pair.injector))
        return out

    def check_fits(self, width: float, height: float) -> None:
        for tag, span in self.spans():
            length = _side_length(span.side, width, height)
            if not (span.start > 0.0 and span.end < length):
                raise LayoutError(f"span {tag} {span} does not lie strictly inside its side (length {length})")


def default_layout(width: float = 16.0, height: float = 19.0) -> PumpLayout:
    """Four pairs, mirror-symmetric about the vertical mid-line.

    Collectors are 1 m spans in the upper third of the lateral walls, at two
    heights; injectors are 1 m spans on the bottom.  Odd pairs use the upper
    collectors (pair 1 left, pair 3 its mirror image), even pairs the lower
    ones (pair 2 left, pair 4 its mirror image).  Positions are those used on
    the 16 x 19 m reservoir, rescaled for other domain sizes.
    """
    sy = height / 19.0
    sx = width / 16.0

    def c(side, y):
        return Span(side, (y - 0.5) * sy, (y + 0.5) * sy)

    def t(x):
        return Span("bottom", (x - 0.5) * sx, (x + 0.5) * sx)

    pairs = (
        PumpPair(c("left", 17.5), t(2.5)),
        PumpPair(c("left", 14.5), t(5.5)),
        PumpPair(c("right", 17.5), t(16.0 - 2.5)),
        PumpPair(c("right", 14.5), t(16.0 - 5.5)),
    )
    return PumpLayout(pairs=pairs, surface_side="top")


@dataclass(frozen=True, eq=False)
class CellIndex:
    """Uniform background grid: bin ``(i, j)`` lists triangles whose bounding
    box touches it, padded with ``-1``, in increasing triangle id."""

    nbx: int
    nby: int
    dx: float
    dy: float
    bins: np.ndarray

    def bin_of(self, points: np.ndarray) -> np.ndarray:
        i = np.clip(np.floor(points[:, 0] / self.dx).astype(np.int64), 0, self.nbx - 1)
        j = np.clip(np.floor(points[:, 1] / self.dy).astype(np.int64), 0, self.nby - 1)
        return j * self.nbx + i


@dataclass(frozen=True, eq=False)
class Mesh:
    width: float
    height: float
    h: float
    nx: int
    ny: int
    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    triangle_edges: np.ndarray
    boundary_edges: np.ndarray
    boundary_edge_ids: np.ndarray
    boundary_tags: tuple[str, ...]
    boundary_sides: tuple[str, ...]
    layout: PumpLayout
    cell_index: CellIndex = field(repr=False)
    # per-triangle affine data for point location
    _origin: np.ndarray = field(repr=False)
    _inv_jac: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_midpoint_nodes(self) -> np.ndarray:
        return self.n_vertices + np.arange(self.n_edges)

    @property
    def tags(self) -> set[str]:
        return set(self.boundary_tags)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def boundary_edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.boundary_edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def tag_mask(self, tags: str | Iterable[str]) -> np.ndarray:
        wanted = {tags} if isinstance(tags, str) else set(tags)
        unknown = wanted - self.tags
        if unknown:
            raise QueryError(f"unknown boundary tag(s): {sorted(unknown)}")
        return np.array([t in wanted for t in self.boundary_tags], dtype=bool)


@dataclass(frozen=True, eq=False)
class DofMap:
    scalar_q2_count: int
    scalar_q1_count: int
    cell_dofs: np.ndarray           # (T, 6): 3 vertices then edges opposite vertex 0, 1, 2
    boundary_edge_dofs: np.ndarray  # (B, 3): start, end, midpoint
    boundary_dofs: dict[str, np.ndarray]
    node_coords: np.ndarray         # (scalar_q2_count, 2)

    @property
    def vector_q2_count(self) -> int:
        return 2 * self.scalar_q2_count

    @property
    def all_boundary_dofs(self) -> np.ndarray:
        return np.unique(self.boundary_edge_dofs)

    def dofs_for(self, tags: str | Iterable[str]) -> np.ndarray:
        wanted = [tags] if isinstance(tags, str) else list(tags)
        try:
            parts = [self.boundary_dofs[t] for t in wanted]
        except KeyError as exc:
            raise QueryError(f"unknown boundary tag {exc.args[0]!r}") from None
        return np.unique(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)


def _grid_count(length: float, h: float, name: str) -> int:
    n = int(round(length / h))
    if n < 1 or abs(n * h - length) > 1e-8 * max(length, 1.0):
        raise ParameterError(f"h = {h} does not divide the {name} {length}")
    return n


def _snap_layout(layout: PumpLayout, hx: float, hy: float, width: float, height: float) -> PumpLayout:
    def snap(span: Span) -> Span:
        step = hx if span.side in ("bottom", "top") else hy
        start = round(span.start / step) * step
        end = round(span.end / step) * step
        if not end > start:
            raise LayoutError(f"span {span} collapses to zero length after snapping to the grid")
        return Span(span.side, start, end)

    pairs = tuple(PumpPair(snap(p.collector), snap(p.injector)) for p in layout.pairs)
    try:
        snapped = PumpLayout(pairs=pairs, surface_side=layout.surface_side)
    except LayoutError as exc:
        raise LayoutError(f"snapping to the grid broke the layout: {exc}") from None
    snapped.check_fits(width, height)
    return snapped


def _structured_triangles(nx: int, ny: int, pattern: str) -> np.ndarray:
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i = i.ravel()
    j = j.ravel()
    a = j * (nx + 1) + i
    b = a + 1
    c = a + nx + 2
    d = a + nx + 1
    if pattern == "uniform":
        slash = np.ones_like(a, dtype=bool)
    elif pattern == "symmetric":
        # diagonals flip across both mid-lines so that every corner square is
        # bisected through the domain corner and the mesh mirrors left/right
        left = 2 * i + 1 <= nx
        bottom = 2 * j + 1 <= ny
        slash = left == bottom
    else:
        raise ParameterError(f"unknown triangulation pattern {pattern!r}")
    tris = np.empty((2 * len(a), 3), dtype=np.int64)
    t0 = np.where(slash[:, None], np.stack([a, b, c], 1), np.stack([a, b, d], 1))
    t1 = np.where(slash[:, None], np.stack([a, c, d], 1), np.stack([b, c, d], 1))
    tris[0::2] = t0
    tris[1::2] = t1
    return tris


def build_mesh_from_arrays(vertices, triangles, width, height, h, nx, ny, layout: PumpLayout) -> Mesh:
    """Finish a mesh from raw arrays: edges, boundary tags, point-location index.

    ``build_rect_mesh`` is the normal entry point; this is exposed so callers
    can rebuild a mesh with a permuted triangle list.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    p = vertices[triangles]
    signed = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                    - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    if np.any(signed <= 0):
        raise RecircError("triangles must be counter-clockwise with positive area")

    # local edge k joins local vertices k+1 and k+2 (opposite vertex k)
    local = np.stack([triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1)
    flat = local.reshape(-1, 2)
    edges, inverse, counts = np.unique(np.sort(flat, axis=1), axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if np.any(counts > 2):
        raise RecircError("non-manifold mesh: an edge is shared by more than two triangles")
    triangle_edges = inverse.reshape(-1, 3)

    on_boundary = counts[inverse] == 1
    b_oriented = flat[on_boundary]           # counter-clockwise, interior on the left
    b_ids = inverse[on_boundary]
    order = np.argsort(b_ids, kind="stable")
    b_oriented = b_oriented[order]
    b_ids = b_ids[order]

    mids = 0.5 * (vertices[b_oriented[:, 0]] + vertices[b_oriented[:, 1]])
    tol = _GEOM_TOL * max(width, height)
    sides = []
    for x, y in mids:
        if abs(y) <= tol:
            sides.append("bottom")
        elif abs(x - width) <= tol:
            sides.append("right")
        elif abs(y - height) <= tol:
            sides.append("top")
        elif abs(x) <= tol:
            sides.append("left")
        else:
            raise RecircError(f"boundary edge at {(x, y)} is not on the rectangle")

    spans = layout.spans()
    tags = []
    for (x, y), side in zip(mids, sides):
        s = x if side in ("bottom", "top") else y
        tag = "S" if side == layout.surface_side else "N"
        for name, span in spans:
            if span.side == side and span.start < s < span.end:
                tag = name
                break
        tags.append(tag)

    # per-triangle inverse Jacobians for barycentric coordinates
    origin = p[:, 0]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns
    inv_jac = np.linalg.inv(jac)

    hx = width / nx
    hy = height / ny
    lo = p.min(axis=1)
    hi = p.max(axis=1)
    i0 = np.clip(np.floor((lo[:, 0] - tol) / hx).astype(int), 0, nx - 1)
    i1 = np.clip(np.floor((hi[:, 0] + tol) / hx).astype(int), 0, nx - 1)
    j0 = np.clip(np.floor((lo[:, 1] - tol) / hy).astype(int), 0, ny - 1)
    j1 = np.clip(np.floor((hi[:, 1] + tol) / hy).astype(int), 0, ny - 1)
    lists: list[list[int]] = [[] for _ in range(nx * ny)]
    for t in range(len(triangles)):
        for jj in range(j0[t], j1[t] + 1):
            for ii in range(i0[t], i1[t] + 1):
                lists[jj * nx + ii].append(t)
    width_c = max(len(lst) for lst in lists)
    bins = np.full((nx * ny, width_c), -1, dtype=np.int64)
    for k, lst in enumerate(lists):
        bins[k, :len(lst)] = lst
    index = CellIndex(nbx=nx, nby=ny, dx=hx, dy=hy, bins=bins)

    return Mesh(
        width=float(width), height=float(height), h=float(h), nx=nx, ny=ny,
        vertices=vertices, triangles=triangles, edges=edges, triangle_edges=triangle_edges,
        boundary_edges=b_oriented, boundary_edge_ids=b_ids, boundary_tags=tuple(tags),
        boundary_sides=tuple(sides), layout=layout, cell_index=index,
        _origin=origin, _inv_jac=inv_jac,
    )


def build_rect_mesh(width: float, height: float, h: float, layout: PumpLayout | None = None,
                    pattern: str = "symmetric") -> Mesh:
    """Triangulate ``[0, width] x [0, height]`` with squares of side ``h``.

    ``pattern="symmetric"`` flips the diagonal across both mid-lines (mirror
    symmetric mesh, corner squares cut through the corner); ``"uniform"`` uses
    lower-left to upper-right diagonals everywhere.  Pump spans are snapped to
    the nearest grid nodes.
    """
    if not (width > 0 and height > 0):
        raise ParameterError("width and height must be positive")
    if not h > 0:
        raise ParameterError(f"mesh size h must be positive, got {h}")
    if layout is None:
        layout = PumpLayout()
    nx = _grid_count(width, h, "width")
    ny = _grid_count(height, h, "height")
    hx = width / nx
    hy = height / ny
    layout.check_fits(width, height)
    snapped = _snap_layout(layout, hx, hy, width, height)

    xs = np.arange(nx + 1) * hx
    ys = np.arange(ny + 1) * hy
    xs[-1] = width
    ys[-1] = height
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    triangles = _structured_triangles(nx, ny, pattern)
    return build_mesh_from_arrays(vertices, triangles, width, height, h, nx, ny, snapped)


def build_dofmap(mesh: Mesh) -> DofMap:
    nv = mesh.n_vertices
    cell_dofs = np.concatenate([mesh.triangles, nv + mesh.triangle_edges], axis=1)
    b_dofs = np.column_stack([mesh.boundary_edges, nv + mesh.boundary_edge_ids])
    boundary = {}
    tags = np.array(mesh.boundary_tags)
    for tag in sorted(set(mesh.boundary_tags)):
        boundary[tag] = np.unique(b_dofs[tags == tag])
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    coords = np.concatenate([mesh.vertices, mids], axis=0)
    return DofMap(
        scalar_q2_count=nv + mesh.n_edges,
        scalar_q1_count=nv,
        cell_dofs=cell_dofs,
        boundary_edge_dofs=b_dofs,
        boundary_dofs=boundary,
        node_coords=coords,
    )


def boundary_measure(mesh: Mesh, tag: str | Iterable[str]) -> float:
    """Total length of boundary edges carrying ``tag`` (or any of several tags)."""
    mask = mesh.tag_mask(tag)
    return float(np.sum(mesh.boundary_edge_lengths()[mask]))


@dataclass(frozen=True)
class PointLocation:
    inside: bool
    triangle: int | None
    barycentric: np.ndarray | None
    boundary_point: np.ndarray | None = None


def locate_points(mesh: Mesh, points: np.ndarray, tol: float = 1e-12):
    """Vectorised point location.

    Points outside the rectangle are replaced by their closest boundary point
    and located there.  Returns ``(triangles, barycentric, inside, located)``
    where ``located`` are the (possibly clamped) coordinates actually used.
    Ties go to the lowest triangle id.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    clamped = np.column_stack([np.clip(pts[:, 0], 0.0, mesh.width), np.clip(pts[:, 1], 0.0, mesh.height)])
    inside = np.all(clamped == pts, axis=1)

    cand = mesh.cell_index.bins[mesh.cell_index.bin_of(clamped)]
    n = len(pts)
    tri = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    for c in range(cand.shape[1]):
        todo = (tri < 0) & (cand[:, c] >= 0)
        if not np.any(todo):
            continue
        t = cand[todo, c]
        rel = clamped[todo] - mesh._origin[t]
        l12 = np.einsum("nij,nj->ni", mesh._inv_jac[t], rel)
        lam = np.column_stack([1.0 - l12[:, 0] - l12[:, 1], l12])
        ok = lam.min(axis=1) >= -tol
        idx = np.flatnonzero(todo)[ok]
        tri[idx] = t[ok]
        bary[idx] = lam[ok]
    if np.any(tri < 0):
        raise RecircError(f"point location failed for {int(np.sum(tri < 0))} point(s)")
    bary = np.clip(bary, 0.0, 1.0)
    bary /= bary.sum(axis=1, keepdims=True)
    return tri, bary, inside, clamped


def locate_point(mesh: Mesh, point: Sequence[float]) -> PointLocation:
    tri, bary, inside, located = locate_points(mesh, np.asarray(point, dtype=float)[None, :])
    if inside[0]:
        return PointLocation(True, int(tri[0]), bary[0])
    return PointLocation(False, None, None, located[0])
