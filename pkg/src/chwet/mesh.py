"""
Conforming triangle meshes with labeled boundaries.

Triangles are stored counterclockwise with the convention that local vertex 0
is the *newest vertex*: the edge opposite to it, ``(t[1], t[2])``, is the
refinement edge used by newest-vertex bisection.  The bisection hierarchy is
kept per vertex: ``vertex_parents[v]`` holds the endpoints of the edge that
was split to create ``v`` (``-1`` for vertices of the initial mesh).  That is
enough to undo any bisection and guarantees coarsening never goes past the
initial mesh.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np


class BoundaryTag(enum.IntEnum):
    SOLID = 0
    OPEN = 1


@dataclass(frozen=True)
class BoundaryLabel:
    """Tag plus an integer sub-id used to assign piecewise data (e.g. angles)."""

    tag: BoundaryTag
    subid: int = 0

    @classmethod
    def solid(cls, subid: int = 0) -> "BoundaryLabel":
        return cls(BoundaryTag.SOLID, subid)

    @classmethod
    def open(cls, subid: int = 0) -> "BoundaryLabel":
        return cls(BoundaryTag.OPEN, subid)


class MeshError(ValueError):
    """Base class for invalid meshes."""


class InvertedTriangleError(MeshError):
    pass


class NonConformingMeshError(MeshError):
    pass


class UnlabeledBoundaryError(MeshError):
    pass


class MeshParseError(MeshError):
    pass


SIDES = ("bottom", "right", "top", "left")


def _edge_keys(a, b, n):
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    return lo * n + hi


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D triangle mesh.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise, newest vertex first
    boundary_edges : (K, 2) int array, oriented with the domain on the left
    boundary_tags, boundary_subids : (K,) int arrays
    vertex_parents : (N, 2) int array, bisection parents or -1
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    boundary_subids: np.ndarray
    vertex_parents: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.ascontiguousarray(self.vertices, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "triangles", np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "boundary_edges", np.ascontiguousarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "boundary_tags", np.ascontiguousarray(self.boundary_tags, dtype=np.int64).ravel())
        object.__setattr__(self, "boundary_subids", np.ascontiguousarray(self.boundary_subids, dtype=np.int64).ravel())
        if self.vertex_parents is None:
            parents = -np.ones((len(self.vertices), 2), dtype=np.int64)
        else:
            parents = np.ascontiguousarray(self.vertex_parents, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "vertex_parents", parents)
        for arr in (self.vertices, self.triangles, self.boundary_edges, self.boundary_tags,
                    self.boundary_subids, self.vertex_parents):
            arr.setflags(write=False)

    def __repr__(self):
        return (f"Mesh({self.n_vertices} vertices, {self.n_triangles} triangles, "
                f"{len(self.boundary_edges)} boundary edges)")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def has_forest(self) -> bool:
        return bool((self.vertex_parents >= 0).any())

    def signed_areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            p = self.vertices[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def area(self) -> float:
        return float(self.signed_areas().sum())

    def edges(self):
        """Unique edges and the triangle-to-edge map.

        Local edge ``i`` of a triangle is the edge opposite local vertex ``i``.
        Returns ``(edges (E, 2), tri2edge (M, 3))``.
        """
        if "edges" not in self._cache:
            t = self.triangles
            a = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
            b = np.concatenate([t[:, 2], t[:, 0], t[:, 1]])
            keys = _edge_keys(a, b, self.n_vertices)
            uniq, inv = np.unique(keys, return_inverse=True)
            edges = np.column_stack([uniq // self.n_vertices, uniq % self.n_vertices])
            tri2edge = inv.reshape(3, -1).T.copy()
            self._cache["edges"] = (edges, tri2edge)
        return self._cache["edges"]

    def edge_lengths(self) -> np.ndarray:
        """Per-triangle lengths of the three local edges, shape (M, 3)."""
        p = self.vertices[self.triangles]
        return np.stack([
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        ], axis=1)

    def boundary_edge_mask(self, labels=None) -> np.ndarray:
        """Boolean mask over boundary edges.

        ``labels`` may be None (all), a :class:`BoundaryTag`, a
        :class:`BoundaryLabel`, or an iterable of those.
        """
        if labels is None:
            return np.ones(len(self.boundary_edges), dtype=bool)
        if isinstance(labels, (BoundaryTag, BoundaryLabel)):
            labels = [labels]
        mask = np.zeros(len(self.boundary_edges), dtype=bool)
        for lab in labels:
            if isinstance(lab, BoundaryLabel):
                mask |= (self.boundary_tags == lab.tag) & (self.boundary_subids == lab.subid)
            else:
                mask |= self.boundary_tags == int(lab)
        return mask

    def boundary_vertices(self, labels=None) -> np.ndarray:
        return np.unique(self.boundary_edges[self.boundary_edge_mask(labels)])

    def perimeter(self, labels=None) -> float:
        e = self.boundary_edges[self.boundary_edge_mask(labels)]
        return float(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1).sum())

    def validate(self) -> "Mesh":
        check_mesh(self)
        return self


def check_mesh(mesh: Mesh) -> None:
    """Raise a :class:`MeshError` subclass if any mesh invariant fails."""
    nv = mesh.n_vertices
    t = mesh.triangles
    be = mesh.boundary_edges
    if t.size and (t.min() < 0 or t.max() >= nv):
        raise MeshError("triangle vertex index out of range")
    if be.size and (be.min() < 0 or be.max() >= nv):
        raise MeshError("boundary edge vertex index out of range")
    if not (len(mesh.boundary_tags) == len(be) == len(mesh.boundary_subids)):
        raise MeshError("boundary label arrays do not match boundary edges")
    if not np.isin(mesh.boundary_tags, [int(x) for x in BoundaryTag]).all():
        raise MeshError("unknown boundary tag")
    areas = mesh.signed_areas()
    bad = np.flatnonzero(areas <= 0)
    if bad.size:
        raise InvertedTriangleError(
            f"triangle {bad[0]} has non-positive signed area {areas[bad[0]]:.3e} (clockwise or degenerate)")

    t = mesh.triangles
    a = np.concatenate([t[:, 1], t[:, 2], t[:, 0]])
    b = np.concatenate([t[:, 2], t[:, 0], t[:, 1]])
    keys = _edge_keys(a, b, nv)
    uniq, counts = np.unique(keys, return_counts=True)
    if (counts > 2).any():
        k = uniq[counts > 2][0]
        raise NonConformingMeshError(f"edge ({k // nv}, {k % nv}) shared by more than two triangles")
    # Directed half-edges: an interior edge must appear once in each direction.
    directed = a.astype(np.int64) * nv + b
    reverse = b.astype(np.int64) * nv + a
    if len(np.unique(directed)) != len(directed):
        raise NonConformingMeshError("inconsistent triangle orientation across an edge")
    hull = np.sort(directed[~np.isin(directed, reverse)])

    bkeys = be[:, 0] * nv + be[:, 1]
    if len(np.unique(_edge_keys(be[:, 0], be[:, 1], nv))) != len(be):
        raise MeshError("boundary edge listed twice")
    bkeys = np.sort(bkeys)
    if not np.isin(bkeys, hull).all():
        raise NonConformingMeshError("boundary edge list contains an edge that is not on the hull "
                                     "or is oriented clockwise")
    missing = hull[~np.isin(hull, bkeys)]
    if missing.size:
        # A hull edge without a boundary label is either a hanging node or an
        # unlabeled boundary piece; the former shows up as a split edge.
        k = missing[0]
        raise UnlabeledBoundaryError(f"hull edge ({k // nv}, {k % nv}) has no boundary label")


def _orient_boundary(triangles, edges, nv):
    """Flip boundary edges so the domain lies on their left."""
    t = triangles
    directed = np.concatenate([t[:, 1] * nv + t[:, 2], t[:, 2] * nv + t[:, 0], t[:, 0] * nv + t[:, 1]])
    fwd = edges[:, 0] * nv + edges[:, 1]
    flip = ~np.isin(fwd, directed)
    out = edges.copy()
    out[flip] = out[flip, ::-1]
    return out


def _longest_edge_first(vertices, triangles):
    """Rotate each triangle so its longest edge is the refinement edge."""
    p = vertices[triangles]
    lens = np.stack([
        np.sum((p[:, 2] - p[:, 1]) ** 2, axis=1),
        np.sum((p[:, 0] - p[:, 2]) ** 2, axis=1),
        np.sum((p[:, 1] - p[:, 0]) ** 2, axis=1),
    ], axis=1)
    k = np.argmax(lens, axis=1)
    idx = (k[:, None] + np.arange(3)[None, :]) % 3
    return np.take_along_axis(triangles, idx, axis=1)


def from_arrays(vertices, triangles, boundary_edges, tags, subids, *, reorder=True) -> Mesh:
    """Build and validate a mesh from raw arrays (no refinement history).

    Boundary edges are reoriented to match the triangles, and each triangle is
    rotated so that its longest edge becomes the refinement edge.
    """
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    boundary_edges = np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2)
    if reorder and len(triangles):
        triangles = _longest_edge_first(vertices, triangles)
    mesh = Mesh(vertices, triangles, boundary_edges, tags, subids)
    # orientation errors must surface as such before boundary matching
    areas = mesh.signed_areas()
    if (areas <= 0).any():
        check_mesh(mesh)
    if len(boundary_edges):
        mesh = Mesh(vertices, triangles, _orient_boundary(triangles, boundary_edges, len(vertices)),
                    tags, subids)
    check_mesh(mesh)
    return mesh


def generate_rectangle(lx: float, ly: float, nx: int, ny: int,
                       labels: Mapping[str, BoundaryLabel] | BoundaryLabel | None = None,
                       origin=(0.0, 0.0)) -> Mesh:
    """Structured mesh of ``[0, lx] x [0, ly]`` with ``2 nx ny`` triangles.

    Each cell is split along its ``(0,0)-(1,1)`` diagonal, which is also the
    refinement edge of both halves.  ``labels`` maps side names
    ('bottom', 'right', 'top', 'left') to boundary labels; missing sides are
    Open.  A single label applies to all four sides.
    """
    if not (lx > 0 and ly > 0):
        raise ValueError(f"rectangle dimensions must be positive, got lx={lx}, ly={ly}")
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)
    if labels is None:
        labels = {}
    if isinstance(labels, BoundaryLabel):
        labels = {s: labels for s in SIDES}
    unknown = set(labels) - set(SIDES)
    if unknown:
        raise ValueError(f"unknown rectangle side(s): {sorted(unknown)}")

    xs = origin[0] + np.linspace(0.0, lx, nx + 1)
    ys = origin[1] + np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    v00, v10, v01, v11 = vid(I, J), vid(I + 1, J), vid(I, J + 1), vid(I + 1, J + 1)
    lower = np.column_stack([v10, v11, v00])
    upper = np.column_stack([v01, v00, v11])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    i = np.arange(nx)
    j = np.arange(ny)
    sides = {
        "bottom": np.column_stack([vid(i, 0), vid(i + 1, 0)]),
        "right": np.column_stack([vid(nx, j), vid(nx, j + 1)]),
        "top": np.column_stack([vid(i + 1, ny), vid(i, ny)])[::-1],
        "left": np.column_stack([vid(0, j + 1), vid(0, j)])[::-1],
    }
    edges, tags, subids = [], [], []
    for s in SIDES:
        lab = labels.get(s, BoundaryLabel.open())
        edges.append(sides[s])
        tags.append(np.full(len(sides[s]), int(lab.tag)))
        subids.append(np.full(len(sides[s]), lab.subid))
    mesh = Mesh(vertices, triangles, np.vstack(edges), np.concatenate(tags), np.concatenate(subids))
    check_mesh(mesh)
    return mesh


def read_mesh(path) -> Mesh:
    """Read the plain-text mesh format (see README)."""
    text = Path(path).read_text()
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        s = raw.split("#", 1)[0].strip()
        if s:
            lines.append((lineno, s.split()))
    pos = 0

    def header(name):
        nonlocal pos
        if pos >= len(lines):
            raise MeshParseError(f"unexpected end of file, expected '{name} <count>'")
        lineno, toks = lines[pos]
        if len(toks) != 2 or toks[0] != name:
            raise MeshParseError(f"line {lineno}: expected '{name} <count>', got {' '.join(toks)!r}")
        try:
            n = int(toks[1])
        except ValueError:
            raise MeshParseError(f"line {lineno}: bad count {toks[1]!r}") from None
        pos += 1
        return n

    def rows(n, width, conv):
        nonlocal pos
        out = []
        for _ in range(n):
            if pos >= len(lines):
                raise MeshParseError("unexpected end of file")
            lineno, toks = lines[pos]
            if len(toks) != width:
                raise MeshParseError(f"line {lineno}: expected {width} values, got {len(toks)}")
            try:
                out.append([conv(x) for x in toks])
            except ValueError:
                raise MeshParseError(f"line {lineno}: cannot parse {' '.join(toks)!r}") from None
            pos += 1
        return out

    nv = header("vertices")
    verts = rows(nv, 2, float)
    nt = header("triangles")
    tris = rows(nt, 3, int)
    nb = header("boundary")
    bnd = rows(nb, 4, int)
    if pos != len(lines):
        raise MeshParseError(f"line {lines[pos][0]}: trailing content")
    bnd = np.asarray(bnd, dtype=np.int64).reshape(-1, 4)
    if bnd.size and not np.isin(bnd[:, 2], [int(x) for x in BoundaryTag]).all():
        raise MeshParseError("unknown boundary tag (expected 0 = solid, 1 = open)")
    return from_arrays(verts, tris, bnd[:, :2], bnd[:, 2], bnd[:, 3])


def import_mesh(path, format: str = "text") -> Mesh:
    if format != "text":
        raise ValueError(f"unsupported mesh format {format!r}")
    return read_mesh(path)


def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as f:
        f.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices.tolist():
            f.write(f"{x!r} {y!r}\n")
        f.write(f"triangles {mesh.n_triangles}\n")
        for t in mesh.triangles:
            f.write(f"{t[0]} {t[1]} {t[2]}\n")
        f.write(f"boundary {len(mesh.boundary_edges)}\n")
        for (i, j), tag, sub in zip(mesh.boundary_edges, mesh.boundary_tags, mesh.boundary_subids):
            f.write(f"{i} {j} {tag} {sub}\n")


def remove_triangles(mesh: Mesh, remove, label: BoundaryLabel) -> Mesh:
    """Delete triangles; newly exposed edges get ``label``.

    Unused vertices are dropped and the refinement history is discarded.
    """
    keep = np.ones(mesh.n_triangles, dtype=bool)
    keep[np.asarray(remove, dtype=np.int64)] = False
    tris = mesh.triangles[keep]
    nv = mesh.n_vertices
    a = np.concatenate([tris[:, 1], tris[:, 2], tris[:, 0]])
    b = np.concatenate([tris[:, 2], tris[:, 0], tris[:, 1]])
    directed = a * nv + b
    reverse = b * nv + a
    hull = ~np.isin(directed, reverse)
    hull_edges = np.column_stack([a[hull], b[hull]])
    old = dict(zip((mesh.boundary_edges[:, 0] * nv + mesh.boundary_edges[:, 1]).tolist(),
                   zip(mesh.boundary_tags.tolist(), mesh.boundary_subids.tolist())))
    tags = np.empty(len(hull_edges), dtype=np.int64)
    subs = np.empty(len(hull_edges), dtype=np.int64)
    for k, key in enumerate((hull_edges[:, 0] * nv + hull_edges[:, 1]).tolist()):
        tags[k], subs[k] = old.get(key, (int(label.tag), label.subid))
    used = np.unique(tris)
    remap = -np.ones(nv, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return from_arrays(mesh.vertices[used], remap[tris], remap[hull_edges], tags, subs, reorder=False)


# ----------------------------------------------------------------------------
# Newest-vertex bisection
# ----------------------------------------------------------------------------

def bisect(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked triangles plus conforming closure.

    Every marked triangle is split at least once across its refinement edge.
    Neighbours are bisected as needed so that no hanging nodes remain; a
    triangle whose three edges end up split is divided into four.
    """
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked,
                                  dtype=np.int64))
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise IndexError("marked triangle id out of range")

    t = mesh.triangles
    edges, tri2edge = mesh.edges()
    split = np.zeros(len(edges), dtype=bool)
    split[tri2edge[marked, 0]] = True
    # closure: any triangle with a split edge must split its refinement edge
    while True:
        need = split[tri2edge].any(axis=1) & ~split[tri2edge[:, 0]]
        if not need.any():
            break
        split[tri2edge[need, 0]] = True

    nv = mesh.n_vertices
    split_ids = np.flatnonzero(split)
    midpoint = -np.ones(len(edges), dtype=np.int64)
    midpoint[split_ids] = nv + np.arange(len(split_ids))
    new_vertices = 0.5 * (mesh.vertices[edges[split_ids, 0]] + mesh.vertices[edges[split_ids, 1]])
    vertices = np.vstack([mesh.vertices, new_vertices])
    parents = np.vstack([mesh.vertex_parents, edges[split_ids]])

    s0 = split[tri2edge[:, 0]]
    s1 = split[tri2edge[:, 1]]
    s2 = split[tri2edge[:, 2]]
    keep = t[~s0]

    a, b, c = t[s0, 0], t[s0, 1], t[s0, 2]
    m = midpoint[tri2edge[s0, 0]]
    m1 = midpoint[tri2edge[s0, 1]]  # on (c, a)
    m2 = midpoint[tri2edge[s0, 2]]  # on (a, b)
    child1 = np.column_stack([m, a, b])   # refinement edge (a, b)
    child2 = np.column_stack([m, c, a])   # refinement edge (c, a)
    s1, s2 = s1[s0], s2[s0]
    pieces = [keep, child1[~s2], child2[~s1]]
    # second-level bisections of the children
    pieces.append(np.column_stack([m2[s2], m[s2], a[s2]]))
    pieces.append(np.column_stack([m2[s2], b[s2], m[s2]]))
    pieces.append(np.column_stack([m1[s1], m[s1], c[s1]]))
    pieces.append(np.column_stack([m1[s1], a[s1], m[s1]]))
    triangles = np.vstack(pieces)

    be = mesh.boundary_edges
    bkey = _edge_keys(be[:, 0], be[:, 1], nv)
    ekey = edges[:, 0] * nv + edges[:, 1]
    eidx = np.searchsorted(ekey, bkey)
    bmid = midpoint[eidx]
    bs = bmid >= 0
    new_be = np.vstack([be[~bs],
                        np.column_stack([be[bs, 0], bmid[bs]]),
                        np.column_stack([bmid[bs], be[bs, 1]])])
    new_tags = np.concatenate([mesh.boundary_tags[~bs], mesh.boundary_tags[bs], mesh.boundary_tags[bs]])
    new_subs = np.concatenate([mesh.boundary_subids[~bs], mesh.boundary_subids[bs], mesh.boundary_subids[bs]])
    return Mesh(vertices, triangles, new_be, new_tags, new_subs, parents)


def coarsen(mesh: Mesh, marked, return_map: bool = False):
    """Undo bisections where every triangle around the bisection vertex is marked.

    A vertex created by bisection is removable when all triangles incident to
    it have it as their newest vertex and there are exactly four of them
    (interior) or two (boundary).  Sibling pairs around removable vertices
    are merged back into their parents.  Vertices of the initial mesh are
    never removed.

    With ``return_map=True`` also returns the indices (into the old vertex
    array) of the surviving vertices, in their new order.
    """
    marked = np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked, dtype=np.int64)
    nv = mesh.n_vertices
    identity = np.arange(nv)
    if marked.size == 0 or not mesh.has_forest:
        return (mesh, identity) if return_map else mesh
    t = mesh.triangles
    is_marked = np.zeros(mesh.n_triangles, dtype=bool)
    is_marked[marked] = True

    valence = np.bincount(t.ravel(), minlength=nv)
    newest_count = np.bincount(t[:, 0], minlength=nv)
    newest_marked = np.bincount(t[is_marked, 0], minlength=nv)
    on_boundary = np.zeros(nv, dtype=bool)
    on_boundary[mesh.boundary_edges.ravel()] = True
    expected = np.where(on_boundary, 2, 4)
    removable = ((mesh.vertex_parents[:, 0] >= 0) & (valence == newest_count)
                 & (newest_marked == newest_count) & (valence == expected))
    if not removable.any():
        return (mesh, identity) if return_map else mesh

    # siblings (m, a, b) and (m, c, a) share a = first[1] = second[2]
    around = np.flatnonzero(removable[t[:, 0]])
    tm = t[around]
    par = mesh.vertex_parents[tm[:, 0]]
    # the first child keeps the parent-edge endpoint in slot 2, the second in slot 1
    is_first = (tm[:, 2] == par[:, 0]) | (tm[:, 2] == par[:, 1])
    c1, c2 = around[is_first], around[~is_first]
    key1 = t[c1, 0] * nv + t[c1, 1]
    key2 = t[c2, 0] * nv + t[c2, 2]
    order2 = np.argsort(key2)
    pos = np.minimum(np.searchsorted(key2[order2], key1), max(len(order2) - 1, 0))
    match = key2[order2][pos] == key1 if len(order2) else np.zeros(len(c1), dtype=bool)
    first = c1[match]
    second = c2[order2[pos[match]]]
    consumed = np.zeros(mesh.n_triangles, dtype=bool)
    consumed[first] = True
    consumed[second] = True
    unpaired = around[~consumed[around]]
    if unpaired.size:
        # not a pure sibling configuration; leave those vertices alone
        removable[t[unpaired, 0]] = False
        ok = removable[t[first, 0]]
        first, second = first[ok], second[ok]
        consumed[:] = False
        consumed[first] = True
        consumed[second] = True
        if not removable.any():
            return (mesh, identity) if return_map else mesh
    # parent of (m, a, b) and (m, c, a) is (a, b, c)
    parent_tris = np.column_stack([t[first, 1], t[first, 2], t[second, 1]])
    triangles = np.vstack([t[~consumed], parent_tris])

    be = mesh.boundary_edges
    rm_b0 = removable[be[:, 0]]
    rm_b1 = removable[be[:, 1]]
    # boundary edges (x, m) and (m, y) merge into (x, y)
    ends_at = be[rm_b1]
    starts_at = be[rm_b0]
    order = np.argsort(starts_at[:, 0])
    nxt = starts_at[order][np.searchsorted(starts_at[order, 0], ends_at[:, 1])]
    merged = np.column_stack([ends_at[:, 0], nxt[:, 1]])
    keep_b = ~(rm_b0 | rm_b1)
    new_be = np.vstack([be[keep_b], merged])
    new_tags = np.concatenate([mesh.boundary_tags[keep_b], mesh.boundary_tags[rm_b1]])
    new_subs = np.concatenate([mesh.boundary_subids[keep_b], mesh.boundary_subids[rm_b1]])

    kept = np.flatnonzero(~removable)
    remap = -np.ones(nv, dtype=np.int64)
    remap[kept] = np.arange(len(kept))
    parents = mesh.vertex_parents[kept]
    has_parent = parents[:, 0] >= 0
    parents = np.where(has_parent[:, None], remap[np.maximum(parents, 0)], -1)
    out = Mesh(mesh.vertices[kept], remap[triangles], remap[new_be], new_tags, new_subs, parents)
    return (out, kept) if return_map else out


def conformity_defects(mesh: Mesh) -> int:
    """Count hanging nodes: vertices lying strictly inside some mesh edge.

    Brute force over vertices and edges; intended for tests on small meshes.
    """
    edges, _ = mesh.edges()
    p = mesh.vertices
    count = 0
    for i, j in edges:
        a, b = p[i], p[j]
        d = b - a
        L2 = d @ d
        w = p - a
        s = (w @ d) / L2
        dist = np.abs(w[:, 0] * d[1] - w[:, 1] * d[0]) / np.sqrt(L2)
        inside = (s > 1e-9) & (s < 1 - 1e-9) & (dist < 1e-12 * np.sqrt(L2) + 1e-14)
        inside[[i, j]] = False
        count += int(inside.sum())
    return count
