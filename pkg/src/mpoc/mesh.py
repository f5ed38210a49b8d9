"""Triangular meshes with tagged boundary segments.

The boundary is split twice: by velocity tags ``G0`` (prescribed data),
``G1`` (Dirichlet control) and ``G2`` (Navier slip), and by rotation tags
``G0`` and ``G3`` (Dirichlet control for the microrotation).  Both splits
share the same ``G0`` arc.

File grammar (``mesh2d v1``)::

    mesh2d v1
    vertices N
    x y            (N lines)
    triangles M
    i j k          (M lines)
    bedges K
    i j VTAG RTAG  (K lines)
    gamma0_origin i

Indices are 0-based.  Blank lines and ``#`` comments are ignored.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

VTAGS = ("G0", "G1", "G2")
RTAGS = ("G0", "G3")


class MeshError(ValueError):
    """Raised when a mesh violates one of its structural invariants."""


class MeshParseError(MeshError):
    """Raised for malformed mesh files; the message carries the line number."""

    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True)
class BoundaryArc:
    """Ordered walk along Gamma_0 starting at the arc origin.

    Attributes
    ----------
    vertices : ndarray of int
        Vertex indices along the arc, starting at the origin.
    edges : ndarray of int
        Boundary-edge indices (rows of ``Mesh.bedges``) in walk order.
    cumulative : ndarray of float
        Arc length from the origin to each entry of ``vertices``.
    ccw : bool
        True when walking away from the origin follows the counterclockwise
        orientation of the boundary.
    """

    vertices: np.ndarray
    edges: np.ndarray
    cumulative: np.ndarray
    ccw: bool

    @property
    def length(self):
        return float(self.cumulative[-1])


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    bedges: np.ndarray
    vtags: np.ndarray
    rtags: np.ndarray
    gamma0_origin: int

    # ------------------------------------------------------------------
    # topology
    @property
    def nv(self):
        return len(self.vertices)

    @property
    def nt(self):
        return len(self.triangles)

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def _edge_data(self):
        t = self.triangles
        # local edge k is opposite local vertex k
        loc = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        flat = np.sort(loc.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(flat, axis=0, return_inverse=True,
                                           return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self):
        """Unique edges as sorted vertex pairs."""
        return self._edge_data[0]

    @property
    def tri_edges(self):
        """(nt, 3) edge index of the edge opposite each local vertex."""
        return self._edge_data[1]

    @property
    def ne(self):
        return len(self.edges)

    @cached_property
    def edge_index(self):
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}

    @cached_property
    def bedge_edge(self):
        """Global edge index of each boundary edge."""
        out = np.empty(len(self.bedges), dtype=np.int64)
        for k, (a, b) in enumerate(self.bedges):
            key = (min(a, b), max(a, b))
            if key not in self.edge_index:
                raise MeshError(f"boundary edge {k} ({a}, {b}) is not a triangle edge")
            out[k] = self.edge_index[key]
        return out

    @cached_property
    def oriented_bedges(self):
        """Boundary edges oriented counterclockwise (interior on the left)."""
        owner = {}
        for t, tri in enumerate(self.triangles):
            for k in range(3):
                a, b = int(tri[(k + 1) % 3]), int(tri[(k + 2) % 3])
                owner[(a, b)] = t
        out = np.empty_like(self.bedges)
        for k, (a, b) in enumerate(self.bedges):
            if (int(a), int(b)) in owner:
                out[k] = (a, b)
            else:
                out[k] = (b, a)
        return out

    @cached_property
    def bedge_lengths(self):
        p = self.vertices
        return np.linalg.norm(p[self.bedges[:, 1]] - p[self.bedges[:, 0]], axis=1)

    @cached_property
    def bedge_normals(self):
        """Outward unit normals of the boundary edges."""
        ob = self.oriented_bedges
        t = self.vertices[ob[:, 1]] - self.vertices[ob[:, 0]]
        t /= np.linalg.norm(t, axis=1)[:, None]
        return np.column_stack([t[:, 1], -t[:, 0]])

    @cached_property
    def boundary_loop(self):
        """Boundary-edge indices in counterclockwise order, starting at the
        edge leaving ``gamma0_origin``."""
        ob = self.oriented_bedges
        nxt = {}
        for k, (a, _) in enumerate(ob):
            if int(a) in nxt:
                raise MeshError("boundary is not a simple closed curve")
            nxt[int(a)] = k
        start = self.gamma0_origin
        if start not in nxt:
            raise MeshError(f"gamma0_origin {start} is not a boundary vertex")
        loop = []
        v = start
        while True:
            k = nxt[v]
            loop.append(k)
            v = int(ob[k, 1])
            if v == start:
                break
            if len(loop) > len(ob):
                raise MeshError("boundary is not a simple closed curve")
        if len(loop) != len(ob):
            raise MeshError("boundary must be a single closed curve")
        return np.asarray(loop)

    def edges_with(self, vtag=None, rtag=None):
        mask = np.ones(len(self.bedges), dtype=bool)
        if vtag is not None:
            mask &= self.vtags == vtag
        if rtag is not None:
            mask &= self.rtags == rtag
        return np.flatnonzero(mask)

    def segment_length(self, vtag=None, rtag=None):
        return float(self.bedge_lengths[self.edges_with(vtag, rtag)].sum())

    @property
    def area(self):
        return float(self.signed_areas.sum())

    @property
    def boundary_length(self):
        return float(self.bedge_lengths.sum())

    @cached_property
    def h(self):
        """Largest edge length."""
        e = self.edges
        return float(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1).max())

    # ------------------------------------------------------------------
    def validate(self):
        """Check every structural invariant; raise :class:`MeshError` on the first failure."""
        if self.nt == 0:
            raise MeshError("mesh has no triangles")
        if np.any(self.triangles < 0) or np.any(self.triangles >= self.nv):
            raise MeshError("triangle vertex index out of range")
        bad = np.flatnonzero(self.signed_areas <= 0.0)
        if bad.size:
            raise MeshError(f"triangle {bad[0]} has nonpositive area")
        if np.any(self.bedges < 0) or np.any(self.bedges >= self.nv):
            raise MeshError("boundary edge vertex index out of range")
        for tag in np.unique(self.vtags):
            if tag not in VTAGS:
                raise MeshError(f"unknown velocity tag {tag!r}")
        for tag in np.unique(self.rtags):
            if tag not in RTAGS:
                raise MeshError(f"unknown rotation tag {tag!r}")

        counts = self._edge_data[2]
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two triangles")
        be = self.bedge_edge
        if len(np.unique(be)) != len(be):
            raise MeshError("duplicate boundary edge")
        if np.any(counts[be] != 1):
            raise MeshError("a tagged boundary edge is an interior edge")
        if np.count_nonzero(counts == 1) != len(be):
            raise MeshError("boundary tags do not cover the whole boundary")

        g0v = self.vtags == "G0"
        g0r = self.rtags == "G0"
        if np.any(g0v != g0r):
            raise MeshError("Gamma_0 differs between velocity and rotation tags")
        if not g0v.any():
            raise MeshError("Gamma_0 is empty")
        if not (self.vtags == "G1").any():
            raise MeshError("Gamma_1 is empty")
        if not (self.rtags == "G3").any():
            raise MeshError("Gamma_3 is empty")

        loop = self.boundary_loop  # raises if not a single closed curve
        # Gamma_0 must be one contiguous run of the cyclic loop
        flags = g0v[loop]
        runs = np.count_nonzero(flags & ~np.roll(flags, 1))
        if runs != 1:
            raise MeshError("Γ0 not connected")
        if self.segment_length("G0") <= 0.0:
            raise MeshError("Γ0 has zero length")
        ob = self.oriented_bedges
        o = self.gamma0_origin
        starts = ob[loop[flags], 0]
        ends = ob[loop[flags], 1]
        first = starts[~np.isin(starts, ends)]
        last = ends[~np.isin(ends, starts)]
        if o not in first and o not in last:
            raise MeshError("gamma0_origin is not an endpoint of Γ0")
        return self


# ----------------------------------------------------------------------
def _orient(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    tri = triangles.copy()
    flip = area < 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    return tri


def build_mesh(vertices, triangles, bedges, vtags, rtags, gamma0_origin):
    """Create and validate a mesh from arrays, repairing clockwise triangles."""
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    triangles = _orient(vertices, np.asarray(triangles, dtype=np.int64).reshape(-1, 3))
    mesh = Mesh(vertices, triangles,
                np.asarray(bedges, dtype=np.int64).reshape(-1, 2),
                np.asarray(vtags, dtype="<U2"), np.asarray(rtags, dtype="<U2"),
                int(gamma0_origin))
    return mesh.validate()


def _tokens(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_mesh(text):
    lines = list(_tokens(text))
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(lines):
            last = lines[-1][0] if lines else 0
            raise MeshParseError(last + 1, f"unexpected end of file, expected {what}")
        item = lines[pos]
        pos += 1
        return item

    def header(word):
        lineno, tok = take(f"'{word} N'")
        if len(tok) != 2 or tok[0] != word:
            raise MeshParseError(lineno, f"expected '{word} N', got {' '.join(tok)!r}")
        try:
            n = int(tok[1])
        except ValueError:
            raise MeshParseError(lineno, f"bad count {tok[1]!r}") from None
        if n < 0:
            raise MeshParseError(lineno, "negative count")
        return n

    lineno, tok = take("header")
    if tok != ["mesh2d", "v1"]:
        raise MeshParseError(lineno, "expected header 'mesh2d v1'")

    nv = header("vertices")
    verts = np.empty((nv, 2))
    for k in range(nv):
        lineno, tok = take("vertex")
        if len(tok) != 2:
            raise MeshParseError(lineno, "vertex line needs 'x y'")
        try:
            verts[k] = [float(tok[0]), float(tok[1])]
        except ValueError:
            raise MeshParseError(lineno, "vertex coordinates must be numbers") from None

    def index(lineno, s):
        try:
            i = int(s)
        except ValueError:
            raise MeshParseError(lineno, f"bad index {s!r}") from None
        if not 0 <= i < nv:
            raise MeshParseError(lineno, f"vertex index {i} out of range")
        return i

    nt = header("triangles")
    tris = np.empty((nt, 3), dtype=np.int64)
    for k in range(nt):
        lineno, tok = take("triangle")
        if len(tok) != 3:
            raise MeshParseError(lineno, "triangle line needs 'i j k'")
        tris[k] = [index(lineno, s) for s in tok]

    nb = header("bedges")
    bedges = np.empty((nb, 2), dtype=np.int64)
    vt, rt = [], []
    for k in range(nb):
        lineno, tok = take("boundary edge")
        if len(tok) != 4:
            raise MeshParseError(lineno, "bedge line needs 'i j VTAG RTAG'")
        bedges[k] = [index(lineno, tok[0]), index(lineno, tok[1])]
        if tok[2] not in VTAGS:
            raise MeshParseError(lineno, f"velocity tag must be one of {VTAGS}")
        if tok[3] not in RTAGS:
            raise MeshParseError(lineno, f"rotation tag must be one of {RTAGS}")
        vt.append(tok[2])
        rt.append(tok[3])

    lineno, tok = take("'gamma0_origin i'")
    if len(tok) != 2 or tok[0] != "gamma0_origin":
        raise MeshParseError(lineno, "expected 'gamma0_origin i'")
    origin = index(lineno, tok[1])
    if pos != len(lines):
        raise MeshParseError(lines[pos][0], "trailing content")
    return build_mesh(verts, tris, bedges, vt, rt, origin)


def load_mesh(path):
    """Read a ``mesh2d v1`` file and return a validated :class:`Mesh`."""
    return parse_mesh(Path(path).read_text())


def format_mesh(mesh):
    out = ["mesh2d v1", f"vertices {mesh.nv}"]
    out += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    out.append(f"triangles {mesh.nt}")
    out += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    out.append(f"bedges {len(mesh.bedges)}")
    out += [f"{a} {b} {v} {r}" for (a, b), v, r in zip(mesh.bedges, mesh.vtags, mesh.rtags)]
    out.append(f"gamma0_origin {mesh.gamma0_origin}")
    return "\n".join(out) + "\n"


def save_mesh(mesh, path):
    Path(path).write_text(format_mesh(mesh))


def refine_uniform(mesh):
    """Split every triangle into four congruent children.

    New vertices are the edge midpoints, numbered after the old vertices in
    edge order, so ``new.nv == old.nv + old.ne``.  Boundary edges split in two
    and keep their tags.
    """
    nv = mesh.nv
    e = mesh.edges
    mids = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
    verts = np.vstack([mesh.vertices, mids])
    t = mesh.triangles
    m = mesh.tri_edges + nv  # m[:, k] is the midpoint opposite vertex k
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    mbc, mca, mab = m[:, 0], m[:, 1], m[:, 2]
    tris = np.concatenate([
        np.column_stack([a, mab, mca]),
        np.column_stack([mab, b, mbc]),
        np.column_stack([mca, mbc, c]),
        np.column_stack([mab, mbc, mca]),
    ])
    bm = mesh.bedge_edge + nv
    bedges = np.concatenate([np.column_stack([mesh.bedges[:, 0], bm]),
                             np.column_stack([bm, mesh.bedges[:, 1]])])
    vtags = np.concatenate([mesh.vtags, mesh.vtags])
    rtags = np.concatenate([mesh.rtags, mesh.rtags])
    new = Mesh(verts, tris, bedges, vtags, rtags, mesh.gamma0_origin)
    return new.validate()


def gamma0_arclength(mesh):
    """Walk Gamma_0 from its origin and accumulate arc length per vertex."""
    g0 = mesh.vtags == "G0"
    if not g0.any():
        raise MeshError("Γ0 is empty")
    ob = mesh.oriented_bedges
    loop = mesh.boundary_loop
    # the loop starts at the origin; if Gamma_0 leaves the origin in the
    # counterclockwise direction it is a prefix of the loop, otherwise a suffix
    if g0[loop[0]]:
        ccw = True
        order = []
        for k in loop:
            if not g0[k]:
                break
            order.append(k)
        verts = [int(ob[order[0], 0])] + [int(ob[k, 1]) for k in order]
    else:
        ccw = False
        order = []
        for k in loop[::-1]:
            if not g0[k]:
                break
            order.append(k)
        verts = [int(ob[order[0], 1])] + [int(ob[k, 0]) for k in order]
    lengths = mesh.bedge_lengths[order]
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    return BoundaryArc(np.asarray(verts), np.asarray(order), cum, ccw)


def rectangle_mesh(nx, ny, x0=0.0, x1=1.0, y0=0.0, y1=1.0, tags=None):
    """Structured criss-cross-free rectangle mesh (diagonals bottom-left to top-right).

    ``tags`` maps side names ``left, right, bottom, top`` to ``(VTAG, RTAG)``;
    the default puts Gamma_0 on the left and Gamma_1 / Gamma_3 elsewhere.
    The arc origin is the top-left corner, so Gamma_0 on the left side is
    walked counterclockwise (downwards).
    """
    tags = {**dict(left=("G0", "G0"), right=("G1", "G3"), bottom=("G1", "G3"),
                   top=("G1", "G3")), **(tags or {})}
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris += [(a, b, c), (a, c, d)]
    bedges, vt, rt = [], [], []
    for i in range(nx):
        bedges.append((vid(i, 0), vid(i + 1, 0)))
        vt.append(tags["bottom"][0]); rt.append(tags["bottom"][1])
        bedges.append((vid(i + 1, ny), vid(i, ny)))
        vt.append(tags["top"][0]); rt.append(tags["top"][1])
    for j in range(ny):
        bedges.append((vid(nx, j), vid(nx, j + 1)))
        vt.append(tags["right"][0]); rt.append(tags["right"][1])
        bedges.append((vid(0, j + 1), vid(0, j)))
        vt.append(tags["left"][0]); rt.append(tags["left"][1])
    return build_mesh(verts, tris, bedges, vt, rt, vid(0, ny))
