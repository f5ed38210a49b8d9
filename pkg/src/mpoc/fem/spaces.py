"""Taylor-Hood spaces, element geometry and boundary bookkeeping.

Quadratic nodes are numbered vertices first, then edge midpoints
(``nv + edge``).  Local quadratic numbering on a triangle ``(v0, v1, v2)``
is ``v0, v1, v2, m12, m20, m01``.  Velocity vectors are blocked:
``[u1 at all nodes, u2 at all nodes]``.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .quadrature import TRI_BARY, TRI_WEIGHTS

# 1D quadratic edge basis integrals on an edge (start, end, mid), unit length
EDGE_FULL = np.array([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0])
EDGE_HALF = np.array([5.0 / 24.0, -1.0 / 24.0, 1.0 / 3.0])
EDGE_MASS = np.array([[4.0, -1.0, 2.0], [-1.0, 4.0, 2.0], [2.0, 2.0, 16.0]]) / 30.0


def p2_tables(L):
    """Quadratic basis values (6, Q) and barycentric derivatives (6, Q, 3)."""
    L = np.asarray(L)
    Q = L.shape[0]
    phi = np.empty((6, Q))
    dL = np.zeros((6, Q, 3))
    for k in range(3):
        phi[k] = L[:, k] * (2.0 * L[:, k] - 1.0)
        dL[k, :, k] = 4.0 * L[:, k] - 1.0
    for k, (i, j) in enumerate([(1, 2), (2, 0), (0, 1)], start=3):
        phi[k] = 4.0 * L[:, i] * L[:, j]
        dL[k, :, i] = 4.0 * L[:, j]
        dL[k, :, j] = 4.0 * L[:, i]
    return phi, dL


class SpaceSet:
    """Discrete spaces on a mesh.

    Attributes
    ----------
    n1, n2 : int
        Number of linear (pressure) and quadratic nodes.
    cell_dofs : (nt, 6) int
        Quadratic node indices per triangle.
    dx : (nt, Q) float
        Quadrature weights times area.
    phi : (nt, 6, Q) float
        Quadratic basis values (broadcast view).
    dphi : (nt, 6, Q, 2) float
        Physical gradients of the quadratic basis.
    lam : (nt, 3, Q) float
        Linear basis values (broadcast view).
    """

    def __init__(self, mesh):
        self.mesh = mesh
        nv, ne, nt = mesh.nv, mesh.ne, mesh.nt
        self.n1 = nv
        self.n2 = nv + ne
        self.nt = nt
        self.cell_dofs = np.hstack([mesh.triangles, mesh.tri_edges + nv]).astype(np.int64)
        mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        self.nodes = np.vstack([mesh.vertices, mids])

        p = mesh.vertices[mesh.triangles]
        self.area = mesh.signed_areas.copy()
        x, y = p[..., 0], p[..., 1]
        gl = np.empty((nt, 3, 2))
        for k in range(3):
            i, j = (k + 1) % 3, (k + 2) % 3
            gl[:, k, 0] = y[:, i] - y[:, j]
            gl[:, k, 1] = x[:, j] - x[:, i]
        self.grad_lambda = gl / (2.0 * self.area)[:, None, None]

        self.nq = len(TRI_WEIGHTS)
        self.dx = self.area[:, None] * TRI_WEIGHTS[None, :]
        self.xq = np.einsum("qk,ekd->eqd", TRI_BARY, p)
        phi, dL = p2_tables(TRI_BARY)
        self.phi_ref = phi
        self.phi = np.ascontiguousarray(np.broadcast_to(phi, (nt, 6, self.nq)))
        self.dphi = np.einsum("kqm,emd->ekqd", dL, self.grad_lambda)
        self.dphi_x = np.ascontiguousarray(self.dphi[..., 0])
        self.dphi_y = np.ascontiguousarray(self.dphi[..., 1])
        self.lam = np.ascontiguousarray(np.broadcast_to(TRI_BARY.T, (nt, 3, self.nq)))
        self._cache = {}
        self._boundary()

    def cached(self, key, build):
        """Return ``build()`` memoized under ``key`` for this space set."""
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    # ------------------------------------------------------------------
    def _boundary(self):
        mesh = self.mesh
        nv = mesh.nv
        ob = mesh.oriented_bedges
        self.bedge_nodes = np.column_stack([ob, mesh.bedge_edge + nv]).astype(np.int64)
        self.bedge_len = mesh.bedge_lengths
        self.bedge_normal = mesh.bedge_normals

        def nodes_of(mask):
            return np.unique(self.bedge_nodes[mask].ravel())

        vt, rt = mesh.vtags, mesh.rtags
        self.boundary_nodes = nodes_of(np.ones(len(ob), bool))
        self.gamma0_nodes = nodes_of(vt == "G0")
        self.gamma1_all = nodes_of(vt == "G1")
        self.gamma2_all = nodes_of(vt == "G2")
        self.gamma3_all = nodes_of(rt == "G3")
        # segment interiors: nodes not touching edges of another segment
        self.gamma1_nodes = np.setdiff1d(self.gamma1_all, nodes_of(vt != "G1"))
        self.gamma3_nodes = np.setdiff1d(self.gamma3_all, nodes_of(rt != "G3"))
        self.dirichlet_u = nodes_of(vt != "G2")  # Gamma \ Gamma_2, closed
        self.open_u = np.setdiff1d(self.dirichlet_u, nodes_of(vt == "G2"))
        self.slip_nodes = np.setdiff1d(self.boundary_nodes, self.dirichlet_u)
        self.interior_nodes = np.setdiff1d(np.arange(self.n2), self.boundary_nodes)

        # (n, tau) frames on slip nodes; vertex normals weight adjacent edge
        # normals by length so the discrete flux through Gamma_2 vanishes
        nrm = np.zeros((self.n2, 2))
        g2 = np.flatnonzero(vt == "G2")
        for k in g2:
            a, b, m = self.bedge_nodes[k]
            w = self.bedge_len[k] * self.bedge_normal[k]
            nrm[a] += w
            nrm[b] += w
            nrm[m] += w
        n = nrm[self.slip_nodes]
        if len(n):
            n = n / np.linalg.norm(n, axis=1)[:, None]
        self.slip_normal = n
        self.slip_tangent = np.column_stack([-n[:, 1], n[:, 0]]) if len(n) else n

        # velocity prolongation U = Pu x + U_D
        n2 = self.n2
        inner = self.interior_nodes
        ni, ns = len(inner), len(self.slip_nodes)
        rows = np.concatenate([inner, inner + n2, self.slip_nodes, self.slip_nodes + n2])
        cols = np.concatenate([np.arange(ni), ni + np.arange(ni),
                               2 * ni + np.arange(ns), 2 * ni + np.arange(ns)])
        vals = np.concatenate([np.ones(2 * ni), self.slip_tangent[:, 0], self.slip_tangent[:, 1]]) \
            if ns else np.ones(2 * ni)
        if not ns:
            rows, cols = rows[:2 * ni], cols[:2 * ni]
        self.Pu = sp.csr_matrix((vals, (rows, cols)), shape=(2 * n2, 2 * ni + ns))
        self.nu_free = 2 * ni + ns
        self.pressure_pin = 0
        self.p_free = np.arange(1, self.n1)

    # ------------------------------------------------------------------
    @cached_property
    def walk(self):
        """Boundary traversal starting at the arc origin and running along Gamma_0.

        Returns ``(edges, sign)``: boundary-edge indices in walk order and
        +1 when the walk is counterclockwise, -1 otherwise.
        """
        mesh = self.mesh
        loop = mesh.boundary_loop
        if mesh.vtags[loop[0]] == "G0":
            return loop, 1.0
        return loop[::-1], -1.0

    @cached_property
    def stream_trace(self):
        """Sparse map (n2, 2 n2) from velocity to boundary stream values.

        Walking the boundary from the arc origin, the stream function changes
        by the line integral of u.n; midpoint values use the half-edge
        integral.  Rows of interior nodes are zero.  Also stores the closure
        row (total signed flux around the loop) in ``closure_row``.
        """
        n2 = self.n2
        bn = self.boundary_nodes
        loc = -np.ones(n2, dtype=np.int64)
        loc[bn] = np.arange(len(bn))
        nb = len(bn)
        edges, sgn = self.walk
        rows = np.zeros((nb, 2 * nb))
        cur = np.zeros(2 * nb)
        start = self.mesh.gamma0_origin
        done = {start}
        rows[loc[start]] = 0.0
        for k in edges:
            a, b, m = self.bedge_nodes[k]
            s, t = (a, b) if sgn > 0 else (b, a)
            nvec = self.bedge_normal[k] * self.bedge_len[k] * sgn
            half = np.zeros(2 * nb)
            full = np.zeros(2 * nb)
            for node, wh, wf in ((s, EDGE_HALF[0], EDGE_FULL[0]), (t, EDGE_HALF[1], EDGE_FULL[1]),
                                 (m, EDGE_HALF[2], EDGE_FULL[2])):
                j = loc[node]
                half[j] += wh * nvec[0]
                half[nb + j] += wh * nvec[1]
                full[j] += wf * nvec[0]
                full[nb + j] += wf * nvec[1]
            rows[loc[m]] = cur + half
            cur = cur + full
            if t not in done:
                rows[loc[t]] = cur
                done.add(t)
        self.closure_row = self._embed_row(cur, bn)
        R = sp.coo_matrix(rows)
        cols = np.where(R.col < nb, bn[R.col % nb], bn[R.col % nb] + n2)
        return sp.csr_matrix((R.data, (bn[R.row], cols)), shape=(n2, 2 * n2))

    def _embed_row(self, row, bn):
        nb = len(bn)
        out = np.zeros(2 * self.n2)
        out[bn] = row[:nb]
        out[bn + self.n2] = row[nb:]
        return out

    def flux_row(self, vtag=None, rtag=None):
        """Vector ``a`` with ``a @ U`` the outward flux of U through the tagged edges."""
        out = np.zeros(2 * self.n2)
        for k in self.mesh.edges_with(vtag, rtag):
            nvec = self.bedge_normal[k] * self.bedge_len[k]
            for node, w in zip(self.bedge_nodes[k], EDGE_FULL):
                out[node] += w * nvec[0]
                out[node + self.n2] += w * nvec[1]
        return out

    @cached_property
    def gamma0_arc_nodes(self):
        """Gamma_0 quadratic nodes in walk order with their arc-length coordinate."""
        edges, sgn = self.walk
        nodes, svals = [self.mesh.gamma0_origin], [0.0]
        s = 0.0
        for k in edges:
            if self.mesh.vtags[k] != "G0":
                break
            a, b, m = self.bedge_nodes[k]
            t = b if sgn > 0 else a
            L = self.bedge_len[k]
            nodes += [m, t]
            svals += [s + 0.5 * L, s + L]
            s += L
        return np.asarray(nodes, dtype=np.int64), np.asarray(svals)

    def node_arclength(self):
        """Arc length from the origin (in walk direction) of every boundary node; NaN inside."""
        edges, sgn = self.walk
        out = np.full(self.n2, np.nan)
        out[self.mesh.gamma0_origin] = 0.0
        s = 0.0
        for k in edges:
            a, b, m = self.bedge_nodes[k]
            t = b if sgn > 0 else a
            L = self.bedge_len[k]
            out[m] = s + 0.5 * L
            if np.isnan(out[t]):
                out[t] = s + L
            s += L
        return out

    # ------------------------------------------------------------------
    # field evaluation at quadrature points
    def values(self, coef):
        """Quadratic field values at quadrature points, shape (nt, Q)."""
        return np.einsum("ek,kq->eq", np.asarray(coef)[self.cell_dofs], self.phi_ref)

    def grads(self, coef):
        """Quadratic field gradients at quadrature points, shape (nt, Q, 2)."""
        return np.einsum("ek,ekqd->eqd", np.asarray(coef)[self.cell_dofs], self.dphi)

    def p1_values(self, coef):
        return np.einsum("ek,kq->eq", np.asarray(coef)[self.mesh.triangles], TRI_BARY.T)

    def split(self, U):
        return U[:self.n2], U[self.n2:]

    def interpolate(self, fn):
        """Nodal interpolant of ``fn(x, y)`` in the quadratic space."""
        return np.asarray(fn(self.nodes[:, 0], self.nodes[:, 1]), dtype=float) * np.ones(self.n2)

    def interpolate_vector(self, fn):
        v = fn(self.nodes[:, 0], self.nodes[:, 1])
        return np.concatenate([np.broadcast_to(np.asarray(v[0], float), (self.n2,)),
                               np.broadcast_to(np.asarray(v[1], float), (self.n2,))])

    def at_quadrature(self, fn):
        """Evaluate ``fn(x, y)`` at quadrature points, shape (nt, Q)."""
        v = fn(self.xq[..., 0], self.xq[..., 1])
        return np.broadcast_to(np.asarray(v), self.dx.shape)
