"""Independent reference computations used to freeze derived test values.

Nothing here calls the library's assembly or quadrature code; each oracle
works from first principles (collapsed Gauss rules, dense algebra, direct
residual evaluation, finite differences).
"""
from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

def collapsed_gauss(n: int = 6):
    """Duffy-collapsed Gauss-Legendre rule on the reference triangle.

    Exact for polynomials of total degree ``2 n - 2`` (degree 10 for n = 6).
    Returns reference points (Q, 2) and weights summing to 1/2.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1)
    ws = 0.5 * w
    u, v = np.meshgrid(s, s, indexing="ij")
    wu, wv = np.meshgrid(ws, ws, indexing="ij")
    xi = u
    eta = v * (1 - u)
    weight = wu * wv * (1 - u)
    return np.column_stack([xi.ravel(), eta.ravel()]), weight.ravel()


def integrate_triangles(vertices, triangles, func, n: int = 6) -> float:
    """``sum_T int_T func(x, y)`` with the collapsed rule."""
    ref, w = collapsed_gauss(n)
    total = 0.0
    for t in triangles:
        p = vertices[t]
        J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        pts = p[0] + ref @ J.T
        total += abs(np.linalg.det(J)) * np.sum(w * func(pts[:, 0], pts[:, 1]))
    return float(total)


def p1_on_triangle(values, p, x, y):
    """Linear interpolant on triangle ``p`` of vertex ``values`` evaluated at (x, y)."""
    J = np.column_stack([p[1] - p[0], p[2] - p[0]])
    lam = np.linalg.solve(J, np.vstack([x - p[0, 0], y - p[0, 1]]))
    return values[0] * (1 - lam[0] - lam[1]) + values[1] * lam[0] + values[2] * lam[1]


def p1_gradient(values, p):
    J = np.column_stack([p[1] - p[0], p[2] - p[0]])
    return np.linalg.solve(J.T, np.array([values[1] - values[0], values[2] - values[0]]))


def gauss_edge(n: int = 6):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


# ---------------------------------------------------------------------------
# Dense algebra
# ---------------------------------------------------------------------------

def dense_solve(A, b):
    """Dense LU solve of a (possibly sparse) system."""
    A = A.toarray() if hasattr(A, "toarray") else np.asarray(A)
    return np.linalg.solve(A, np.asarray(b, dtype=float))


def dense_mass_stiffness(vertices, triangles, n: int = 6):
    """P1 mass and stiffness matrices built element by element with the collapsed rule."""
    N = len(vertices)
    M = np.zeros((N, N))
    K = np.zeros((N, N))
    ref, w = collapsed_gauss(n)
    for t in triangles:
        p = vertices[t]
        J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        det = abs(np.linalg.det(J))
        basis = np.column_stack([1 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])
        G = np.linalg.solve(J.T, np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]))  # (2, 3)
        M[np.ix_(t, t)] += det * np.einsum("q,qa,qb->ab", w, basis, basis)
        K[np.ix_(t, t)] += 0.5 * det * G.T @ G
    return M, K


# ---------------------------------------------------------------------------
# Step residual
# ---------------------------------------------------------------------------

def _fm(u):
    return u ** 3 - u


def _fhat_m(u0, u1):
    return 1.5 * u0 ** 2 * u1 - 0.5 * u0 ** 3 - 0.5 * (u0 + u1)


def _fhat_w(u0, u1, theta):
    c = np.sqrt(2) / 2 * np.cos(theta)
    return -c * (1 + np.minimum(1 - u0, 0) + np.minimum(1 + u0, 0) - np.clip(u0, -1, 1) * u1)


def step_residual(mesh, phi_n, phi_new, mu, dt, epsilon, mobility, alpha, beta, theta,
                  solid_edges, n: int = 6):
    """Residual of the weak step equations for P1 data, tested against every hat function.

    Evaluated triangle by triangle with the collapsed rule (exact for the
    polynomial integrands) and Gauss rules on solid edges.  Returns the two
    residual blocks as one vector.
    """
    V, T = mesh.vertices, mesh.triangles
    N = len(V)
    r1 = np.zeros(N)
    r2 = np.zeros(N)
    s = 1 / alpha + beta
    half = (1 - s) * phi_n + s * phi_new
    ref, w = collapsed_gauss(n)
    basis = np.column_stack([1 - ref[:, 0] - ref[:, 1], ref[:, 0], ref[:, 1]])
    for t in T:
        p = V[t]
        J = np.column_stack([p[1] - p[0], p[2] - p[0]])
        det = abs(np.linalg.det(J))
        G = np.linalg.solve(J.T, np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]]))
        u0 = basis @ phi_n[t]
        u1 = basis @ phi_new[t]
        m = basis @ mu[t]
        gmu = G @ mu[t]
        ghalf = G @ half[t]
        for a in range(3):
            r1[t[a]] += det * (np.sum(w * (u1 - u0) / dt * basis[:, a]) + 0.5 * mobility * gmu @ G[:, a])
            r2[t[a]] += det * (np.sum(w * (m - _fhat_m(u0, u1) / epsilon) * basis[:, a])
                               - 0.5 * epsilon * ghalf @ G[:, a])
    sg, wg = gauss_edge(n)
    for i, j in solid_edges:
        a, b = V[i], V[j]
        L = np.hypot(*(b - a))
        u0 = phi_n[i] * (1 - sg) + phi_n[j] * sg
        u1 = phi_new[i] * (1 - sg) + phi_new[j] * sg
        f = _fhat_w(u0, u1, theta)
        r2[i] -= L * np.sum(wg * f * (1 - sg))
        r2[j] -= L * np.sum(wg * f * sg)
    return np.concatenate([r1, r2])


# ---------------------------------------------------------------------------
# Finite differences and structured Hessians
# ---------------------------------------------------------------------------

def central_difference(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


def second_difference(f, x, h=1e-4):
    return (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2


def structured_hessian(func, x, y, h=1e-3):
    """Hessian of ``func`` at (x, y) by central differences."""
    fxx = (func(x + h, y) - 2 * func(x, y) + func(x - h, y)) / h ** 2
    fyy = (func(x, y + h) - 2 * func(x, y) + func(x, y - h)) / h ** 2
    fxy = (func(x + h, y + h) - func(x + h, y - h) - func(x - h, y + h) + func(x - h, y - h)) / (4 * h * h)
    return np.array([[fxx, fxy], [fxy, fyy]])


def brute_force_conformity(triangles, boundary_edges) -> bool:
    """Every edge is shared by two triangles or by one triangle and one boundary edge."""
    count = {}
    for t in triangles:
        for k in range(3):
            e = tuple(sorted((int(t[k]), int(t[(k + 1) % 3]))))
            count[e] = count.get(e, 0) + 1
    bset = {tuple(sorted(map(int, e))) for e in boundary_edges}
    for e, c in count.items():
        if c == 2 and e not in bset:
            continue
        if c == 1 and e in bset:
            continue
        return False
    return all(e in count for e in bset)


def read_legacy_vtk(path):
    """Minimal parser for the ASCII unstructured-grid files written by the library."""
    tokens = open(path).read().split("\n")
    it = iter(tokens)
    out = {"fields": {}}
    for line in it:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "POINTS":
            n = int(parts[1])
            pts = []
            while len(pts) < 3 * n:
                pts += next(it).split()
            out["points"] = np.array(pts, float).reshape(n, 3)
        elif parts[0] == "CELLS":
            n = int(parts[1])
            out["cells"] = np.array([next(it).split() for _ in range(n)], int)[:, 1:]
        elif parts[0] == "CELL_TYPES":
            n = int(parts[1])
            out["cell_types"] = np.array([next(it) for _ in range(n)], int)
        elif parts[0] == "SCALARS":
            name = parts[1]
            next(it)  # LOOKUP_TABLE
            vals = []
            npts = len(out["points"])
            while len(vals) < npts:
                vals += next(it).split()
            out["fields"][name] = np.array(vals, float)
    return out
