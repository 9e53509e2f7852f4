"""Catalog of closed convex sets used as feasible domains.

Every descriptor knows how to project onto itself, expose the orthogonal
projector onto the subspace parallel to its affine hull, evaluate its
projective mapping Q(x) (a smooth, symmetric, positive-semidefinite operator
whose null space spans the normal cone), and differentiate Q along a
direction.  Matrix-shaped sets act on column-major flattened vectors; JSON
serialization uses row-major nested lists.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import block_diag
from scipy.optimize import brentq, nnls

DEFAULT_TOL = 1e-8

__all__ = [
    "DEFAULT_TOL",
    "DimensionMismatch",
    "DomainViolation",
    "ConvexSet",
    "Box",
    "NonnegOrthant",
    "NormBall",
    "Simplex",
    "SecondOrderCone",
    "SpectralBall",
    "PsdCone",
    "PsdSpectralBall",
    "LinearInequalities",
    "Product",
    "set_from_json",
]


class DimensionMismatch(ValueError):
    """Vector length does not match the ambient dimension."""


class DomainViolation(ValueError):
    """Point lies outside the set beyond the membership tolerance."""


def _vec(x, n, name="x"):
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise DimensionMismatch(f"{name} has shape {x.shape}, expected ({n},)")
    return x


def _sym(M):
    return 0.5 * (M + M.T)


def _mat(x, shape):
    # internal layout is column-major
    return np.asarray(x, dtype=float).reshape(shape, order="F")


def _flat(M):
    return np.asarray(M, dtype=float).reshape(-1, order="F")


class ConvexSet:
    """Base descriptor.  Instances are immutable and safe to share."""

    kind = "abstract"

    @property
    def n(self) -> int:
        raise NotImplementedError

    # ---- kernels supplied by subclasses (no membership check) ----

    def project(self, x):
        raise NotImplementedError

    def _q(self, x, v):
        raise NotImplementedError

    def _dq(self, x, d, v):
        raise NotImplementedError

    def _dq_form(self, x, v, w):
        raise NotImplementedError

    def affine_hull_projector(self):
        raise NotImplementedError

    def normal_cone_project(self, x, z, tol=DEFAULT_TOL):
        """Euclidean projection of z onto the normal cone at x (x in the set)."""
        raise NotImplementedError

    def _params(self):
        return {}

    # ---- shared surface ----

    def contains(self, x, tol=DEFAULT_TOL) -> bool:
        x = _vec(x, self.n)
        return float(np.linalg.norm(x - self.project(x))) <= tol

    def _check_point(self, x, validate):
        x = _vec(x, self.n)
        if validate and not self.contains(x, DEFAULT_TOL):
            raise DomainViolation(
                f"point is outside {self.kind} beyond tol={DEFAULT_TOL}; "
                "the projective mapping is only defined on the set"
            )
        return x

    def q_apply(self, x, v, validate=True):
        """Apply the projective mapping:  Q(x) v."""
        x = self._check_point(x, validate)
        v = _vec(v, self.n, "v")
        return self._q(x, v)

    def q_matrix(self, x, validate=True):
        """Materialize Q(x) as a dense n-by-n matrix (cheap only for small n)."""
        x = self._check_point(x, validate)
        cols = [self._q(x, e) for e in np.eye(self.n)]
        return np.column_stack(cols)

    def dq_apply(self, x, d, v, validate=True):
        """Directional derivative of x -> Q(x) v along d:  (DQ(x)[d]) v."""
        x = self._check_point(x, validate)
        d = _vec(d, self.n, "d")
        v = _vec(v, self.n, "v")
        return self._dq(x, d, v)

    def dq_form_grad(self, x, v, w, validate=True):
        """Gradient of the scalar map d -> <w, (DQ(x)[d]) v>.

        This is the adjoint of dq_apply in its direction argument; each
        variant supplies it in closed form so that analytic Jacobians of the
        dissolving map stay O(n).
        """
        x = self._check_point(x, validate)
        v = _vec(v, self.n, "v")
        w = _vec(w, self.n, "w")
        return self._dq_form(x, v, w)

    def to_json(self):
        return {"kind": self.kind, **self._params()}

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self._params().items()
                           if not isinstance(v, list))
        return f"{type(self).__name__}({params})"


def _bounds_to_json(b):
    return [float(v) if np.isfinite(v) else None for v in b]


def _bounds_from_json(vals, fill):
    return np.array([fill if v is None else float(v) for v in vals])


class Box(ConvexSet):
    """{x : lower <= x <= upper}, entries may be infinite."""

    kind = "box"

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise DimensionMismatch("lower/upper must be 1-d of equal length")
        if np.any(lower > upper):
            raise ValueError("requires lower <= upper componentwise")
        self.lower = lower
        self.upper = upper
        self._lo_fin = np.isfinite(lower)
        self._up_fin = np.isfinite(upper)

    @property
    def n(self):
        return self.lower.size

    def project(self, x):
        x = _vec(x, self.n)
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def _weights(self, x):
        # smooth weights vanishing exactly on active bounds, positive inside
        w = np.ones_like(x)
        both = self._lo_fin & self._up_fin
        lo = self._lo_fin & ~self._up_fin
        up = ~self._lo_fin & self._up_fin
        w[both] = (x[both] - self.lower[both]) * (self.upper[both] - x[both])
        w[lo] = x[lo] - self.lower[lo]
        w[up] = self.upper[up] - x[up]
        return w

    def _weights_deriv(self, x):
        dw = np.zeros_like(x)
        both = self._lo_fin & self._up_fin
        lo = self._lo_fin & ~self._up_fin
        up = ~self._lo_fin & self._up_fin
        dw[both] = self.lower[both] + self.upper[both] - 2.0 * x[both]
        dw[lo] = 1.0
        dw[up] = -1.0
        return dw

    def _q(self, x, v):
        return self._weights(x) * v

    def _dq(self, x, d, v):
        return self._weights_deriv(x) * d * v

    def _dq_form(self, x, v, w):
        return self._weights_deriv(x) * v * w

    def affine_hull_projector(self):
        return np.diag((self.lower < self.upper).astype(float))

    def normal_cone_project(self, x, z, tol=DEFAULT_TOL):
        x = _vec(x, self.n)
        z = _vec(z, self.n, "z")
        out = np.zeros_like(z)
        pinned = self.upper - self.lower <= 2.0 * tol
        at_lo = self._lo_fin & (x - self.lower <= tol) & ~pinned
        at_up = self._up_fin & (self.upper - x <= tol) & ~pinned
        out[pinned] = z[pinned]
        out[at_lo] = np.minimum(z[at_lo], 0.0)
        out[at_up] = np.maximum(z[at_up], 0.0)
        return out

    def _params(self):
        return {"lower": _bounds_to_json(self.lower),
                "upper": _bounds_to_json(self.upper)}


class NonnegOrthant(Box):
    """{x : x >= 0}."""

    kind = "nonneg_orthant"

    def __init__(self, n):
        super().__init__(np.zeros(n), np.full(n, np.inf))

    def _params(self):
        return {"n": self.n}


class NormBall(ConvexSet):
    """{x : ||x||_q <= radius}; q = 2 gets dedicated closed forms."""

    kind = "norm_ball"

    def __init__(self, n, radius=1.0, exponent=2.0):
        if radius <= 0:
            raise ValueError("radius must be positive")
        if exponent <= 1:
            raise ValueError("exponent must exceed 1")
        self._n = int(n)
        self.radius = float(radius)
        self.exponent = float(exponent)

    @property
    def n(self):
        return self._n

    @property
    def _is_l2(self):
        return self.exponent == 2.0

    def project(self, x):
        x = _vec(x, self.n)
        u, q = self.radius, self.exponent
        if self._is_l2:
            nrm = np.linalg.norm(x)
            return x if nrm <= u else x * (u / nrm)
        a = np.abs(x)
        if np.sum(a ** q) <= u ** q:
            return x.copy()
        return np.sign(x) * _lq_ball_shrink(a, u, q)

    def _q(self, x, v):
        u, q = self.radius, self.exponent
        if self._is_l2:
            return v - x * (x @ v) / u ** 2
        w = np.sign(x) * np.abs(x) ** (q - 1.0)
        s = np.sum(np.abs(x) ** (2.0 * q - 2.0))
        return (v - (w * (x @ v) + x * (w @ v)) / u ** q
                + s * x * (x @ v) / u ** (2.0 * q))

    def _require_smooth(self, x):
        if self.exponent < 2.0 and np.any(np.abs(x) < 1e-14):
            raise DomainViolation(
                "derivative of the lq projective mapping is unbounded at zero "
                "coordinates for exponents below 2"
            )

    def _dq(self, x, d, v):
        u, q = self.radius, self.exponent
        if self._is_l2:
            return -(d * (x @ v) + x * (d @ v)) / u ** 2
        self._require_smooth(x)
        ax = np.abs(x)
        w = np.sign(x) * ax ** (q - 1.0)
        kappa = (q - 1.0) * ax ** (q - 2.0)
        tau = (2.0 * q - 2.0) * np.sign(x) * ax ** (2.0 * q - 3.0)
        s = np.sum(ax ** (2.0 * q - 2.0))
        wdot = kappa * d
        sdot = tau @ d
        uq, u2q = u ** q, u ** (2.0 * q)
        return (-(wdot * (x @ v) + w * (d @ v) + d * (w @ v) + x * (wdot @ v)) / uq
                + (sdot * x * (x @ v) + s * (d * (x @ v) + x * (d @ v))) / u2q)

    def _dq_form(self, x, v, w):
        u, q = self.radius, self.exponent
        if self._is_l2:
            return -((x @ v) * w + (x @ w) * v) / u ** 2
        self._require_smooth(x)
        ax = np.abs(x)
        wx = np.sign(x) * ax ** (q - 1.0)
        kappa = (q - 1.0) * ax ** (q - 2.0)
        tau = (2.0 * q - 2.0) * np.sign(x) * ax ** (2.0 * q - 3.0)
        s = np.sum(ax ** (2.0 * q - 2.0))
        uq, u2q = u ** q, u ** (2.0 * q)
        xv, xw = x @ v, x @ w
        return (-(xv * kappa * w + (w @ wx) * v + (wx @ v) * w + xw * kappa * v) / uq
                + (xv * xw * tau + s * (xv * w + xw * v)) / u2q)

    def affine_hull_projector(self):
        return np.eye(self.n)

    def normal_cone_project(self, x, z, tol=DEFAULT_TOL):
        x = _vec(x, self.n)
        z = _vec(z, self.n, "z")
        q, u = self.exponent, self.radius
        nrm = np.linalg.norm(x) if self._is_l2 else np.sum(np.abs(x) ** q) ** (1.0 / q)
        if nrm < u - tol * max(1.0, u):
            return np.zeros_like(z)
        g = x if self._is_l2 else np.sign(x) * np.abs(x) ** (q - 1.0)
        gg = g @ g
        if gg == 0.0:
            return np.zeros_like(z)
        t = max(0.0, (z @ g) / gg)
        return t * g

    def _params(self):
        return {"n": self.n, "radius": self.radius, "exponent": self.exponent}


def _lq_ball_shrink(a, u, q):
    """Solve the lq-ball projection in magnitudes: t + lam*q*t^(q-1) = a, sum t^q = u^q."""

    def magnitudes(lam):
        lo = np.zeros_like(a)
        hi = a.copy()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            too_big = mid + lam * q * mid ** (q - 1.0) > a
            hi = np.where(too_big, mid, hi)
            lo = np.where(too_big, lo, mid)
        return 0.5 * (lo + hi)

    def excess(lam):
        return np.sum(magnitudes(lam) ** q) - u ** q

    hi = 1.0
    while excess(hi) > 0.0:
        hi *= 2.0
    lam = brentq(excess, 0.0, hi, xtol=1e-300, rtol=8.9e-16, maxiter=300)
    return magnitudes(lam)


class Simplex(ConvexSet):
    """{x : x >= 0, sum(x) = 1}."""

    kind = "simplex"

    def __init__(self, n):
        self._n = int(n)

    @property
    def n(self):
        return self._n

    def project(self, x):
        # sort-and-threshold; O(n log n) and exact
        x = _vec(x, self.n)
        u = np.sort(x)[::-1]
        css = np.cumsum(u)
        j = np.arange(1, self.n + 1)
        k = np.nonzero(u - (css - 1.0) / j > 0.0)[0].max() + 1
        tau = (css[k - 1] - 1.0) / k
        return np.maximum(x - tau, 0.0)

    def _m_apply(self, x, v):
        # M = Diag(x) - x x^T
        return x * v - x * (x @ v)

    def _q(self, x, v):
        return self._m_apply(x, self._m_apply(x, v))

    def _mdot_apply(self, x, d, v):
        return d * v - d * (x @ v) - x * (d @ v)

    def _dq(self, x, d, v):
        return (self._mdot_apply(x, d, self._m_apply(x, v))
                + self._m_apply(x, self._mdot_apply(x, d, v)))

    def _dq_form(self, x, v, w):
        def phi(a, b):
            return a * b - (x @ b) * a - (x @ a) * b

        return phi(w, self._m_apply(x, v)) + phi(self._m_apply(x, w), v)

    def affine_hull_projector(self):
        return np.eye(self.n) - np.full((self.n, self.n), 1.0 / self.n)

    def normal_cone_project(self, x, z, tol=DEFAULT_TOL):
        # normal cone: g_i = t on the support, g_i <= t off it; exact 1-d solve
        x = _vec(x, self.n)
        z = _vec(z, self.n, "z")
        supp = x > tol
        z_in = z[supp]
        z_out = np.sort(z[~supp])[::-1]
        best_t = None
        base = float(np.sum(z_in))
        m = z_in.size
        for k in range(z_out.size + 1):
            t = (base + float(np.sum(z_out[:k]))) / (m + k)
            upper_ok = k == 0 or z_out[k - 1] > t - 1e-15
            lower_ok = k == z_out.size or z_out[k] <= t + 1e-15
            if upper_ok and lower_ok:
                best_t = t
                break
        if best_t is None:  # numerical tie fallback
            best_t = base / max(m, 1)
        out = np.minimum(z, best_t)
        out[supp] = best_t
        return out

    def _params(self):
        return {"n": self.n}


class SecondOrderCone(ConvexSet):
    """{(x, y) in R^n x R : ||x|| <= y}; ambient dimension n + 1."""

    kind = "second_order_cone"

    def __init__(self, n):
        self._nx = int(n)

    @property
    def n(self):
        return self._nx + 1

    def _split(self, z):
        return z[:-1], z[-1]

    def project(self, z):
        z = _vec(z, self.n)
        x, y = self._split(z)
        nx = np.linalg.norm(x)
        if nx <= y:
            return z.copy()
        if nx <= -y:
            return np.zeros_like(z)
        alpha = 0.5 * (nx + y)
        out = np.empty_like(z)
        out[:-1] = alpha * x / nx
        out[-1] = alpha
        return out

    def _parts(self, z):
        x, y = self._split(z)
        g = z.copy()
        g[-1] = -y
        s = float(z @ z)           # ||x||^2 + y^2
        e = float(np.exp(x @ x - y * y))
        return g, s, e

    def _q(self, z, v):
        g, s, e = self._parts(z)
        return s * v - e * (g @ v) * g

    def _dq(self, z, d, v):
        g, s, e = self._parts(z)
        dtil = d.copy()
        dtil[-1] = -d[-1]
        sdot = 2.0 * (z @ d)
        edot = 2.0 * e * (g @ d)
        return sdot * v - edot * (g @ v) * g - e * ((dtil @ v) * g + (g @ v) * dtil)

    def _dq_form(self, z, v, w):
        g, s, e = self._parts(z)
        vtil = v.copy()
        vtil[-1] = -v[-1]
        wtil = w.copy()
        wtil[-1] = -w[-1]
        gv, gw = g @ v, g @ w
        return (2.0 * (w @ v) * z - 2.0 * e * gv * gw * g
                - e * (gw * vtil + gv * wtil))

    def affine_hull_projector(self):
        return np.eye(self.n)

    def normal_cone_project(self, z, w, tol=DEFAULT_TOL):
        z = _vec(z, self.n)
        w = _vec(w, self.n, "z")
        x, y = self._split(z)
        scale = 1.0 + np.linalg.norm(z)
        if np.linalg.norm(z) <= tol * scale:
            return w - self.project(w)  # polar cone at the apex
        if y - np.linalg.norm(x) > tol * scale:
            return np.zeros_like(w)
        g = z.copy()
        g[-1] = -y
        t = max(0.0, (w @ g) / (g @ g))
        return t * g

    def _params(self):
        return {"n": self._nx}


class SpectralBall(ConvexSet):
    """{X in R^(m x s) : ||X||_2 <= 1}, flattened column-major."""

    kind = "spectral_ball"

    def __init__(self, m, s):
        self.m = int(m)
        self.s = int(s)

    @property
    def n(self):
        return self.m * self.s

    def _shape(self):
        return (self.m, self.s)

    def project(self, x):
        X = _mat(_vec(x, self.n), self._shape())
        U, sv, Vt = np.linalg.svd(X, full_matrices=False)
        if sv.size == 0 or sv[0] <= 1.0:
            return np.asarray(x, dtype=float).copy()
        return _flat(U @ np.diag(np.minimum(sv, 1.0)) @ Vt)

    def _q(self, x, v):
        X = _mat(x, self._shape())
        Y = _mat(v, self._shape())
        return _flat(Y - X @ _sym(X.T @ Y))

    def _dq(self, x, d, v):
        X = _mat(x, self._shape())
        D = _mat(d, self._shape())
        Y = _mat(v, self._shape())
        return _flat(-D @ _sym(X.T @ Y) - X @ _sym(D.T @ Y))

    def _dq_form(self, x, v, w):
        X = _mat(x, self._shape())
        Y = _mat(v, self._shape())
        W = _mat(w, self._shape())
        return _flat(-W @ _sym(X.T @ Y) - Y @ _sym(X.T @ W))

    def affine_hull_projector(self):
        return np.eye(self.n)

    def normal_cone_project(self, x, z, tol=DEFAULT_TOL):
        X = _mat(_vec(x, self.n), self._shape())
        Z = _mat(_vec(z, self.n, "z"), self._shape())
        U, sv, Vt = np.linalg.svd(X, full_matrices=False)
        top = sv >= 1.0 - tol
        if not np.any(top):
            return np.zeros(self.n)
        U1 = U[:, top]
        V1 = Vt[top, :].T
        S = _psd_part(_sym(U1.T @ Z @ V1))
        return _flat(U1 @ S @ V1.T)

    def _params(self):
        return {"m": self.m, "s": self.s}


def _psd_part(B):
    vals, vecs = np.linalg.eigh(B)
    return (vecs * np.maximum(vals, 0.0)) @ vecs.T


class PsdCone(ConvexSet):
    """{X in R^(s x s) : X symmetric positive semidefinite}, flattened column-major."""

    kind = "psd_cone"

    def __init__(self, s):
        self.s = int(s)

    @property
    def n(self):
        return self.s * self.s

    def _shape(self):
        return (self.s, self.s)

    def project(self, x):
        X = _sym(_mat(_vec(x, self.n), self._shape()))
        vals, vecs = np.linalg.eigh(X)
        if vals.size and vals[0] >= 0.0 and np.array_equal(X, _mat(x, self._shape())):
            return np.asarray(x, dtype=float).copy()
        clipped = (vecs * np.maximum(vals, 0.0)) @ vecs.T  # eigenvalues clipped at 0
        return _flat(clipped)

    def _q(self, x, v):
        X = _mat(x, self._shape())
        Y = _mat(v, self._shape())
        return _flat(X @ Y @ X)

    def _dq(self, x, d, v):
        X = _mat(x, self._shape())
        D = _mat(d, self._shape())
        Y = _mat(v, self._shape())
        return _flat(D @ Y @ X + X @ Y @ D)

    def _dq_form(self, x, v, w):
        X = _mat(x, self._shape())
        Y = _mat(v, self._shape())
        W = _mat(w, self._shape())
        return _flat(W @ X.T @ Y.T + Y.T @ X.T @ W)

    def affine_hull_projector(self):
        return _symmetrizer_matrix(self.s)

    def normal_cone_project(self, x, z, tol=DEFAULT_TOL):
        X = _sym(_mat(_vec(x, self.n), self._shape()))
        Z = _sym(_mat(_vec(z, self.n, "z"), self._shape()))
        vals, vecs = np.linalg.eigh(X)
        low = vals <= tol
        if not np.any(low):
            return np.zeros(self.n)
        V0 = vecs[:, low]
        S = _psd_part(-V0.T @ Z @ V0)
        return _flat(-V0 @ S @ V0.T)

    def _params(self):
        return {"s": self.s}


def _symmetrizer_matrix(s):
    """Orthogonal projector of R^(s*s) onto symmetric matrices (column-major)."""
    n = s * s
    P = np.zeros((n, n))
    for j in range(s):
        for i in range(s):
            row = j * s + i
            P[row, row] += 0.5
            P[row, i * s + j] += 0.5
    return P


class PsdSpectralBall(PsdCone):
    """{X : X psd, ||X||_2 <= 1}."""

    kind = "psd_spectral_ball"

    def project(self, x):
        X = _sym(_mat(_vec(x, self.n), self._shape()))
        vals, vecs = np.linalg.eigh(X)
        if (vals.size and vals[0] >= 0.0 and vals[-1] <= 1.0
                and np.array_equal(X, _mat(x, self._shape()))):
            return np.asarray(x, dtype=float).copy()
        clipped = (vecs * np.clip(vals, 0.0, 1.0)) @ vecs.T
        return _flat(clipped)

    def _q(self, x, v):
        X = _mat(x, self._shape())
        Y = _mat(v, self._shape())
        X2 = X @ X
        return _flat(X @ Y @ X - X2 @ Y @ X2)

    def _dq(self, x, d, v):
        X = _mat(x, self._shape())
        D = _mat(d, self._shape())
        Y = _mat(v, self._shape())
        X2 = X @ X
        DX2 = D @ X + X @ D
        return _flat(D @ Y @ X + X @ Y @ D - DX2 @ Y @ X2 - X2 @ Y @ DX2)

    def _dq_form(self, x, v, w):
        X = _mat(x, self._shape())
        Y = _mat(v, self._shape())
        W = _mat(w, self._shape())
        Xt = X.T
        X2t = (X @ X).T
        g = (W @ Xt @ Y.T + Y.T @ Xt @ W
             - W @ X2t @ Y.T @ Xt - Xt @ W @ X2t @ Y.T
             - Y.T @ X2t @ W @ Xt - Xt @ Y.T @ X2t @ W)
        return _flat(g)

    def normal_cone_project(self, x, z, tol=DEFAULT_TOL):
        X = _sym(_mat(_vec(x, self.n), self._shape()))
        Z = _sym(_mat(_vec(z, self.n, "z"), self._shape()))
        vals, vecs = np.linalg.eigh(X)
        out = np.zeros((self.s, self.s))
        low = vals <= tol
        high = vals >= 1.0 - tol
        if np.any(low):
            V0 = vecs[:, low]
            out -= V0 @ _psd_part(-V0.T @ Z @ V0) @ V0.T
        if np.any(high):
            V1 = vecs[:, high]
            out += V1 @ _psd_part(V1.T @ Z @ V1) @ V1.T
        return _flat(out)


class LinearInequalities(ConvexSet):
    """{x : A^T x <= b} with A of shape (n, m).

    The affine-hull projector assumes a full-dimensional polyhedron (a Slater
    point exists); degenerate instances are out of scope.
    """

    kind = "linear_inequalities"

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.ndim != 2 or b.shape != (A.shape[1],):
            raise DimensionMismatch("A must be (n, m) with b of length m")
        norms = np.linalg.norm(A, axis=0)
        if np.any(norms == 0.0):
            raise ValueError("columns of A must be nonzero")
        self.A = A
        self.b = b
        self._pinv = np.linalg.pinv(A)      # (m, n)
        self._gram = A.T @ A

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.A.shape[1]

    def project(self, x):
        # dual coordinate descent on the nonnegative multipliers
        x = _vec(x, self.n)
        slack = self.b - self.A.T @ x
        if np.all(slack >= 0.0):
            return x.copy()
        G = self._gram
        h = -slack  # A^T x - b
        lam = np.zeros(self.m)
        diag = np.diag(G)
        scale = 1.0 + np.linalg.norm(x)
        for _ in range(100_000):
            shift = 0.0
            for i in range(self.m):
                gi = G[i] @ lam - h[i]
                new = max(0.0, lam[i] - gi / diag[i])
                shift = max(shift, abs(new - lam[i]) * np.sqrt(diag[i]))
                lam[i] = new
            if shift <= 1e-15 * scale:
                break
        return x - self.A @ lam

    def _slack(self, x):
        return np.maximum(self.b - self.A.T @ x, 0.0)

    def _q(self, x, v):
        s = self._slack(x)
        pv = self._pinv @ v
        return v + self._pinv.T @ ((s * s - 1.0) * pv)

    def _dq(self, x, d, v):
        s = self._slack(x)
        pv = self._pinv @ v
        return self._pinv.T @ ((-2.0 * s * (self.A.T @ d)) * pv)

    def _dq_form(self, x, v, w):
        s = self._slack(x)
        pv = self._pinv @ v
        pw = self._pinv @ w
        return -2.0 * self.A @ (s * pv * pw)

    def affine_hull_projector(self):
        return np.eye(self.n)

    def normal_cone_project(self, x, z, tol=DEFAULT_TOL):
        x = _vec(x, self.n)
        z = _vec(z, self.n, "z")
        active = self.b - self.A.T @ x <= tol * (1.0 + np.abs(self.b))
        if not np.any(active):
            return np.zeros_like(z)
        Aact = self.A[:, active]
        lam, _ = nnls(Aact, z)
        return Aact @ lam

    def _params(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}


class Product(ConvexSet):
    """Cartesian product of descriptors; vectors are concatenated blocks."""

    kind = "product"

    def __init__(self, factors):
        factors = list(factors)
        if not factors:
            raise ValueError("product of zero factors")
        self.factors = tuple(factors)
        dims = [f.n for f in factors]
        self._offsets = np.concatenate([[0], np.cumsum(dims)])

    @property
    def n(self):
        return int(self._offsets[-1])

    def _blocks(self, x):
        return [x[self._offsets[i]:self._offsets[i + 1]]
                for i in range(len(self.factors))]

    def _assemble(self, parts):
        return np.concatenate(parts)

    def project(self, x):
        x = _vec(x, self.n)
        return self._assemble([f.project(b) for f, b in zip(self.factors, self._blocks(x))])

    def _q(self, x, v):
        return self._assemble([f._q(bx, bv) for f, bx, bv in
                               zip(self.factors, self._blocks(x), self._blocks(v))])

    def _dq(self, x, d, v):
        return self._assemble([f._dq(bx, bd, bv) for f, bx, bd, bv in
                               zip(self.factors, self._blocks(x), self._blocks(d),
                                   self._blocks(v))])

    def _dq_form(self, x, v, w):
        return self._assemble([f._dq_form(bx, bv, bw) for f, bx, bv, bw in
                               zip(self.factors, self._blocks(x), self._blocks(v),
                                   self._blocks(w))])

    def affine_hull_projector(self):
        return block_diag(*[f.affine_hull_projector() for f in self.factors])

    def normal_cone_project(self, x, z, tol=DEFAULT_TOL):
        x = _vec(x, self.n)
        z = _vec(z, self.n, "z")
        return self._assemble([f.normal_cone_project(bx, bz, tol)
                               for f, bx, bz in
                               zip(self.factors, self._blocks(x), self._blocks(z))])

    def _params(self):
        return {"factors": [f.to_json() for f in self.factors]}


def set_from_json(obj):
    """Rebuild a descriptor from its JSON dict form."""
    kind = obj["kind"]
    if kind == "box":
        return Box(_bounds_from_json(obj["lower"], -np.inf),
                   _bounds_from_json(obj["upper"], np.inf))
    if kind == "nonneg_orthant":
        return NonnegOrthant(obj["n"])
    if kind == "norm_ball":
        return NormBall(obj["n"], obj["radius"], obj["exponent"])
    if kind == "simplex":
        return Simplex(obj["n"])
    if kind == "second_order_cone":
        return SecondOrderCone(obj["n"])
    if kind == "spectral_ball":
        return SpectralBall(obj["m"], obj["s"])
    if kind == "psd_cone":
        return PsdCone(obj["s"])
    if kind == "psd_spectral_ball":
        return PsdSpectralBall(obj["s"])
    if kind == "linear_inequalities":
        return LinearInequalities(np.array(obj["A"], dtype=float),
                                  np.array(obj["b"], dtype=float))
    if kind == "product":
        return Product([set_from_json(f) for f in obj["factors"]])
    raise ValueError(f"unknown set kind {kind!r}")
