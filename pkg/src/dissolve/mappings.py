"""Constraint maps, constraint-dissolving mappings, and the penalty objective.

The penalty objective is h(x) = f(A(x)) + (beta/2) * ||c(x)||^2, where A is a
smooth map that fixes the feasible set {x in X : c(x) = 0} pointwise and whose
transposed Jacobian annihilates range(grad c) there.  The generic construction
is

    A(x) = x - Q(x) G(x) (G(x)^T Q(x) G(x) + sigma ||c(x)||^2 I)^+ c(x),

with G(x) the n-by-p matrix of constraint gradients and Q the domain's
projective mapping.  The p-by-p core is formed densely and pseudo-inverted
with an SVD cutoff, so p is assumed small.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .sets import ConvexSet, _sym

logger = logging.getLogger("dissolve")

PINV_RCOND = 1e-12  # relative SVD cutoff for the dissolving core

__all__ = [
    "CapabilityError",
    "ConstraintMap",
    "DissolvingMap",
    "PenaltyProblem",
    "empty_constraint_map",
    "build_aq",
    "aq_vjp_analytic",
    "aq_vjp_fd",
    "closed_form_map",
    "h_value",
    "h_grad",
]


class CapabilityError(RuntimeError):
    """A requested mode needs callbacks that were not supplied."""


@dataclass(frozen=True)
class ConstraintMap:
    """Smooth equality constraints c : R^n -> R^p with Jacobian products.

    jac_t_apply(x, v) returns G(x) v (columns of G are constraint gradients);
    jac_apply(x, d) returns G(x)^T d; hess_apply(x, lam, d), when present,
    returns sum_i lam_i * Hess(c_i)(x) d.
    """

    p: int
    value: Callable[[np.ndarray], np.ndarray]
    jac_t_apply: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jac_apply: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_apply: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None

    def jac_matrix(self, x):
        """Materialize G(x) as an n-by-p array, one column per constraint."""
        x = np.asarray(x, dtype=float)
        if self.p == 0:
            return np.zeros((x.size, 0))
        cols = [self.jac_t_apply(x, e) for e in np.eye(self.p)]
        return np.column_stack(cols)


def empty_constraint_map(n):
    """Constraint map with p = 0 (no equality constraints)."""
    return ConstraintMap(
        p=0,
        value=lambda x: np.zeros(0),
        jac_t_apply=lambda x, v: np.zeros(n),
        jac_apply=lambda x, d: np.zeros(0),
        hess_apply=lambda x, lam, d: np.zeros(n),
    )


@dataclass(frozen=True)
class DissolvingMap:
    """A(x) plus its transposed-Jacobian-vector product vjp(x, w) = gradA(x) w."""

    value: Callable[[np.ndarray], np.ndarray]
    vjp: Callable[[np.ndarray, np.ndarray], np.ndarray]
    mode: str  # closed_form | generic_analytic | generic_fd
    sigma: Optional[float] = None


@dataclass(frozen=True)
class PenaltyProblem:
    """Objective f, constraints c, domain X, dissolving map A, and beta."""

    f_value: Callable[[np.ndarray], float]
    f_grad: Callable[[np.ndarray], np.ndarray]
    cmap: ConstraintMap
    amap: DissolvingMap
    domain: ConvexSet
    beta: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")

    @property
    def n(self):
        return self.domain.n

    def with_beta(self, beta):
        return dataclasses.replace(self, beta=float(beta))


def _aq_value_parts(domain, cmap, sigma, x):
    x = np.asarray(x, dtype=float)
    c = cmap.value(x)
    G = cmap.jac_matrix(x)
    QG = np.column_stack([domain._q(x, G[:, j]) for j in range(cmap.p)]) \
        if cmap.p else np.zeros((x.size, 0))
    core = _sym(G.T @ QG) + sigma * float(c @ c) * np.eye(cmap.p)
    core_pinv = np.linalg.pinv(core, rcond=PINV_RCOND)
    u = core_pinv @ c
    return c, G, QG, core_pinv, u


def build_aq(domain, cmap, sigma=1.0, mode="auto"):
    """Construct the generic dissolving map for (domain, cmap).

    mode: "generic_analytic" needs domain derivatives and cmap.hess_apply;
    "generic_fd" differentiates A by central differences; "auto" picks the
    analytic route when second-order callbacks exist.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if cmap.p == 0:
        return DissolvingMap(value=lambda x: np.asarray(x, dtype=float).copy(),
                             vjp=lambda x, w: np.asarray(w, dtype=float).copy(),
                             mode="closed_form", sigma=float(sigma))

    if mode == "auto":
        if cmap.hess_apply is not None:
            mode = "generic_analytic"
        else:
            mode = "generic_fd"
            logger.warning("constraint map has no Hessian products; "
                           "falling back to finite-difference Jacobians of A")
    if mode == "generic_analytic" and cmap.hess_apply is None:
        raise CapabilityError("generic_analytic needs cmap.hess_apply; "
                              "use mode='generic_fd' instead")

    def value(x):
        x = np.asarray(x, dtype=float)
        _, _, QG, _, u = _aq_value_parts(domain, cmap, sigma, x)
        return x - QG @ u

    if mode == "generic_analytic":

        def vjp(x, w):
            return _aq_vjp_analytic_impl(domain, cmap, sigma, x, w)

    else:

        def vjp(x, w, _value=value):
            return _fd_vjp(_value, x, w)

    return DissolvingMap(value=value, vjp=vjp, mode=mode, sigma=float(sigma))


def _aq_vjp_analytic_impl(domain, cmap, sigma, x, w):
    # product rule across Q G, the pseudo-inverted core, and c; exact
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    c, G, QG, core_pinv, u = _aq_value_parts(domain, cmap, sigma, x)
    Qw = domain._q(x, w)
    a = core_pinv @ (G.T @ Qw)
    Gu = G @ u
    Ga = G @ a
    QGu = domain._q(x, Gu)
    QGa = domain._q(x, Ga)
    Gc = cmap.jac_t_apply(x, c)
    hess = cmap.hess_apply
    grad_phi = (domain._dq_form(x, Gu, w)
                + hess(x, u, Qw)
                + Ga
                - hess(x, a, QGu)
                - domain._dq_form(x, Gu, Ga)
                - hess(x, u, QGa)
                - 2.0 * sigma * float(a @ u) * Gc)
    return w - grad_phi


def aq_vjp_analytic(amap, x, w):
    """Exact gradA(x) w for maps built with mode='generic_analytic'."""
    if amap.mode != "generic_analytic":
        raise CapabilityError(
            "analytic Jacobian products are only available for "
            "mode='generic_analytic' maps; use aq_vjp_fd for the rest")
    return amap.vjp(x, w)


def _fd_vjp(value, x, w):
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    delta = np.cbrt(np.finfo(float).eps) * (1.0 + np.linalg.norm(x))
    out = np.empty_like(x)
    for j in range(x.size):
        step = np.zeros_like(x)
        step[j] = delta
        out[j] = w @ (value(x + step) - value(x - step)) / (2.0 * delta)
    return out


def aq_vjp_fd(amap, x, w):
    """Central-difference gradA(x) w; 2n evaluations of A."""
    return _fd_vjp(amap.value, x, w)


def closed_form_map(kind, **params):
    """Hand-differentiated dissolving maps for specific constraint families.

    kinds: sphere_nonneg(H), lq_nonneg(exponent), psd_diag(s),
    nonneg_orthonormal_diag(m, s).  H=None means the identity quadratic form.
    """
    if kind == "sphere_nonneg":
        H = params.get("H")
        if H is not None:
            H = np.asarray(H, dtype=float)
            if H.ndim != 2 or H.shape[0] != H.shape[1]:
                raise ValueError("H must be square")
            if np.abs(H - H.T).max() > 1e-12:
                raise ValueError("H must be symmetric")

        def apply_h(x):
            return x if H is None else H @ x

        def value(x):
            x = np.asarray(x, dtype=float)
            return x - 0.5 * x * (x @ apply_h(x) - 1.0)

        def vjp(x, w):
            x = np.asarray(x, dtype=float)
            hx = apply_h(x)
            alpha = 0.5 * (3.0 - x @ hx)
            return alpha * w - hx * (x @ w)

    elif kind == "lq_nonneg":
        q = float(params["exponent"])
        if q <= 1:
            raise ValueError("exponent must exceed 1")

        def value(x):
            x = np.asarray(x, dtype=float)
            r = np.sum(np.abs(x) ** q)
            return x / (1.0 + (r - 1.0) / q)

        def vjp(x, w):
            x = np.asarray(x, dtype=float)
            r = np.sum(np.abs(x) ** q)
            den = 1.0 + (r - 1.0) / q
            g = np.sign(x) * np.abs(x) ** (q - 1.0)
            return w / den - g * (x @ w) / den ** 2

    elif kind == "psd_diag":
        s = int(params["s"])

        def value(x):
            X = np.asarray(x, dtype=float).reshape((s, s), order="F")
            D = np.diag(np.diag(X))
            out = X @ (2.0 * np.eye(s) - D)
            return _sym(out).reshape(-1, order="F")

        def vjp(x, w):
            X = np.asarray(x, dtype=float).reshape((s, s), order="F")
            W = _sym(np.asarray(w, dtype=float).reshape((s, s), order="F"))
            D = np.diag(np.diag(X))
            out = W @ (2.0 * np.eye(s) - D) - np.diag(np.diag(X.T @ W))
            return out.reshape(-1, order="F")

    elif kind == "nonneg_orthonormal_diag":
        m, s = int(params["m"]), int(params["s"])

        def value(x):
            X = np.asarray(x, dtype=float).reshape((m, s), order="F")
            delta = np.sum(X * X, axis=0) - 1.0
            return (X - 0.5 * X * delta[None, :]).reshape(-1, order="F")

        def vjp(x, w):
            X = np.asarray(x, dtype=float).reshape((m, s), order="F")
            W = np.asarray(w, dtype=float).reshape((m, s), order="F")
            delta = np.sum(X * X, axis=0) - 1.0
            alpha = 1.0 - 0.5 * delta
            out = W * alpha[None, :] - X * np.sum(X * W, axis=0)[None, :]
            return out.reshape(-1, order="F")

    else:
        raise ValueError(f"unknown closed-form kind {kind!r}")

    return DissolvingMap(value=value, vjp=vjp, mode="closed_form", sigma=None)


def h_value(prob, x):
    """Penalty objective f(A(x)) + (beta/2)||c(x)||^2.

    Callers are expected to supply x in the domain (within tolerance); the
    smooth formulas extend off the set, which finite-difference oracles rely
    on.
    """
    x = np.asarray(x, dtype=float)
    c = prob.cmap.value(x)
    return float(prob.f_value(prob.amap.value(x)) + 0.5 * prob.beta * (c @ c))


def h_grad(prob, x):
    """Gradient of the penalty objective: gradA(x) gradf(A(x)) + beta*G(x)c(x)."""
    x = np.asarray(x, dtype=float)
    gf = np.asarray(prob.f_grad(prob.amap.value(x)), dtype=float)
    out = prob.amap.vjp(x, gf)
    if prob.cmap.p and prob.beta != 0.0:
        out = out + prob.beta * prob.cmap.jac_t_apply(x, prob.cmap.value(x))
    return out
