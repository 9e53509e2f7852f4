"""Seeded generators for the three benchmark families.

npca -- maximize variance of a nonnegative unit vector with an l1 sparsity
        charge: f(x) = -||B^T x||^2 / 2 + rho * sum(x), c(x) = ||x||^2 - 1,
        domain the nonnegative orthant, closed-form dissolving map.
qpb  -- indefinite quadratic over the unit ball with a shifted-sphere
        equality: f(x) = x^T Qmat x / 2 + q^T x, c(x) = ||x - d||^2 - 1.
fpca -- min-max reformulation of group-fair PCA in variables (P, y, z):
        f = z, per-group equalities plus a Frobenius-norm equality, domain
        spectral ball x orthant x free scalar.

All generators are bit-reproducible functions of (dims, seed); tensors draw
from fixed sub-seeds.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .mappings import ConstraintMap, PenaltyProblem, build_aq, closed_form_map
from .sets import Box, NonnegOrthant, NormBall, Product, SpectralBall

logger = logging.getLogger("dissolve")

__all__ = [
    "ProblemInstance",
    "DEFAULT_BETA",
    "FPCA_BETA_GRID",
    "gen_npca",
    "gen_qpb",
    "gen_fpca",
    "build_problem",
    "build_npca_problem",
    "build_qpb_problem",
    "build_fpca_problem",
    "feasible_points",
    "reference_small_oracle",
    "fpca_objective",
]

DEFAULT_BETA = {"npca": 100.0, "qpb": 10.0, "fpca": 1.0}
FPCA_BETA_GRID = (0.1, 1.0, 10.0)

_FAMILY_SUBSEED = {"npca": 11, "qpb": 22, "fpca": 33}


@dataclass(frozen=True)
class ProblemInstance:
    family: str
    seed: int
    x0: np.ndarray
    data: dict

    def to_json(self):
        def conv(v):
            if isinstance(v, np.ndarray):
                return v.tolist()  # row-major nested lists
            if isinstance(v, (list, tuple)):
                return [conv(u) for u in v]
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v

        return {
            "family": self.family,
            "seed": int(self.seed),
            "x0": self.x0.tolist(),
            "data": {k: conv(v) for k, v in self.data.items()},
        }

    @staticmethod
    def from_json(obj):
        family = obj["family"]
        data = dict(obj["data"])
        if family == "npca":
            data["B"] = np.array(data["B"], dtype=float)
        elif family == "qpb":
            data["Qmat"] = np.array(data["Qmat"], dtype=float)
            data["qvec"] = np.array(data["qvec"], dtype=float)
            data["d"] = np.array(data["d"], dtype=float)
        elif family == "fpca":
            data["A"] = [np.array(A, dtype=float) for A in data["A"]]
            data["hat_sq"] = np.array(data["hat_sq"], dtype=float)
            data["m"] = np.array(data["m"], dtype=float)
        else:
            raise ValueError(f"unknown family {family!r}")
        return ProblemInstance(
            family=family,
            seed=int(obj["seed"]),
            x0=np.array(obj["x0"], dtype=float),
            data=data,
        )

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @staticmethod
    def load(path):
        with open(path) as fh:
            return ProblemInstance.from_json(json.load(fh))


def _rng(family, seed, tensor):
    return np.random.default_rng([int(seed), _FAMILY_SUBSEED[family], int(tensor)])


# ---------------------------------------------------------------- npca


def build_npca_problem(B, rho, beta=None):
    B = np.asarray(B, dtype=float)
    n = B.shape[0]
    rho = float(rho)

    def f_value(x):
        bx = B.T @ x
        return -0.5 * float(bx @ bx) + rho * float(np.sum(x))

    def f_grad(x):
        return -(B @ (B.T @ x)) + rho

    cmap = ConstraintMap(
        p=1,
        value=lambda x: np.array([x @ x - 1.0]),
        jac_t_apply=lambda x, v: 2.0 * v[0] * x,
        jac_apply=lambda x, d: np.array([2.0 * (x @ d)]),
        hess_apply=lambda x, lam, d: 2.0 * lam[0] * d,
    )
    domain = NonnegOrthant(n)
    amap = closed_form_map("sphere_nonneg", H=None)
    return PenaltyProblem(f_value=f_value, f_grad=f_grad, cmap=cmap, amap=amap,
                          domain=domain, beta=DEFAULT_BETA["npca"] if beta is None else beta)


def gen_npca(n, m_cols, rho=0.0, seed=0, beta=None):
    """Data matrix rescaled so its spectral norm equals its column count;
    start from the normalized absolute value of a Gaussian vector."""
    B = _rng("npca", seed, 0).standard_normal((n, m_cols))
    B *= m_cols / np.linalg.norm(B, 2)
    g = _rng("npca", seed, 1).standard_normal(n)
    x0 = np.abs(g) / np.linalg.norm(g)
    inst = ProblemInstance(family="npca", seed=seed, x0=x0,
                           data={"B": B, "rho": float(rho),
                                 "n": int(n), "m_cols": int(m_cols)})
    return inst, build_npca_problem(B, rho, beta=beta)


# ---------------------------------------------------------------- qpb


def build_qpb_problem(Qmat, qvec, beta=None, sigma=1.0):
    Qmat = np.asarray(Qmat, dtype=float)
    qvec = np.asarray(qvec, dtype=float)
    n = qvec.size
    d = np.zeros(n)
    d[0] = 0.5

    def f_value(x):
        return 0.5 * float(x @ (Qmat @ x)) + float(qvec @ x)

    def f_grad(x):
        return Qmat @ x + qvec

    cmap = ConstraintMap(
        p=1,
        value=lambda x: np.array([(x - d) @ (x - d) - 1.0]),
        jac_t_apply=lambda x, v: 2.0 * v[0] * (x - d),
        jac_apply=lambda x, dd: np.array([2.0 * ((x - d) @ dd)]),
        hess_apply=lambda x, lam, dd: 2.0 * lam[0] * dd,
    )
    domain = NormBall(n, radius=1.0, exponent=2.0)
    amap = build_aq(domain, cmap, sigma=sigma, mode="generic_analytic")
    return PenaltyProblem(f_value=f_value, f_grad=f_grad, cmap=cmap, amap=amap,
                          domain=domain, beta=DEFAULT_BETA["qpb"] if beta is None else beta)


def gen_qpb(n, edge_density=0.5, seed=0, beta=None):
    """Laplacian of a random graph, negated and Frobenius-normalized; the
    linear term is a normalized uniform vector."""
    attempt = 0
    while True:
        rng = _rng("qpb", seed, attempt)
        iu = np.triu_indices(n, 1)
        edges = rng.random(iu[0].size) < edge_density
        if edges.any():
            break
        logger.warning("qpb seed %s produced an empty graph; regenerating "
                       "with sub-seed %s", seed, attempt + 1)
        attempt += 1
    adj = np.zeros((n, n))
    adj[iu[0][edges], iu[1][edges]] = 1.0
    adj = adj + adj.T
    lap = np.diag(adj.sum(axis=1)) - adj
    Qmat = -lap / np.linalg.norm(lap, "fro")
    qprime = _rng("qpb", seed, 1000).random(n)
    qvec = qprime / np.linalg.norm(qprime)
    g = _rng("qpb", seed, 1001).standard_normal(n)
    x0 = g / np.linalg.norm(g)
    while np.linalg.norm(x0) > 1.0:  # land inside the ball exactly
        x0 = x0 / np.linalg.norm(x0)
    d = np.zeros(n)
    d[0] = 0.5
    inst = ProblemInstance(family="qpb", seed=seed, x0=x0,
                           data={"Qmat": Qmat, "qvec": qvec, "d": d,
                                 "n": int(n), "edge_density": float(edge_density)})
    return inst, build_qpb_problem(Qmat, qvec, beta=beta)


# ---------------------------------------------------------------- fpca


def _fpca_layout(n, k, d):
    return n * d, n * d + k  # end of P block, end of y block


def _split_fpca(x, n, k, d):
    pe, ye = _fpca_layout(n, k, d)
    P = x[:pe].reshape((n, d), order="F")
    return P, x[pe:ye], x[ye]


def fpca_objective(P, data):
    """max over groups of the normalized reconstruction gap."""
    vals = [(data["hat_sq"][i] - np.linalg.norm(data["A"][i] @ P, "fro") ** 2)
            / data["m"][i] for i in range(len(data["A"]))]
    return float(np.max(vals))


def build_fpca_problem(A_list, d, hat_sq=None, m_sizes=None, beta=None, sigma=1.0):
    A_list = [np.asarray(A, dtype=float) for A in A_list]
    k = len(A_list)
    n = A_list[0].shape[1]
    d = int(d)
    if m_sizes is None:
        m_sizes = np.array([A.shape[0] for A in A_list], dtype=float)
    if hat_sq is None:
        hat_sq = np.array([np.sum(np.linalg.svd(A, compute_uv=False)[:d] ** 2)
                           for A in A_list])
    AtA = [A.T @ A for A in A_list]
    pe, ye = _fpca_layout(n, k, d)
    dim = ye + 1

    def f_value(x):
        return float(x[ye])

    def f_grad(x):
        g = np.zeros(dim)
        g[ye] = 1.0
        return g

    def c_value(x):
        P, y, z = _split_fpca(x, n, k, d)
        out = np.empty(k + 1)
        for i in range(k):
            out[i] = (hat_sq[i] - np.sum((A_list[i] @ P) ** 2)) / m_sizes[i] + y[i] - z
        out[k] = np.sum(P * P) - d
        return out

    def jac_t(x, v):
        P, _, _ = _split_fpca(x, n, k, d)
        GP = np.zeros((n, d))
        for i in range(k):
            if v[i] != 0.0:
                GP += v[i] * (-2.0 / m_sizes[i]) * (AtA[i] @ P)
        GP += v[k] * 2.0 * P
        out = np.zeros(dim)
        out[:pe] = GP.reshape(-1, order="F")
        out[pe:ye] = v[:k]
        out[ye] = -np.sum(v[:k])
        return out

    def jac(x, dd):
        P, _, _ = _split_fpca(x, n, k, d)
        DP, dy, dz = _split_fpca(dd, n, k, d)
        out = np.empty(k + 1)
        for i in range(k):
            out[i] = (-2.0 / m_sizes[i]) * np.sum((AtA[i] @ P) * DP) + dy[i] - dz
        out[k] = 2.0 * np.sum(P * DP)
        return out

    def hess(x, lam, dd):
        DP, _, _ = _split_fpca(dd, n, k, d)
        HP = np.zeros((n, d))
        for i in range(k):
            if lam[i] != 0.0:
                HP += lam[i] * (-2.0 / m_sizes[i]) * (AtA[i] @ DP)
        HP += lam[k] * 2.0 * DP
        out = np.zeros(dim)
        out[:pe] = HP.reshape(-1, order="F")
        return out

    cmap = ConstraintMap(p=k + 1, value=c_value, jac_t_apply=jac_t,
                         jac_apply=jac, hess_apply=hess)
    domain = Product([SpectralBall(n, d), NonnegOrthant(k),
                      Box([-np.inf], [np.inf])])
    amap = build_aq(domain, cmap, sigma=sigma, mode="generic_analytic")
    return PenaltyProblem(f_value=f_value, f_grad=f_grad, cmap=cmap, amap=amap,
                          domain=domain, beta=DEFAULT_BETA["fpca"] if beta is None else beta)


def gen_fpca(n, k, d, seed=0, beta=None):
    """Square standard-normal group matrices; the start point scales a random
    matrix to Frobenius norm sqrt(d) and is pulled into the spectral ball
    (logged) when its top singular value exceeds one."""
    A_list = [_rng("fpca", seed, i).standard_normal((n, n)) for i in range(k)]
    hat_sq = np.array([np.sum(np.linalg.svd(A, compute_uv=False)[:d] ** 2)
                       for A in A_list])
    m_sizes = np.full(k, float(n))
    data = {"A": A_list, "hat_sq": hat_sq, "m": m_sizes,
            "n": int(n), "k": int(k), "d": int(d)}

    R = _rng("fpca", seed, 1000).standard_normal((n, d))
    P0 = np.sqrt(d) * R / np.linalg.norm(R, "fro")
    s1 = np.linalg.norm(P0, 2)
    if s1 > 1.0:
        logger.info("fpca seed %s: start scaled by 1/%.6f to enter the "
                    "spectral ball", seed, s1)
        while np.linalg.norm(P0, 2) > 1.0:
            P0 = P0 / np.linalg.norm(P0, 2)
    z0 = fpca_objective(P0, data) + 1.0
    g0 = np.array([(hat_sq[i] - np.sum((A_list[i] @ P0) ** 2)) / m_sizes[i]
                   for i in range(k)])
    y0 = z0 - g0  # slacks solve the group equalities; all >= 1 by choice of z0
    x0 = np.concatenate([P0.reshape(-1, order="F"), y0, [z0]])
    inst = ProblemInstance(family="fpca", seed=seed, x0=x0, data=data)
    return inst, build_fpca_problem(A_list, d, hat_sq=hat_sq, m_sizes=m_sizes,
                                    beta=beta)


# ---------------------------------------------------------------- shared


def gen_instance(family, seed=0, beta=None, **dims):
    if family == "npca":
        return gen_npca(dims["n"], dims["m_cols"], dims.get("rho", 0.0),
                        seed=seed, beta=beta)
    if family == "qpb":
        return gen_qpb(dims["n"], dims.get("edge_density", 0.5), seed=seed,
                       beta=beta)
    if family == "fpca":
        return gen_fpca(dims["n"], dims["k"], dims["d"], seed=seed, beta=beta)
    raise ValueError(f"unknown family {family!r}")


def build_problem(instance, beta=None):
    """Rebuild the penalty problem from a (possibly deserialized) instance."""
    data = instance.data
    if instance.family == "npca":
        return build_npca_problem(data["B"], data["rho"], beta=beta)
    if instance.family == "qpb":
        return build_qpb_problem(data["Qmat"], data["qvec"], beta=beta)
    if instance.family == "fpca":
        return build_fpca_problem(data["A"], data["d"], hat_sq=data["hat_sq"],
                                  m_sizes=data["m"], beta=beta)
    raise ValueError(f"unknown family {instance.family!r}")


def feasible_points(instance, count, seed=0):
    """Exactly feasible samples for the structural checks, one list per call."""
    rng = np.random.default_rng([int(seed), 77, _FAMILY_SUBSEED[instance.family]])
    data = instance.data
    out = []
    if instance.family == "npca":
        n = data["n"]
        while len(out) < count:
            g = np.abs(rng.standard_normal(n))
            out.append(g / np.linalg.norm(g))
    elif instance.family == "qpb":
        n = data["n"]
        d = np.zeros(n)
        d[0] = 0.5
        while len(out) < count:
            x = None
            for _ in range(200):  # rejection keeps the ball constraint
                u = rng.standard_normal(n)
                u /= np.linalg.norm(u)
                if np.linalg.norm(d + u) <= 1.0:
                    x = d + u
                    break
            if x is None:
                # the feasible cap needs u_1 <= -1/4, which a uniform sphere
                # direction almost never hits at large n; build it directly
                s = 0.25 + 0.75 * rng.random()
                w = rng.standard_normal(n - 1)
                w *= np.sqrt(max(0.0, 1.0 - s * s)) / np.linalg.norm(w)
                u = np.concatenate([[-s], w])
                u /= np.linalg.norm(u)
                x = d + u
                if np.linalg.norm(x) > 1.0:
                    continue
            out.append(x)
    elif instance.family == "fpca":
        n, k, d = data["n"], data["k"], data["d"]
        while len(out) < count:
            P, _ = np.linalg.qr(rng.standard_normal((n, d)))
            g = np.array([(data["hat_sq"][i] - np.sum((data["A"][i] @ P) ** 2))
                          / data["m"][i] for i in range(k)])
            z = float(np.max(g) + 0.5 + rng.random())
            y = z - g
            out.append(np.concatenate([P.reshape(-1, order="F"), y, [z]]))
    else:
        raise ValueError(f"unknown family {instance.family!r}")
    return out


def near_feasible_points(instance, count, seed=0, scale=0.05):
    """Points in the domain near (not on) the feasible set.

    A floor on the constraint violation keeps the samples away from the
    feasible manifold itself, where rank-degenerate constraint systems make
    the penalty objective arbitrarily stiff; the perturbation grows
    deterministically until the floor holds.
    """
    rng = np.random.default_rng([int(seed), 78, _FAMILY_SUBSEED[instance.family]])
    prob = build_problem(instance)
    out = []
    for x in feasible_points(instance, count, seed=seed):
        direction = rng.standard_normal(x.size)
        width = scale
        for _ in range(40):
            y = prob.domain.project(x + width * direction)
            if np.linalg.norm(prob.cmap.value(y)) >= 0.25 * scale:
                break
            width *= 1.5
        out.append(y)
    return out


def reference_small_oracle(instance):
    """Brute-force optimum for tiny instances (npca with n <= 3, qpb with n = 2)."""
    data = instance.data
    if instance.family == "npca":
        B, rho, n = data["B"], data["rho"], data["n"]
        if n > 3:
            raise ValueError("oracle supports npca only up to n = 3")
        if n == 1:
            xs = np.ones((1, 1))
        elif n == 2:
            theta = np.linspace(0.0, np.pi / 2, 2001)
            xs = np.vstack([np.cos(theta), np.sin(theta)])
        else:
            t1 = np.linspace(0.0, np.pi / 2, 1000)
            t2 = np.linspace(0.0, np.pi / 2, 1000)
            T1, T2 = np.meshgrid(t1, t2, indexing="ij")
            xs = np.vstack([(np.cos(T1)).ravel(),
                            (np.sin(T1) * np.cos(T2)).ravel(),
                            (np.sin(T1) * np.sin(T2)).ravel()])
        vals = -0.5 * np.sum((B.T @ xs) ** 2, axis=0) + rho * np.sum(xs, axis=0)
        return float(vals.min())
    if instance.family == "qpb":
        if data["n"] != 2:
            raise ValueError("oracle supports qpb only at n = 2")
        Qm, qv = data["Qmat"], data["qvec"]
        # arc of the shifted unit circle inside the unit ball: cos(theta) <= -1/4
        t0 = np.arccos(-0.25)
        theta = np.linspace(t0, 2.0 * np.pi - t0, 100_001)
        xs = np.vstack([0.5 + np.cos(theta), np.sin(theta)])
        mask = np.sum(xs * xs, axis=0) <= 1.0 + 1e-12
        xs = xs[:, mask]
        vals = 0.5 * np.sum(xs * (Qm @ xs), axis=0) + qv @ xs
        return float(vals.min())
    raise ValueError(f"oracle does not cover family {instance.family!r}")
