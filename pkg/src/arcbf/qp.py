"""Per-step quadratic programs over ``z = (u, delta_clf)``.

Objective: ``1/2 ||u - u_nom||^2 + sigma * delta^2``, i.e. Hessian
``diag(1, ..., 1, 2 sigma)`` and linear term ``(-u_nom, 0)``.

Rows are stored as ``A z <= b``.  The Lyapunov row is the only one with a
nonzero slack coefficient; the barrier row is hard.

The problems here have at most a handful of rows, so :func:`solve_active_set`
enumerates active subsets exactly instead of iterating.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from arcbf.certificates import CbfSpec, ClfSpec, HocbfSpec, HocbfTerms, LieData

Array = np.ndarray

ROW_CLF = "AR_CLF_soft"
ROW_CBF = "AR_CBF_hard"
ROW_SLACK = "slack_nonneg"
MAX_ROWS = 8

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class QpWeights:
    """Cost weights and optional box on the commanded input.

    ``input_bounds`` limits the *commanded* ``u``.  Under attack the actuator
    sees ``u + d``, so these bounds do not limit the physical input.
    """

    sigma: float = 5.0
    u_nom: tuple = ()
    input_bounds: tuple | None = None
    slack_nonneg: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be > 0, got {self.sigma!r}")
        if self.input_bounds is not None:
            for lo, hi in self.input_bounds:
                if lo > hi:
                    raise ValueError(f"input bound lo={lo} exceeds hi={hi}")

    def nominal(self, m: int) -> Array:
        if len(self.u_nom) == 0:
            return np.zeros(m)
        if len(self.u_nom) != m:
            raise ValueError(f"u_nom has length {len(self.u_nom)}, expected {m}")
        return np.asarray(self.u_nom, dtype=float)


@dataclass
class QpProblem:
    hessian: Array
    linear: Array
    A: Array
    b: Array
    row_labels: tuple = ()

    @property
    def dim(self) -> int:
        return self.linear.size

    @property
    def ineq_rows(self) -> list[tuple[Array, float]]:
        return [(self.A[i], float(self.b[i])) for i in range(self.b.size)]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.hessian @ z + self.linear @ z)

    def row_index(self, label: str) -> int:
        return self.row_labels.index(label)


@dataclass
class QpSolution:
    z: Array
    objective: float
    active_set: tuple = ()
    status: str = OPTIMAL
    multipliers: Array | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def u(self) -> Array:
        return self.z[:-1]

    @property
    def delta(self) -> float:
        return float(self.z[-1])


def _base(m: int, w: QpWeights, u_nom):
    u_nom = w.nominal(m) if u_nom is None else np.asarray(u_nom, dtype=float)
    hess = np.eye(m + 1)
    hess[m, m] = 2.0 * w.sigma
    lin = np.concatenate([-u_nom, [0.0]])
    return hess, lin


def _extra_rows(m: int, w: QpWeights):
    rows, rhs, labels = [], [], []
    if w.input_bounds is not None:
        if len(w.input_bounds) != m:
            raise ValueError(f"input_bounds needs {m} (lo, hi) pairs")
        for i, (lo, hi) in enumerate(w.input_bounds):
            if np.isfinite(hi):
                a = np.zeros(m + 1)
                a[i] = 1.0
                rows.append(a), rhs.append(float(hi)), labels.append(f"input_upper_{i}")
            if np.isfinite(lo):
                a = np.zeros(m + 1)
                a[i] = -1.0
                rows.append(a), rhs.append(-float(lo)), labels.append(f"input_lower_{i}")
    if w.slack_nonneg:
        a = np.zeros(m + 1)
        a[m] = -1.0
        rows.append(a), rhs.append(0.0), labels.append(ROW_SLACK)
    return rows, rhs, labels


def _clf_row(lie_v: LieData, psi_v: float, clf: ClfSpec, x) -> tuple[Array, float]:
    target = clf.decrease_target(x) if x is not None else 0.0
    lg = np.atleast_1d(np.asarray(lie_v.lg, dtype=float))
    a = np.concatenate([lg, [-1.0]])
    return a, -clf.decay_rate * lie_v.phi_value + target - lie_v.lf - psi_v


def _finish(hess, lin, first_rows, m, w) -> QpProblem:
    rows, rhs, labels = _extra_rows(m, w)
    rows = [r for r, _, _ in first_rows] + rows
    rhs = [b for _, b, _ in first_rows] + rhs
    labels = [lab for _, _, lab in first_rows] + labels
    return QpProblem(hess, lin, np.array(rows, dtype=float), np.array(rhs, dtype=float), tuple(labels))


def assemble_ar_qp(
    lie_v: LieData,
    lie_h: LieData,
    psi_v: float,
    psi_h: float,
    clf: ClfSpec,
    cbf: CbfSpec,
    w: QpWeights,
    x=None,
    u_nom=None,
) -> QpProblem:
    """Unified QP with a soft compensated CLF row and a hard compensated CBF row.

    CLF:  ``L_f V + L_g V u + psi_v - delta <= -C V + target(x)``
    CBF:  ``-(L_f h + L_g h u - psi_h) <= lambda h``

    Passing ``psi_v = psi_h = 0`` gives the uncompensated CLF-CBF-QP; an
    ISSf tightening is ``psi_h = ||L_g h||^2 / eps``.
    """
    lg_h = np.atleast_1d(np.asarray(lie_h.lg, dtype=float))
    m = lg_h.size
    hess, lin = _base(m, w, u_nom)
    a_v, b_v = _clf_row(lie_v, psi_v, clf, x)
    a_h = np.concatenate([-lg_h, [0.0]])
    b_h = cbf.rate * lie_h.phi_value + lie_h.lf - psi_h
    return _finish(hess, lin, [(a_v, b_v, ROW_CLF), (a_h, b_h, ROW_CBF)], m, w)


def assemble_ar_hocbf_qp(
    lie_v: LieData,
    hocbf_terms: HocbfTerms,
    psi_v: float,
    psi_h2: float,
    clf: ClfSpec,
    spec: HocbfSpec,
    w: QpWeights,
    x=None,
    u_nom=None,
) -> QpProblem:
    """As :func:`assemble_ar_qp` with the second-order barrier row

    ``L_f^2 h + L_g L_f h u - psi_h2 >= -kp h - kd L_f h``.
    """
    h, lfh, lf2h, lglfh = hocbf_terms
    lglfh = np.atleast_1d(np.asarray(lglfh, dtype=float))
    m = lglfh.size
    hess, lin = _base(m, w, u_nom)
    a_v, b_v = _clf_row(lie_v, psi_v, clf, x)
    a_h = np.concatenate([-lglfh, [0.0]])
    b_h = lf2h + spec.kp * h + spec.kd * lfh - psi_h2
    return _finish(hess, lin, [(a_v, b_v, ROW_CLF), (a_h, b_h, ROW_CBF)], m, w)


_HINV_CACHE: dict[bytes, Array] = {}


def _inverse_hessian(H: Array) -> Array:
    key = H.tobytes() + bytes(str(H.shape), "ascii")
    Hinv = _HINV_CACHE.get(key)
    if Hinv is None:
        Hinv = _compute_inverse_hessian(H)
        if len(_HINV_CACHE) < 64:
            _HINV_CACHE[key] = Hinv
    return Hinv


def _compute_inverse_hessian(H: Array) -> Array:
    Hl = H.tolist()
    d = len(Hl)
    if all(Hl[i][j] == 0.0 for i in range(d) for j in range(d) if i != j):
        if not all(Hl[i][i] > 0 for i in range(d)):
            raise ValueError("hessian must be symmetric positive definite")
        return np.diag([1.0 / Hl[i][i] for i in range(d)])
    try:
        np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise ValueError("hessian must be symmetric positive definite") from exc
    return np.linalg.inv(H)


def solve_active_set(qp: QpProblem, feas_tol: float = 1e-9, dual_tol: float = 1e-10) -> QpSolution:
    """Exact minimiser by enumeration of active subsets.

    For each subset ``S`` (by increasing size, then lexicographically) the
    equality-constrained KKT system is solved through the Schur complement
    ``A_S H^-1 A_S^T mu = A_S z0 - b_S`` with ``z0 = -H^-1 c``.  A candidate is
    kept if its multipliers are nonnegative and the remaining rows hold.
    The QP is strictly convex, so its KKT point is unique and the first
    subset that passes both checks is returned.

    Tolerances are relative to the row magnitudes, so large compensation terms
    do not turn an optimal point into a spurious infeasibility.
    """
    H, c, A, b = qp.hessian, qp.linear, qp.A, qp.b
    k, d = b.size, c.size
    if k > MAX_ROWS:
        raise ValueError(f"at most {MAX_ROWS} rows supported, got {k}")
    Hinv = _inverse_hessian(H)
    z0 = -Hinv @ c
    if k == 0:
        return QpSolution(z0, qp.objective(z0), (), OPTIMAL, np.zeros(0))

    # plain floats: the problems are tiny and numpy call overhead dominates
    AH_np = A @ Hinv
    G = (AH_np @ A.T).tolist()
    AH = AH_np.tolist()
    rows = A.tolist()
    rhs = b.tolist()
    absrow = np.abs(A).tolist()
    z0l = z0.tolist()
    Hl = H.tolist()
    cl = c.tolist()
    r0 = [sum(a * zz for a, zz in zip(row, z0l)) - bi for row, bi in zip(rows, rhs)]
    R = range(d)

    best = None
    for size in range(0, min(k, d) + 1):
        for S in itertools.combinations(range(k), size):
            if size == 0:
                mu = ()
                z = z0l
            elif size == 1:
                i = S[0]
                g = G[i][i]
                if not g > 1e-14 * (1.0 + sum(a * a for a in rows[i])):
                    continue
                mu = (r0[i] / g,)
                z = [z0l[j] - AH[i][j] * mu[0] for j in R]
            elif size == 2:
                i, j = S
                g11, g12, g22 = G[i][i], G[i][j], G[j][j]
                det = g11 * g22 - g12 * g12
                if not det > 1e-12 * g11 * g22:
                    continue
                mu = ((g22 * r0[i] - g12 * r0[j]) / det, (g11 * r0[j] - g12 * r0[i]) / det)
                z = [z0l[l] - AH[i][l] * mu[0] - AH[j][l] * mu[1] for l in R]
            else:
                idx = list(S)
                M = np.array([[G[a][bb] for bb in idx] for a in idx])
                if np.linalg.cond(M) > 1e12:
                    continue
                mu = tuple(np.linalg.solve(M, [r0[a] for a in idx]).tolist())
                z = [z0l[l] - sum(AH[a][l] * mv for a, mv in zip(idx, mu)) for l in R]
            if size:
                scale = 1.0 + max(abs(v) for v in mu)
                if min(mu) < -dual_tol * scale:
                    continue
            ok = True
            for i in range(k):
                if i in S:
                    continue
                row = rows[i]
                lhs = sum(a * zz for a, zz in zip(row, z))
                tol = feas_tol * (1.0 + abs(rhs[i]) + sum(a * abs(zz) for a, zz in zip(absrow[i], z)))
                if lhs - rhs[i] > tol:
                    ok = False
                    break
            if not ok:
                continue
            obj = 0.5 * sum(z[a] * Hl[a][bb] * z[bb] for a in R for bb in R) + sum(ci * zz for ci, zz in zip(cl, z))
            best = (obj, z, S, mu)
            break
        if best is not None:
            break
    if best is None:
        return QpSolution(np.full(d, np.nan), math.inf, (), INFEASIBLE, None)
    obj, z, S, mu = best
    full_mu = np.zeros(k)
    for i, v in zip(S, mu):
        full_mu[i] = v
    return QpSolution(np.array(z, dtype=float), obj, tuple(S), OPTIMAL, full_mu)


def kkt_residuals(qp: QpProblem, sol: QpSolution) -> dict[str, float]:
    """Stationarity, primal violation, dual sign and complementarity residuals."""
    z, mu = sol.z, sol.multipliers
    slack = qp.A @ z - qp.b
    return {
        "stationarity": float(np.linalg.norm(qp.hessian @ z + qp.linear + qp.A.T @ mu)),
        "primal": float(max(0.0, np.max(slack))) if slack.size else 0.0,
        "dual": float(max(0.0, -np.min(mu))) if mu.size else 0.0,
        "complementarity": float(np.max(np.abs(mu * slack))) if mu.size else 0.0,
    }


def grid_resolution_bound(qp: QpProblem, grid_halfwidth: float, grid_points: int) -> float:
    """Objective change across one grid cell: ``max ||grad|| over the box * cell diagonal``."""
    d = qp.dim
    spacing = 2.0 * grid_halfwidth / (grid_points - 1)
    grad_max = np.linalg.norm(qp.hessian, 2) * grid_halfwidth * math.sqrt(d) + np.linalg.norm(qp.linear)
    return float(grad_max * spacing * math.sqrt(d))


def _box_vertices(qp: QpProblem, w: float, tol: float) -> Array:
    """Feasible vertices of ``{A z <= b} & [-w, w]^dim`` (every ``dim``-subset of planes)."""
    d = qp.dim
    planes_a = [qp.A[i] for i in range(qp.b.size)]
    planes_b = [float(v) for v in qp.b]
    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        planes_a += [e, -e]
        planes_b += [w, w]
    Aall, ball = np.array(planes_a), np.array(planes_b)
    out = []
    for subset in itertools.combinations(range(len(ball)), d):
        M = Aall[list(subset)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        z = np.linalg.solve(M, ball[list(subset)])
        if np.all(Aall @ z <= ball + tol):
            out.append(z)
    return np.array(out).reshape(-1, d)


def brute_force_qp(
    qp: QpProblem, grid_halfwidth: float, grid_points: int, chunk: int = 1 << 20, vertex_tol: float = 1e-9
) -> QpSolution:
    """Dense grid search over ``[-w, w]^dim`` plus every vertex of the clipped feasible polytope.

    Test oracle for ``dim <= 3``.  Grid points are checked exactly.  Vertices
    (allowed ``vertex_tol`` of violation, the solver's own feasibility
    tolerance) make the feasible/infeasible verdict exact inside the box even
    when the feasible set is a sliver thinner than a grid cell.
    """
    d = qp.dim
    if d > 3:
        raise ValueError("brute_force_qp supports dim <= 3")
    axis = np.linspace(-grid_halfwidth, grid_halfwidth, grid_points)
    total = grid_points**d
    best_obj, best_z = math.inf, None

    def consider(Z):
        nonlocal best_obj, best_z
        obj = 0.5 * ((Z @ qp.hessian) * Z).sum(axis=1) + Z @ qp.linear
        j = int(np.argmin(obj))
        if obj[j] < best_obj:
            best_obj, best_z = float(obj[j]), Z[j].copy()

    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        idx = np.unravel_index(flat, (grid_points,) * d)
        Z = np.stack([axis[i] for i in idx], axis=1)
        feas = np.all(Z @ qp.A.T <= qp.b, axis=1) if qp.b.size else np.ones(len(Z), bool)
        if feas.any():
            consider(Z[feas])
    V = _box_vertices(qp, grid_halfwidth, vertex_tol)
    if V.size:
        consider(V)
    if best_z is None:
        return QpSolution(np.full(d, np.nan), math.inf, (), INFEASIBLE, None)
    return QpSolution(best_z, best_obj, (), OPTIMAL, None)
