"""Search for the least favorable noise under a second-moment budget.

No certifiably global algorithm exists for this problem, so the strategy is
multi-start local search over a union of structured families: atomic noise
(supports proposed from the signal's difference lattices, weights optimized
by projected gradient on the moment polytope, positions refined by a
collision-aware coordinate search) and Gaussian mixtures (derivative-free
simplex search under exact mean/second-moment normalization).  The best value
found is therefore always an upper bound on the true infimum.

The variance constraint is imposed as the equality E[Y^2] = eps^2: the
optimum always spends the whole budget, so the inequality branch is redundant
for search purposes.  A diagnostic inequality mode is kept for verification.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np
from scipy.optimize import linprog, minimize

from .condexp import (
    ObjectiveReport,
    QuadratureConfig,
    objective_atomic,
    objective_density,
    objective_report_from_json,
    objective_value_search,
    smooth_with_gaussian,
)
from .dist import (
    AtomicDistribution,
    DensityNoise,
    Noise,
    NoiseBudget,
    SignalSpec,
    as_budget,
    distribution_from_json,
    distribution_to_json,
    mixture_moments,
    moments,
    pairwise_sum_classes,
    point_mass,
)
from .errors import BadGrid, DegenerateClass, InfeasibleSupport, NegativeEpsilon, ParseError


@dataclass
class OptimizerConfig:
    """Search budget and tolerances.

    ``tol_obj = 0`` resolves to ``1e-10 * var X`` at solve time.  ``q_min``
    is the weight-pruning threshold applied once a weight run converges.
    """

    restarts: int = 16
    max_iters: int = 500
    step_init: float = 0.1
    tol_obj: float = 0.0
    tol_feas: float = 1e-10
    support_size: int = 5
    q_min: float = 1e-6
    seed: int = 42

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ValueError("restarts and max_iters must be positive")
        if self.step_init <= 0.0 or self.tol_feas <= 0.0 or self.tol_obj < 0.0:
            raise ValueError("step and tolerances must be positive")
        if self.support_size < 2:
            raise ValueError("support_size must be at least 2")
        if not (0.0 < self.q_min < 1.0 / self.support_size):
            raise ValueError("q_min must lie in (0, 1/support_size)")

    def resolved_tol_obj(self, var_x: float) -> float:
        return self.tol_obj if self.tol_obj > 0.0 else 1e-10 * var_x


@dataclass
class SolveResult:
    """Best noise found for one budget, with feasibility and descent diagnostics."""

    best_noise: Noise
    report: ObjectiveReport
    epsilon: float
    saturation_gap: float
    restarts_used: int
    converged: bool
    trace: tuple[tuple[int, float], ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "best_noise": json.loads(distribution_to_json(self.best_noise)),
                "report": json.loads(self.report.to_json()),
                "epsilon": self.epsilon,
                "saturation_gap": self.saturation_gap,
                "restarts_used": self.restarts_used,
                "converged": self.converged,
                "trace": [[i, j] for i, j in self.trace],
            }
        )


def solve_result_from_json(text: str) -> SolveResult:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    expected = {
        "best_noise",
        "report",
        "epsilon",
        "saturation_gap",
        "restarts_used",
        "converged",
        "trace",
    }
    if not isinstance(doc, dict) or set(doc) != expected:
        raise ParseError("solve result fields do not match the schema")
    return SolveResult(
        best_noise=distribution_from_json(json.dumps(doc["best_noise"])),
        report=objective_report_from_json(json.dumps(doc["report"])),
        epsilon=doc["epsilon"],
        saturation_gap=doc["saturation_gap"],
        restarts_used=doc["restarts_used"],
        converged=doc["converged"],
        trace=tuple((int(i), float(j)) for i, j in doc["trace"]),
    )


@dataclass
class LCurvePoint:
    """One point of the traced value curve: budget, best value, witness noise."""

    epsilon: float
    L_hat: float
    witness: Noise
    diagnostics: dict


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# Weight optimization on a fixed support
# ---------------------------------------------------------------------------


class _WeightProblem:
    """J as a function of the weights on a fixed support.

    The merge classes of the sums depend only on the signal atoms and the
    support positions, never on the weights, so with numerator and mass
    matrices A and B (class x support-point) the objective is
    sum_s (A q)_s^2 / (B q)_s - (sum_s (A q)_s)^2: a sum of
    quadratic-over-linear terms, hence convex on the feasible polytope.
    """

    def __init__(self, x: SignalSpec, support: np.ndarray):
        xv, xm = x.dist.values(), x.dist.masses()
        dummy = np.full(len(support), 1.0 / len(support))
        classes = pairwise_sum_classes(xv, xm, support, dummy)
        n_classes = len(classes.values)
        A = np.zeros((n_classes, len(support)))
        B = np.zeros((n_classes, len(support)))
        np.add.at(A, (classes.pair_class, classes.j_index), xv[classes.i_index] * xm[classes.i_index])
        np.add.at(B, (classes.pair_class, classes.j_index), xm[classes.i_index])
        self.A, self.B = A, B
        self.x_mean = math.fsum((xv * xm).tolist())

    def objective(self, q: np.ndarray) -> float:
        N = self.A @ q
        D = self.B @ q
        mask = D > 0.0
        quad = math.fsum((N[mask] * N[mask] / D[mask]).tolist())
        lin = math.fsum(N.tolist())
        return quad - lin * lin

    def gradient(self, q: np.ndarray) -> np.ndarray:
        N = self.A @ q
        D = self.B @ q
        if np.any(D <= 0.0) and np.any(np.abs(N[D <= 0.0]) > 0.0):
            raise DegenerateClass("conditioning class with zero probability")
        g = np.zeros_like(N)
        mask = D > 0.0
        g[mask] = N[mask] / D[mask]
        lin = math.fsum(N.tolist())
        return self.A.T @ (2.0 * g) - self.B.T @ (g * g) - 2.0 * lin * self.x_mean


class _MomentPolytope:
    """Feasible weights: q >= 0, sum q = 1, sum q v = 0 and the budget row.

    In equality mode the budget row is sum q v^2 = eps^2; in inequality mode
    it is <= and is activated only when violated.
    """

    def __init__(self, support: np.ndarray, eps2: float, mode: str = "equality"):
        if mode not in ("equality", "inequality"):
            raise ValueError(f"unknown constraint mode {mode!r}")
        v = np.asarray(support, dtype=np.float64)
        self.v2 = v * v
        self.mode = mode
        self.eps2 = eps2
        self.A3 = np.vstack([np.ones_like(v), v, self.v2])
        self.b3 = np.array([1.0, 0.0, eps2])
        self.A2 = self.A3[:2]
        self.b2 = self.b3[:2]

    def residual(self, q: np.ndarray) -> float:
        r = [abs(q.sum() - 1.0), abs(q @ self.A3[1])]
        m2 = q @ self.v2
        if self.mode == "equality":
            r.append(abs(m2 - self.eps2))
        else:
            r.append(max(0.0, m2 - self.eps2))
        r.append(max(0.0, -q.min(initial=0.0)))
        return max(r)

    def _restore_rows(self, q0: np.ndarray, A: np.ndarray, b: np.ndarray, tol: float):
        """Active-set projection: pin negatives at 0, re-project the free part."""
        m = A.shape[1]
        free = np.ones(m, dtype=bool)
        for _ in range(m + 1):
            idx = np.flatnonzero(free)
            if len(idx) == 0:
                return None
            Af = A[:, idx]
            gram = Af @ Af.T
            rhs = Af @ q0[idx] - b
            try:
                y = np.linalg.solve(gram, rhs)
            except np.linalg.LinAlgError:
                y = np.linalg.lstsq(gram, rhs, rcond=None)[0]
            q = np.zeros(m)
            q[idx] = q0[idx] - Af.T @ y
            neg = q < -tol
            if not neg.any():
                q = np.maximum(q, 0.0)
                total = math.fsum(q.tolist())
                if total <= 0.0:
                    return None
                q = q / total
                if self.residual(q) <= tol:
                    return q
                return None
            free &= ~neg
        return None

    def restore(self, q: np.ndarray, tol: float, iters: int = 0):
        """Map a point into the polytope, or None when that fails."""
        q = np.asarray(q, dtype=np.float64)
        if self.mode == "equality":
            return self._restore_rows(q, self.A3, self.b3, tol)
        out = self._restore_rows(q, self.A2, self.b2, tol)
        if out is not None and out @ self.v2 <= self.eps2 + tol:
            return out
        return self._restore_rows(q, self.A3, self.b3, tol)


def _lp_point(poly: _MomentPolytope, cost: np.ndarray | None = None):
    """A vertex of the feasible polytope minimizing ``cost`` (HiGHS)."""
    m = poly.A3.shape[1]
    c = np.zeros(m) if cost is None else cost
    if poly.mode == "equality":
        res = linprog(c, A_eq=poly.A3, b_eq=poly.b3, bounds=(0.0, None), method="highs")
    else:
        res = linprog(
            c,
            A_eq=poly.A2,
            b_eq=poly.b2,
            A_ub=poly.v2[None, :],
            b_ub=[poly.eps2],
            bounds=(0.0, None),
            method="highs",
        )
    if res.status != 0 or res.x is None:
        return None
    return np.asarray(res.x, dtype=np.float64)


def weight_gradient(x: SignalSpec, support: Sequence[float], q: Sequence[float]) -> np.ndarray:
    """Gradient of J(q) on a fixed support with merge classes held fixed.

    With classes C_s, D_s = sum p_i q_j and N_s = sum x_i p_i q_j over C_s,
    the derivative in q_j is sum_s [2 (N_s/D_s) A_{s,j} - (N_s/D_s)^2 B_{s,j}]
    with A_{s,j} = sum x_i p_i and B_{s,j} = sum p_i over pairs (i, j) in C_s,
    plus the (identically centered) linear-term correction.
    """
    support = np.asarray(support, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if np.any(q <= 0.0):
        raise ValueError("weights must be strictly positive")
    if abs(math.fsum(q.tolist()) - 1.0) > 1e-9:
        raise ValueError("weights must sum to 1")
    problem = _WeightProblem(x, support)
    return problem.gradient(q)


def _pgd(problem: _WeightProblem, poly: _MomentPolytope, q0: np.ndarray, cfg: OptimizerConfig, tol_obj: float):
    """Projected gradient descent with backtracking; monotone by construction."""
    q = q0
    J = problem.objective(q)
    trace = [(0, J)]
    step = cfg.step_init
    converged = False
    for it in range(1, cfg.max_iters + 1):
        grad = problem.gradient(q)
        gnorm = float(np.linalg.norm(grad))
        if gnorm == 0.0:
            converged = True
            break
        t = step / gnorm
        accepted = None
        for _ in range(40):
            qc = poly.restore(q - t * grad, cfg.tol_feas)
            if qc is not None:
                Jc = problem.objective(qc)
                if Jc < J:
                    accepted = (qc, Jc, t)
                    break
            t *= 0.5
        if accepted is None:
            converged = True
            break
        q, Jc, t_used = accepted[0], accepted[1], accepted[2]
        gain = J - Jc
        J = Jc
        trace.append((it, J))
        step = min(t_used * gnorm * 2.0, 10.0 * cfg.step_init)
        if gain < tol_obj:
            converged = True
            break
    return q, J, trace, converged


def _feasible_inits(poly: _MomentPolytope, m: int, restarts: int, rng: np.random.Generator):
    """Deterministic-first initial points: projected uniform, then LP vertices."""
    inits = []
    uniform = poly.restore(np.full(m, 1.0 / m), 1e-9)
    if uniform is not None:
        inits.append(uniform)
    while len(inits) < restarts:
        vertex = _lp_point(poly, rng.standard_normal(m))
        if vertex is None:
            break
        repaired = poly.restore(vertex, 1e-9)
        if repaired is not None:
            inits.append(repaired)
        else:
            inits.append(np.maximum(vertex, 0.0) / max(vertex.sum(), 1e-300))
    return inits


def _optimize_weights_raw(x: SignalSpec, support: np.ndarray, eps: NoiseBudget, cfg: OptimizerConfig, mode: str, restarts: int | None = None):
    """Multi-start PGD; returns (q, J, trace, converged) of the best run."""
    poly = _MomentPolytope(support, eps.epsilon**2, mode)
    if _lp_point(poly) is None:
        raise InfeasibleSupport(f"no feasible weights on support {support.tolist()!r}")
    problem = _WeightProblem(x, support)
    tol_obj = cfg.resolved_tol_obj(x.variance)
    rng = _rng(cfg.seed)
    best = None
    n_restarts = cfg.restarts if restarts is None else restarts
    for q0 in _feasible_inits(poly, len(support), n_restarts, rng):
        q, J, trace, converged = _pgd(problem, poly, q0, cfg, tol_obj)
        if best is None or J < best[1]:
            best = (q, J, trace, converged)
    if best is None:
        raise InfeasibleSupport(f"could not reach the feasible set on {support.tolist()!r}")
    return best


def _build_atomic_result(
    x: SignalSpec,
    support: np.ndarray,
    q: np.ndarray,
    eps: NoiseBudget,
    cfg: OptimizerConfig,
    mode: str,
    trace: list[tuple[int, float]],
    converged: bool,
) -> SolveResult:
    """Prune negligible weights, rebuild exactly, and package the result."""
    problem = _WeightProblem(x, support)
    poly = _MomentPolytope(support, eps.epsilon**2, mode)
    J = problem.objective(q)
    keep_support, keep_q = support, q
    live = q > cfg.q_min
    if 2 <= int(live.sum()) < len(support):
        sub_poly = _MomentPolytope(support[live], eps.epsilon**2, mode)
        pruned = sub_poly.restore(q[live], cfg.tol_feas)
        if pruned is not None:
            sub_problem = _WeightProblem(x, support[live])
            tol_obj = cfg.resolved_tol_obj(x.variance)
            pruned, J_pruned, _, _ = _pgd(sub_problem, sub_poly, pruned, cfg, tol_obj)
            if mode == "inequality":
                # pruning dents the second moment; spending the budget again
                # is feasible and almost always at least as good
                eq_poly = _MomentPolytope(support[live], eps.epsilon**2, "equality")
                snapped = eq_poly.restore(pruned, cfg.tol_feas)
                if snapped is not None:
                    snapped, J_snap, _, _ = _pgd(sub_problem, eq_poly, snapped, cfg, tol_obj)
                    if J_snap <= J_pruned:
                        pruned, J_pruned = snapped, J_snap
            # J is only resolvable down to the slack the feasibility
            # tolerance buys, so pruning wins any tie at that resolution
            slack = max(tol_obj, 100.0 * cfg.tol_feas * (1.0 + x.variance))
            if J_pruned <= J + slack:
                keep_support, keep_q = support[live], pruned
                J = min(J, J_pruned)
    mass_ok = keep_q > 0.0
    keep_support, keep_q = keep_support[mass_ok], keep_q[mass_ok]
    total = math.fsum(keep_q.tolist())
    keep_q = keep_q / total
    noise = AtomicDistribution(tuple(zip(keep_support.tolist(), keep_q.tolist())))
    report = objective_atomic(x, noise)
    _, m2, _ = moments(noise)
    final_iter = (trace[-1][0] + 1) if trace else 0
    full_trace = tuple(trace) + ((final_iter, report.J),)
    return SolveResult(
        best_noise=noise,
        report=report,
        epsilon=eps.epsilon,
        saturation_gap=eps.epsilon**2 - m2,
        restarts_used=cfg.restarts,
        converged=converged,
        trace=full_trace,
    )


def optimize_weights(
    x: SignalSpec,
    support: Sequence[float],
    eps: Union[NoiseBudget, float],
    cfg: OptimizerConfig | None = None,
    mode: str = "equality",
) -> SolveResult:
    """Optimize atom weights on a fixed support under the moment constraints.

    Projected gradient descent on {q >= 0, sum q = 1, sum q v = 0,
    sum q v^2 = eps^2} from ``cfg.restarts`` feasible initializations.  The
    objective is convex in q, so restarts act as a consistency check rather
    than a global-search device.
    """
    cfg = cfg or OptimizerConfig()
    eps = as_budget(eps)
    support = np.asarray(sorted(float(v) for v in support), dtype=np.float64)
    if len(support) < 2:
        raise ValueError("support needs at least 2 points")
    if np.any(np.diff(support) <= 0.0):
        raise ValueError("support values must be distinct")
    q, _, trace, converged = _optimize_weights_raw(x, support, eps, cfg, mode)
    return _build_atomic_result(x, support, q, eps, cfg, mode, trace, converged)


# ---------------------------------------------------------------------------
# Support proposals and coordinate refinement
# ---------------------------------------------------------------------------


def _distinct_diffs(xv: np.ndarray, limit: int = 3) -> list[float]:
    diffs = np.abs(xv[:, None] - xv[None, :]).ravel()
    diffs = np.unique(np.round(diffs[diffs > 0.0], 12))
    return diffs[:limit].tolist()


def _symmetric_pattern(size: int) -> list[float]:
    if size % 2 == 0:
        half = [k - 0.5 for k in range(1, size // 2 + 1)]
        return [-u for u in reversed(half)] + half
    half = list(range(1, (size - 1) // 2 + 1))
    return [-float(u) for u in reversed(half)] + [0.0] + [float(u) for u in half]


def _rms(values: Sequence[float]) -> float:
    return math.sqrt(math.fsum(v * v for v in values) / len(values))


def propose_support(
    x: SignalSpec,
    eps: Union[NoiseBudget, float],
    size: int = 5,
    seed: int = 42,
) -> list[tuple[float, ...]]:
    """Candidate supports for the atomic search, deterministic for a seed.

    The information-hiding mechanism is sum collisions x_i + y_j = x_k + y_l,
    so candidates are built from lattices whose spacing is a pairwise
    difference of signal atoms: (a) symmetric and shifted copies of those
    difference lattices (shifted copies, present from 3 points up, are placed
    so the two-point collision-feasible weighting is embedded), (b) symmetric
    patterns scaled so uniform weights spend the budget exactly, and
    (c) random symmetric supports.
    """
    eps = as_budget(eps).epsilon
    if size < 2:
        raise ValueError("size must be at least 2")
    if eps <= 0.0:
        return [(0.0,)]
    xv = x.dist.values()
    proposals: list[tuple[float, ...]] = []

    def add(values: Sequence[float]):
        vals = tuple(sorted(float(v) for v in values))
        if len(set(np.round(vals, 12))) != len(vals):
            return
        if vals not in seen:
            seen.add(vals)
            proposals.append(vals)

    seen: set[tuple[float, ...]] = set()
    # (b) symmetric patterns scaled to uniform-weight saturation
    for s in range(2, size + 1):
        pattern = _symmetric_pattern(s)
        rms = _rms(pattern)
        if rms > 0.0:
            add([u * eps / rms for u in pattern])
    diffs = _distinct_diffs(xv)
    # (a) difference lattices: symmetric unscaled, then shifted copies
    for d in diffs:
        for s in range(2, size + 1):
            add([u * d for u in _symmetric_pattern(s)])
        if d * d >= 4.0 * eps * eps:
            root = 0.5 * (d - math.sqrt(d * d - 4.0 * eps * eps))
            for c in (root, d - root):
                for s in range(3, size + 1):
                    lattice = [k * d - c for k in range(s)]
                    add(lattice)
                    add([-v for v in lattice])
    # (c) random symmetric supports
    rng = _rng(seed)
    for _ in range(4):
        half = max(1, size // 2)
        pos = np.sort(rng.uniform(0.2, 2.0, half))
        base = [-u for u in reversed(pos.tolist())] + ([0.0] if size % 2 else []) + pos.tolist()
        rms = _rms(base)
        add([u * eps / rms for u in base])
    return proposals


def _collision_positions(xv: np.ndarray, support: np.ndarray, j: int) -> list[float]:
    """Positions for point j aligning some sum pair: t = x_a - x_b + v_l."""
    others = [v for l, v in enumerate(support) if l != j]
    cands = set()
    for a in range(len(xv)):
        for b in range(len(xv)):
            if a == b:
                continue
            for v in others:
                cands.add(round(float(xv[a] - xv[b] + v), 12))
    return sorted(cands)


def _golden_section(f, lo: float, hi: float, iters: int = 24):
    gr = 0.5 * (math.sqrt(5.0) - 1.0)
    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc, fd = f(c), f(d)
    best_t, best_f = (c, fc) if fc <= fd else (d, fd)
    for _ in range(iters):
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = f(d)
        if fc <= fd and fc < best_f:
            best_t, best_f = c, fc
        elif fd < fc and fd < best_f:
            best_t, best_f = d, fd
    return best_t, best_f


def _refine_support(
    x: SignalSpec,
    support: np.ndarray,
    q: np.ndarray,
    eps: NoiseBudget,
    cfg: OptimizerConfig,
    mode: str,
):
    """Coordinate search over support points, collision-aware.

    J as a function of one position is flat away from collisions with
    downward jumps exactly at aligning positions, so each coordinate pass
    evaluates every collision-aligned candidate plus a golden-section sweep
    of the smooth background.  Merge classes are re-derived per evaluation;
    nothing is differentiated across a class change.
    """
    xv = x.dist.values()
    tol_obj = cfg.resolved_tol_obj(x.variance)
    scale = float(np.max(np.abs(xv))) + abs(eps.epsilon) + float(np.max(np.abs(support)))
    support = support.copy()
    problem = _WeightProblem(x, support)
    J = problem.objective(q)
    history = [J]

    def evaluate(sup_t: np.ndarray, q_start: np.ndarray):
        poly_t = _MomentPolytope(sup_t, eps.epsilon**2, mode)
        q_t = poly_t.restore(q_start, cfg.tol_feas, iters=60)
        if q_t is None:
            return math.inf, None
        return _WeightProblem(x, sup_t).objective(q_t), q_t

    for round_idx in range(4):
        improved = False
        span = (float(np.ptp(xv)) + 2.0 * eps.epsilon) * (0.6**round_idx)
        for j in range(len(support)):
            current = support[j]
            candidates = _collision_positions(xv, support, j)

            def phi(t: float) -> float:
                if min(abs(t - v) for l, v in enumerate(support) if l != j) < 1e-6 * scale:
                    return math.inf
                sup_t = support.copy()
                sup_t[j] = t
                return evaluate(sup_t, q)[0]

            t_gold, _ = _golden_section(phi, current - span, current + span)
            candidates.append(round(float(t_gold), 12))
            best_t, best_J, best_q = current, J, q
            for t in candidates:
                if abs(t - current) < 1e-12 * scale:
                    continue
                if min(abs(t - v) for l, v in enumerate(support) if l != j) < 1e-6 * scale:
                    continue
                sup_t = support.copy()
                sup_t[j] = t
                J_t, q_t = evaluate(sup_t, q)
                if J_t < best_J - 1e-15:
                    best_t, best_J, best_q = t, J_t, q_t
            if best_t != current:
                support[j] = best_t
                q = best_q
                J = best_J
                improved = True
        # settle the weights on the updated support
        q2, J2, _, _ = _pgd(
            _WeightProblem(x, support),
            _MomentPolytope(support, eps.epsilon**2, mode),
            q,
            cfg,
            tol_obj,
        )
        if J2 < J:
            q, J = q2, J2
        history.append(J)
        if not improved and history[-2] - history[-1] < tol_obj:
            break
    return support, q, J, history


def optimize_support_and_weights(
    x: SignalSpec,
    eps: Union[NoiseBudget, float],
    cfg: OptimizerConfig | None = None,
    mode: str = "equality",
) -> SolveResult:
    """Full atomic search: propose supports, screen, refine the leaders.

    A zero budget forces the point mass at 0.  Ties within the objective
    tolerance break toward smaller support, then the lexicographically
    smaller support vector, so output is deterministic for a fixed seed.
    """
    cfg = cfg or OptimizerConfig()
    eps = as_budget(eps)
    if eps.epsilon == 0.0:
        noise = point_mass(0.0)
        report = objective_atomic(x, noise)
        return SolveResult(
            best_noise=noise,
            report=report,
            epsilon=0.0,
            saturation_gap=0.0,
            restarts_used=0,
            converged=True,
            trace=((0, report.J),),
        )
    tol_obj = cfg.resolved_tol_obj(x.variance)
    proposals = propose_support(x, eps, cfg.support_size, cfg.seed)
    screened = []
    for sup in proposals:
        support = np.asarray(sup, dtype=np.float64)
        try:
            q, J, trace, converged = _optimize_weights_raw(x, support, eps, cfg, mode, restarts=1)
        except InfeasibleSupport:
            continue
        screened.append((J, len(support), sup, support, q, trace, converged))
    if not screened:
        raise InfeasibleSupport("no feasible support proposal; try a larger support size")
    screened.sort(key=lambda rec: (rec[0], rec[1], rec[2]))
    finalists = []
    for _, _, _, support, q0, _, _ in screened[:6]:
        q, J, trace, converged = _optimize_weights_raw(x, support, eps, cfg, mode)
        support_r, q_r, J_r, history = _refine_support(x, support.copy(), q, eps, cfg, mode)
        trace = trace + [(trace[-1][0] + 1 + i, h) for i, h in enumerate(history)]
        order = np.argsort(support_r)
        finalists.append((J_r, len(support_r), tuple(support_r[order].tolist()), support_r[order], q_r[order], trace, converged))
    j_min = min(rec[0] for rec in finalists)
    pool = [rec for rec in finalists if rec[0] <= j_min + tol_obj]
    _, _, _, support_b, q_b, trace_b, converged_b = min(pool, key=lambda rec: (rec[1], rec[2]))
    return _build_atomic_result(x, support_b, q_b, eps, cfg, mode, trace_b, converged_b)


# ---------------------------------------------------------------------------
# Gaussian-mixture search
# ---------------------------------------------------------------------------


def _normalized_mixture(theta: np.ndarray, k: int, eps: float, mode: str = "equality") -> DensityNoise:
    """Map free parameters (means, log sds) onto the constraint manifold.

    Centering and rescaling make the mixture mean 0 and the second moment
    exactly eps^2 (at most eps^2 in inequality mode); weights stay uniform.
    """
    mu = theta[:k].astype(np.float64)
    log_sd = np.clip(theta[k:], math.log(eps) - 8.0, math.log(eps) + 4.0)
    sd = np.exp(log_sd)
    mu = mu - mu.mean()
    m2 = float(np.mean(mu * mu + sd * sd))
    factor = eps / math.sqrt(m2)
    if mode == "inequality":
        factor = min(1.0, factor)
    mu, sd = mu * factor, sd * factor
    w = 1.0 / k
    return DensityNoise(tuple((float(m), float(s), w) for m, s in zip(mu, sd)))


def optimize_gaussian_mixture(
    x: SignalSpec,
    eps: Union[NoiseBudget, float],
    k: int = 1,
    cfg: OptimizerConfig | None = None,
    quad: QuadratureConfig | None = None,
    mode: str = "equality",
) -> SolveResult:
    """Simplex search over k-component mixtures under exact normalization.

    Uses Nelder-Mead with the standard coefficients (reflect 1, expand 2,
    contract 0.5, shrink 0.5); every evaluated candidate is re-centered and
    rescaled first, so feasibility is exact by construction.  For k = 1 the
    constraint collapses the family to a single Gaussian and no search runs.
    """
    cfg = cfg or OptimizerConfig()
    eps = as_budget(eps)
    if eps.epsilon <= 0.0:
        raise NegativeEpsilon("mixture search needs a strictly positive budget")
    if k < 1:
        raise ValueError("k must be at least 1")
    quad = quad or QuadratureConfig()
    tol_obj = cfg.resolved_tol_obj(x.variance)

    def evaluate(theta: np.ndarray) -> tuple[float, DensityNoise]:
        noise = _normalized_mixture(theta, k, eps.epsilon, mode)
        return objective_value_search(x, noise, quad), noise

    if k == 1 and mode == "equality":
        noise = _normalized_mixture(np.array([0.0, math.log(eps.epsilon)]), k, eps.epsilon, mode)
        J = objective_density(x, noise, quad).J
        best = (J, noise)
        trace = [(0, J)]
        restarts_used = 1
        converged = True
    else:
        rng = _rng(cfg.seed)
        best = None
        trace = []
        converged = False
        restarts_used = 0
        for r in range(cfg.restarts):
            if r == 0:
                mu0 = np.linspace(-0.5, 0.5, k) * eps.epsilon if k > 1 else np.zeros(1)
                theta0 = np.concatenate([mu0, np.full(k, math.log(eps.epsilon / math.sqrt(k)))])
            else:
                theta0 = np.concatenate(
                    [
                        rng.normal(0.0, eps.epsilon, k),
                        np.log(eps.epsilon * rng.uniform(0.2, 1.5, k)),
                    ]
                )
            n_par = 2 * k
            simplex = np.tile(theta0, (n_par + 1, 1))
            for i in range(n_par):
                simplex[i + 1, i] += 0.35 if i < k else 0.5
            res = minimize(
                lambda th: evaluate(th)[0],
                theta0,
                method="Nelder-Mead",
                options={
                    "initial_simplex": simplex,
                    "maxiter": cfg.max_iters,
                    "fatol": tol_obj,
                    "xatol": 1e-8,
                },
            )
            restarts_used += 1
            J_r, noise_r = evaluate(res.x)
            if best is None or J_r < best[0]:
                best = (J_r, noise_r)
                converged = bool(res.success)
            trace.append((r, best[0]))
    J, noise = best
    report = objective_density(x, noise, quad)
    _, m2 = mixture_moments(noise)
    trace.append((trace[-1][0] + 1 if trace else 0, report.J))
    return SolveResult(
        best_noise=noise,
        report=report,
        epsilon=eps.epsilon,
        saturation_gap=eps.epsilon**2 - m2,
        restarts_used=restarts_used,
        converged=converged,
        trace=tuple(trace),
    )


# ---------------------------------------------------------------------------
# Family union and the L-curve
# ---------------------------------------------------------------------------


def _noise_sort_key(noise: Noise) -> tuple:
    if isinstance(noise, AtomicDistribution):
        return (0, len(noise.atoms), tuple(v for v, _ in noise.atoms))
    return (1, len(noise.components), tuple(mu for mu, _, _ in noise.components))


def _pick_best(candidates: list[SolveResult], tol_obj: float) -> SolveResult:
    j_min = min(c.report.J for c in candidates)
    pool = [c for c in candidates if c.report.J <= j_min + tol_obj]
    return min(pool, key=lambda c: _noise_sort_key(c.best_noise))


def best_noise_search(
    x: SignalSpec,
    eps: Union[NoiseBudget, float],
    cfg: OptimizerConfig | None = None,
    quad: QuadratureConfig | None = None,
    mode: str = "equality",
) -> SolveResult:
    """Best noise over the union of families: atomic and mixtures with k in {1, 2}."""
    cfg = cfg or OptimizerConfig()
    eps = as_budget(eps)
    if eps.epsilon == 0.0:
        return optimize_support_and_weights(x, eps, cfg, mode)
    candidates = [optimize_support_and_weights(x, eps, cfg, mode)]
    for k in (1, 2):
        candidates.append(optimize_gaussian_mixture(x, eps, k, cfg, quad, mode))
    return _pick_best(candidates, cfg.resolved_tol_obj(x.variance))


def trace_L_curve(
    x: SignalSpec,
    eps_grid: Sequence[float],
    cfg: OptimizerConfig | None = None,
    quad: QuadratureConfig | None = None,
) -> list[LCurvePoint]:
    """Trace the value curve over an increasing budget grid.

    Each budget searches the atomic family and mixtures with k in {1, 2}
    (the mixture searches run on a reduced restart budget inside the trace),
    plus a warm-start candidate: the previous witness convolved with a
    Gaussian spending exactly the added budget, which beats the previous
    value whenever the budget grows.  The output is therefore non-increasing;
    if quadrature noise ever inverts a pair, the point is clamped to the
    previous value with the warm-start witness.
    """
    cfg = cfg or OptimizerConfig()
    quad = quad or QuadratureConfig()
    grid = [float(e) for e in eps_grid]
    if not grid or any(e2 <= e1 for e1, e2 in zip(grid, grid[1:])) or grid[0] < 0.0:
        raise BadGrid("budget grid must be nonempty, strictly increasing, and start at >= 0")
    mixture_cfg = replace(cfg, restarts=min(cfg.restarts, 4), max_iters=min(cfg.max_iters, 200))
    tol_obj = cfg.resolved_tol_obj(x.variance)
    points: list[LCurvePoint] = []
    prev: LCurvePoint | None = None
    for eps in grid:
        if eps == 0.0:
            result = optimize_support_and_weights(x, NoiseBudget(0.0), cfg)
            point = LCurvePoint(
                epsilon=0.0,
                L_hat=result.report.J,
                witness=result.best_noise,
                diagnostics={"family": "atomic", "clamped": False, "saturation_gap": 0.0},
            )
            points.append(point)
            prev = point
            continue
        candidates = [optimize_support_and_weights(x, eps, cfg)]
        for k in (1, 2):
            candidates.append(optimize_gaussian_mixture(x, eps, k, mixture_cfg, quad))
        warm: SolveResult | None = None
        if prev is not None and eps > prev.epsilon:
            sigma2 = eps * eps - prev.epsilon * prev.epsilon
            warm_noise = smooth_with_gaussian(prev.witness, math.sqrt(sigma2))
            warm_report = objective_density(x, warm_noise, quad)
            _, warm_m2 = mixture_moments(warm_noise)
            warm = SolveResult(
                best_noise=warm_noise,
                report=warm_report,
                epsilon=eps,
                saturation_gap=eps * eps - warm_m2,
                restarts_used=0,
                converged=True,
                trace=((0, warm_report.J),),
            )
            candidates.append(warm)
        chosen = _pick_best(candidates, tol_obj)
        L_hat = chosen.report.J
        clamped = False
        if prev is not None and L_hat > prev.L_hat:
            chosen = warm if warm is not None else chosen
            L_hat = min(prev.L_hat, chosen.report.J)
            clamped = True
        family = "atomic" if isinstance(chosen.best_noise, AtomicDistribution) else "gaussian_mixture"
        point = LCurvePoint(
            epsilon=eps,
            L_hat=L_hat,
            witness=chosen.best_noise,
            diagnostics={
                "family": family,
                "clamped": clamped,
                "saturation_gap": chosen.saturation_gap,
                "converged": chosen.converged,
            },
        )
        points.append(point)
        prev = point
    return points


# ---------------------------------------------------------------------------
# L-curve serialization
# ---------------------------------------------------------------------------


def _witness_fields(noise: Noise) -> tuple[str, str]:
    if isinstance(noise, AtomicDistribution):
        return "atomic", json.dumps([[v, m] for v, m in noise.atoms])
    return "gaussian_mixture", json.dumps([[mu, sd, w] for mu, sd, w in noise.components])


def lcurve_to_csv(points: Sequence[LCurvePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epsilon", "L_hat", "witness_kind", "witness_params"])
    for p in points:
        kind, params = _witness_fields(p.witness)
        writer.writerow([repr(p.epsilon), repr(p.L_hat), kind, params])
    return buf.getvalue()


def lcurve_from_csv(text: str) -> list[LCurvePoint]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["epsilon", "L_hat", "witness_kind", "witness_params"]:
        raise ParseError("curve CSV header does not match the schema")
    points = []
    for row in rows[1:]:
        if len(row) != 4:
            raise ParseError(f"bad curve row {row!r}")
        eps, l_hat, kind, params = row
        data = json.loads(params)
        if kind == "atomic":
            witness: Noise = AtomicDistribution(tuple((float(v), float(m)) for v, m in data))
        elif kind == "gaussian_mixture":
            witness = DensityNoise(tuple((float(a), float(b), float(c)) for a, b, c in data))
        else:
            raise ParseError(f"unknown witness kind {kind!r}")
        points.append(LCurvePoint(float(eps), float(l_hat), witness, {}))
    return points


def lcurve_to_plot_data(points: Sequence[LCurvePoint], var_x: float) -> str:
    """Whitespace-delimited columns for external plotting tools."""
    lines = ["# epsilon L_hat var_x"]
    for p in points:
        lines.append(f"{p.epsilon!r} {p.L_hat!r} {var_x!r}")
    return "\n".join(lines) + "\n"
