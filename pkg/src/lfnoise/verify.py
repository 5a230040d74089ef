"""Numerical battery probing the structural facts behind the search.

Each check turns one qualitative statement (budget saturation, strict
decrease of the value curve, right continuity, Gaussian smoothing strictly
helping, lower semicontinuity along weakly converging sequences, the
data-processing bound, shift invariance) into instances with signed margins,
where positive margin means satisfied with room.  Strictness of the value
curve's decrease is tested through the Gaussian top-up construction itself
rather than by comparing two heuristic curve values, whose difference could
be solver noise.

Checks default to a lighter search budget than the optimizer defaults; the
weight stage is convex, so extra restarts only re-verify the same minimum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .condexp import (
    ObjectiveReport,
    QuadratureConfig,
    objective,
    objective_atomic,
    objective_density,
    posterior_mean_atomic,
    posterior_mean_density,
    smooth_with_gaussian,
)
from .dist import (
    AtomicDistribution,
    DensityNoise,
    Noise,
    SignalSpec,
    as_budget,
    center,
    moments,
    point_mass,
    shift,
    signal_from_distribution,
)
from .errors import ParseError, UnknownBattery
from .mc import estimate_objective
from .solve import (
    OptimizerConfig,
    optimize_gaussian_mixture,
    optimize_support_and_weights,
    trace_L_curve,
)

THEOREM_IDS = (
    "saturation",
    "strict_decrease",
    "right_continuity",
    "gaussian_smoothing",
    "semicontinuity",
    "data_processing",
    "shift_invariance",
)

SEQUENCE_KINDS = ("atom_collapse", "discretized_gaussian", "vanishing_perturbation")


@dataclass
class TheoremReport:
    """Aggregated outcome of one check: counts, worst margin, per-instance records."""

    theorem_id: str
    instances: int
    passes: int
    worst_margin: float
    details: tuple[dict, ...]

    def __post_init__(self):
        if self.theorem_id not in THEOREM_IDS:
            raise ValueError(f"unknown theorem id {self.theorem_id!r}")
        if self.passes > self.instances:
            raise ValueError("passes cannot exceed instances")

    @property
    def passed(self) -> bool:
        return self.passes == self.instances

    def to_json(self) -> str:
        return json.dumps(
            {
                "theorem_id": self.theorem_id,
                "instances": self.instances,
                "passes": self.passes,
                "worst_margin": self.worst_margin,
                "details": list(self.details),
            }
        )


def theorem_report_from_json(text: str) -> TheoremReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    expected = {"theorem_id", "instances", "passes", "worst_margin", "details"}
    if not isinstance(doc, dict) or set(doc) != expected:
        raise ParseError("theorem report fields do not match the schema")
    return TheoremReport(
        theorem_id=doc["theorem_id"],
        instances=doc["instances"],
        passes=doc["passes"],
        worst_margin=doc["worst_margin"],
        details=tuple(doc["details"]),
    )


def format_report_table(reports: Sequence[TheoremReport]) -> str:
    header = f"{'theorem':<22}{'instances':>10}{'passes':>8}{'worst_margin':>15}  status"
    lines = [header, "-" * len(header)]
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        lines.append(
            f"{r.theorem_id:<22}{r.instances:>10}{r.passes:>8}{r.worst_margin:>15.3e}  {status}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class WeakSequenceSpec:
    """A weakly converging noise sequence with uniformly bounded second moments.

    ``atom_collapse``: two atoms drifting onto the limit's atoms (strict-gap
    exhibit).  ``discretized_gaussian``: n-atom quantile discretization of the
    limit Gaussian.  ``vanishing_perturbation``: symmetric atoms at an
    irrational spacing shrinking to the point mass at 0 (equality edge).
    """

    kind: str
    n_terms: int
    limit: Noise

    def __post_init__(self):
        if self.kind not in SEQUENCE_KINDS:
            raise ValueError(f"unknown sequence kind {self.kind!r}")
        if self.n_terms < 2:
            raise ValueError("need at least 2 terms")
        if self.kind == "discretized_gaussian":
            if not isinstance(self.limit, DensityNoise) or len(self.limit.components) != 1:
                raise ValueError("discretized_gaussian needs a single-Gaussian limit")
            if self.limit.components[0][0] != 0.0:
                raise ValueError("discretized_gaussian limit must be centered")
        elif self.kind == "vanishing_perturbation":
            if not isinstance(self.limit, AtomicDistribution) or len(self.limit) != 1:
                raise ValueError("vanishing_perturbation needs a point-mass limit")
        else:
            if not isinstance(self.limit, AtomicDistribution) or len(self.limit) != 2:
                raise ValueError("atom_collapse needs a two-atom limit")
            values = self.limit.values()
            if abs(values[0] + values[1]) > 1e-12:
                raise ValueError("atom_collapse limit must be symmetric")

    def term(self, n: int) -> AtomicDistribution:
        """The n-th sequence element (1-based)."""
        if not (1 <= n <= self.n_terms):
            raise ValueError(f"term index {n} outside 1..{self.n_terms}")
        if self.kind == "discretized_gaussian":
            sigma = self.limit.components[0][1]
            return lattice_discretized_gaussian(sigma, n)
        if self.kind == "vanishing_perturbation":
            u = math.sqrt(2.0) / (100.0 * n)
            return AtomicDistribution(((-u, 0.5), (u, 0.5)))
        v = float(self.limit.values()[-1])
        u = v + 1.0 / n
        return AtomicDistribution(((-u, 0.5), (u, 0.5)))


def lattice_discretized_gaussian(sigma: float, n: int) -> AtomicDistribution:
    """Discretization of N(0, sigma^2) on the lattice of pitch 1/n.

    Atom k/n carries the Gaussian mass of the surrounding cell (truncated at
    five sigma, renormalized); masses are symmetric so the mean is 0 and the
    second moments stay uniformly bounded.  A quantile placement would keep
    all pairwise sums with the signal distinct, freezing the exact objective
    at var X; on this lattice the sums of signal atoms at integer differences
    genuinely collide, so the objectives converge to the density-engine value
    as the pitch shrinks.
    """
    h = 1.0 / n
    k_max = int(math.ceil(5.0 * sigma / h))
    ks = np.arange(-k_max, k_max + 1)
    edges_hi = (ks + 0.5) * h / sigma
    edges_lo = (ks - 0.5) * h / sigma
    masses = norm.cdf(edges_hi) - norm.cdf(edges_lo)
    masses = masses / masses.sum()
    atoms = tuple((float(k * h), float(m)) for k, m in zip(ks, masses) if m > 0.0)
    return AtomicDistribution(atoms)


# ---------------------------------------------------------------------------
# Signal battery
# ---------------------------------------------------------------------------


def _zipf_signal(n: int = 8) -> SignalSpec:
    weights = np.array([1.0 / k for k in range(1, n + 1)])
    weights /= weights.sum()
    atoms = tuple((float(k), float(w)) for k, w in zip(range(1, n + 1), weights))
    return signal_from_distribution(AtomicDistribution(atoms))


def standard_battery() -> list[tuple[str, SignalSpec]]:
    """Symmetric Bernoulli, asymmetric two-point, uniform 3/5-point, zipf 8-point."""
    return [
        ("bernoulli", SignalSpec(AtomicDistribution(((-0.5, 0.5), (0.5, 0.5))))),
        ("two_point_asym", signal_from_distribution(AtomicDistribution(((0.0, 0.75), (1.0, 0.25))))),
        ("uniform3", signal_from_distribution(AtomicDistribution(tuple((float(v), 1 / 3) for v in (-1, 0, 1))))),
        ("uniform5", signal_from_distribution(AtomicDistribution(tuple((float(v), 0.2) for v in range(-2, 3))))),
        ("zipf8", _zipf_signal()),
    ]


def quick_battery() -> list[tuple[str, SignalSpec]]:
    return standard_battery()[:2]


def battery_by_name(name: str) -> tuple[list[tuple[str, SignalSpec]], bool]:
    """Resolve a battery name to (signals, sentinel flag)."""
    if name == "standard":
        return standard_battery(), False
    if name == "quick":
        return quick_battery(), False
    if name == "sentinel-broken":
        return standard_battery()[:1], True
    raise UnknownBattery(f"unknown battery {name!r}")


def _default_cfg(seed: int) -> OptimizerConfig:
    return OptimizerConfig(restarts=4, max_iters=300, seed=seed)


def _no_collision_noise(x: SignalSpec) -> AtomicDistribution:
    """Symmetric two-point noise at an irrational spacing: no sums collide."""
    u = math.sqrt(2.0) / 4.0
    return AtomicDistribution(((-u, 0.5), (u, 0.5)))


def _sign_flipped_objective(x: SignalSpec, y: Noise, quad=None) -> ObjectiveReport:
    """Deliberately broken engine for the sentinel self-test.

    Flipping the posterior mean's sign on half the axis breaks the centering
    identity, deflating the reported objective below the truth.
    """
    if isinstance(y, AtomicDistribution):
        pm = posterior_mean_atomic(x, y)
    else:
        pm = posterior_mean_density(x, y, quad)
    g = np.where(pm.s < 0.0, -pm.g, pm.g)
    lin = math.fsum((pm.weight * g).tolist())
    quad_term = math.fsum((pm.weight * g * g).tolist())
    true = objective(x, y, quad)
    return ObjectiveReport(
        J=quad_term - lin * lin,
        var_x=true.var_x,
        prediction_error=true.var_x - (quad_term - lin * lin),
        noise_mean=true.noise_mean,
        noise_second_moment=true.noise_second_moment,
        method=true.method,
        quadrature_error_bound=true.quadrature_error_bound,
    )


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def check_saturation(
    x: SignalSpec,
    eps_list: Sequence[float],
    cfg: OptimizerConfig | None = None,
    quad: QuadratureConfig | None = None,
) -> TheoremReport:
    """Inequality-constrained search spends the budget; interior noise improves.

    Two instances per budget: the inequality solver's winner must satisfy
    E[Y^2] >= eps^2 (1 - 1e-6), and a Gaussian top-up of a deliberately
    interior noise (E[Y^2] = eps^2/2) must strictly lower the objective.
    """
    cfg = cfg or _default_cfg(42)
    quad = quad or QuadratureConfig()
    details = []
    passes = 0
    worst = math.inf
    for eps in eps_list:
        eps = float(eps)
        candidates = [optimize_support_and_weights(x, eps, cfg, mode="inequality")]
        candidates.append(optimize_gaussian_mixture(x, eps, 1, cfg, quad, mode="inequality"))
        best = min(candidates, key=lambda c: c.report.J)
        m2 = best.report.noise_second_moment
        margin_sat = m2 / (eps * eps) - (1.0 - 1e-6)
        ok_sat = margin_sat >= 0.0
        passes += ok_sat
        worst = min(worst, margin_sat)
        details.append(
            {"check": "budget_saturated", "epsilon": eps, "noise_m2": m2, "margin": margin_sat, "pass": bool(ok_sat)}
        )
        interior = AtomicDistribution(((-eps / math.sqrt(2.0), 0.5), (eps / math.sqrt(2.0), 0.5)))
        j_interior = objective_atomic(x, interior).J
        topped = smooth_with_gaussian(interior, math.sqrt(eps * eps / 2.0))
        rep = objective_density(x, topped, quad)
        margin_top = (j_interior - rep.quadrature_error_bound) - rep.J
        ok_top = margin_top > 0.0
        passes += ok_top
        worst = min(worst, margin_top)
        details.append(
            {
                "check": "interior_topup_improves",
                "epsilon": eps,
                "J_interior": j_interior,
                "J_topped": rep.J,
                "margin": margin_top,
                "pass": bool(ok_top),
            }
        )
    return TheoremReport("saturation", len(details), passes, worst, tuple(details))


def check_monotonicity(
    x: SignalSpec,
    eps_grid: Sequence[float],
    cfg: OptimizerConfig | None = None,
    quad: QuadratureConfig | None = None,
) -> TheoremReport:
    """Traced curve non-increasing; Gaussian top-up witnesses strict decrease.

    For each adjacent budget pair the witness at the smaller budget convolved
    with a Gaussian spending the difference must land strictly below the
    smaller budget's value beyond the quadrature error bound.
    """
    cfg = cfg or _default_cfg(42)
    quad = quad or QuadratureConfig()
    points = trace_L_curve(x, eps_grid, cfg, quad)
    details = []
    passes = 0
    worst = math.inf
    for lo, hi in zip(points, points[1:]):
        weak_margin = lo.L_hat - hi.L_hat
        sigma2 = hi.epsilon**2 - lo.epsilon**2
        witness = smooth_with_gaussian(lo.witness, math.sqrt(sigma2))
        rep = objective_density(x, witness, quad)
        strict_margin = (lo.L_hat - rep.quadrature_error_bound) - rep.J
        ok = weak_margin >= 0.0 and strict_margin > 0.0
        passes += ok
        worst = min(worst, strict_margin, weak_margin)
        details.append(
            {
                "eps_low": lo.epsilon,
                "eps_high": hi.epsilon,
                "L_low": lo.L_hat,
                "L_high": hi.L_hat,
                "J_witness": rep.J,
                "weak_margin": weak_margin,
                "strict_margin": strict_margin,
                "pass": bool(ok),
            }
        )
    if not details:
        worst = 0.0
    return TheoremReport("strict_decrease", len(details), passes, worst, tuple(details))


def check_right_continuity(
    x: SignalSpec,
    eps0: float,
    deltas: Sequence[float],
    cfg: OptimizerConfig | None = None,
    quad: QuadratureConfig | None = None,
) -> TheoremReport:
    """Value gaps at eps0 + delta shrink as delta drops and end below threshold.

    All budgets are solved within a single trace, so the gaps inherit the
    curve's monotonicity instead of independent-solve noise.
    """
    cfg = cfg or _default_cfg(42)
    quad = quad or QuadratureConfig()
    deltas = [float(d) for d in deltas]
    if not deltas or any(d2 >= d1 for d1, d2 in zip(deltas, deltas[1:])) or deltas[-1] <= 0.0:
        raise ValueError("deltas must be positive and strictly decreasing")
    grid = sorted({eps0} | {eps0 + d for d in deltas})
    points = {round(p.epsilon, 12): p.L_hat for p in trace_L_curve(x, grid, cfg, quad)}
    base = points[round(eps0, 12)]
    var_x = x.variance
    tol_obj = cfg.resolved_tol_obj(var_x)
    threshold = max(0.02 * var_x, 5.0 * tol_obj)
    slack = max(5.0 * tol_obj, 1e-12)
    gaps = [base - points[round(eps0 + d, 12)] for d in deltas]
    details = []
    passes = 0
    worst = math.inf
    for i, (d, gap) in enumerate(zip(deltas, gaps)):
        ok = gap >= -slack
        margin = gap + slack
        if i > 0:
            shrink = gaps[i - 1] - gap + slack
            ok = ok and shrink >= 0.0
            margin = min(margin, shrink)
        if i == len(deltas) - 1:
            final_margin = threshold - gap
            ok = ok and final_margin >= 0.0
            margin = min(margin, final_margin)
        passes += ok
        worst = min(worst, margin)
        details.append({"delta": d, "gap": gap, "margin": margin, "pass": bool(ok)})
    return TheoremReport("right_continuity", len(details), passes, worst, tuple(details))


def check_semicontinuity(
    x: SignalSpec,
    seq: WeakSequenceSpec,
    cfg: OptimizerConfig | None = None,
    quad: QuadratureConfig | None = None,
) -> TheoremReport:
    """Tail of the sequence objectives stays above the limit objective.

    The liminf is proxied by the minimum over the last half of the terms; the
    atom-collapse sequence exhibits a strict gap, showing the bound need not
    be tight.  The lattice-discretized Gaussian converges to the limit from
    below at the quadratic rate of its pitch, so its terms get a
    Richardson-style allowance calibrated on the terminal gap, and the final
    term must additionally land within 1e-3 of the limit.
    """
    quad = quad or QuadratureConfig()
    j_limit = objective(x, seq.limit, quad).J
    terms = [objective_atomic(x, seq.term(n)).J for n in range(1, seq.n_terms + 1)]
    tol = 1e-6 * x.variance
    rate_const = 0.0
    if seq.kind == "discretized_gaussian":
        rate_const = max(0.0, j_limit - terms[-1]) * seq.n_terms**2
    tail_start = seq.n_terms // 2
    details = []
    passes = 0
    worst = math.inf
    for n in range(tail_start, seq.n_terms):
        allowance = tol + 2.0 * rate_const / (n + 1) ** 2
        margin = terms[n] - (j_limit - allowance)
        ok = margin >= 0.0
        passes += ok
        worst = min(worst, margin)
        details.append(
            {"kind": seq.kind, "n": n + 1, "J_n": terms[n], "J_limit": j_limit, "margin": margin, "pass": bool(ok)}
        )
    if seq.kind == "discretized_gaussian":
        margin = 1e-3 - abs(terms[-1] - j_limit)
        ok = margin >= 0.0
        passes += ok
        worst = min(worst, margin)
        details.append(
            {
                "kind": seq.kind,
                "n": seq.n_terms,
                "check": "converges_to_limit",
                "J_n": terms[-1],
                "J_limit": j_limit,
                "margin": margin,
                "pass": bool(ok),
            }
        )
    return TheoremReport("semicontinuity", len(details), passes, worst, tuple(details))


def check_data_processing(
    pairs: Sequence[tuple[SignalSpec, Noise]],
    quad: QuadratureConfig | None = None,
    mc_samples: int = 200_000,
    mc_bins: int = 64,
    seed: int = 42,
    objective_fn: Callable[..., ObjectiveReport] | None = None,
) -> TheoremReport:
    """J never exceeds var X, and the binned estimator never exceeds J.

    The Monte Carlo estimate conditions on a coarser binning of the sum, so
    it must stay below the engine value up to three standard errors;
    ``objective_fn`` lets the sentinel battery inject a broken engine.
    """
    quad = quad or QuadratureConfig()
    objective_fn = objective_fn or (lambda x, y, q=None: objective(x, y, q))
    details = []
    passes = 0
    worst = math.inf
    for idx, (x, y) in enumerate(pairs):
        rep = objective_fn(x, y, quad)
        est = estimate_objective(x, y, mc_samples, mc_bins, seed + idx)
        upper_margin = (rep.var_x + rep.quadrature_error_bound) - rep.J
        mc_margin = (rep.J + 3.0 * est.std_error) - est.J_hat
        ok = upper_margin >= 0.0 and mc_margin >= 0.0
        passes += ok
        worst = min(worst, upper_margin, mc_margin)
        details.append(
            {
                "instance": idx,
                "J": rep.J,
                "var_x": rep.var_x,
                "J_hat": est.J_hat,
                "std_error": est.std_error,
                "upper_margin": upper_margin,
                "mc_margin": mc_margin,
                "pass": bool(ok),
            }
        )
    return TheoremReport("data_processing", len(details), passes, worst, tuple(details))


def check_gaussian_smoothing(
    pairs: Sequence[tuple[SignalSpec, AtomicDistribution]],
    sigma: float = 0.25,
    quad: QuadratureConfig | None = None,
) -> TheoremReport:
    """Convolving any atomic noise with a Gaussian strictly lowers J."""
    quad = quad or QuadratureConfig()
    details = []
    passes = 0
    worst = math.inf
    for idx, (x, y) in enumerate(pairs):
        j_before = objective_atomic(x, y).J
        rep = objective_density(x, smooth_with_gaussian(y, sigma), quad)
        margin = (j_before - rep.quadrature_error_bound) - rep.J
        ok = margin > 0.0
        passes += ok
        worst = min(worst, margin)
        details.append(
            {"instance": idx, "sigma": sigma, "J_before": j_before, "J_after": rep.J, "margin": margin, "pass": bool(ok)}
        )
    return TheoremReport("gaussian_smoothing", len(details), passes, worst, tuple(details))


def check_shift_invariance(
    x: SignalSpec,
    noises: Sequence[AtomicDistribution],
    shifts: Sequence[float] = (0.37, -1.3),
) -> TheoremReport:
    """Translating the noise leaves the objective unchanged."""
    tol = 1e-9
    details = []
    passes = 0
    worst = math.inf
    for y in noises:
        j_base = objective_atomic(x, y).J
        for c in shifts:
            j_shift = objective_atomic(x, shift(y, c)).J
            margin = tol - abs(j_shift - j_base)
            ok = margin >= 0.0
            passes += ok
            worst = min(worst, margin)
            details.append(
                {"shift": c, "J": j_base, "J_shifted": j_shift, "margin": margin, "pass": bool(ok)}
            )
    return TheoremReport("shift_invariance", len(details), passes, worst, tuple(details))


# ---------------------------------------------------------------------------
# Full battery run
# ---------------------------------------------------------------------------


def _merge_reports(theorem_id: str, parts: list[TheoremReport]) -> TheoremReport:
    instances = sum(p.instances for p in parts)
    passes = sum(p.passes for p in parts)
    worst = min((p.worst_margin for p in parts), default=0.0)
    details = tuple(d for p in parts for d in p.details)
    return TheoremReport(theorem_id, instances, passes, worst, details)


def run_all(
    battery: str | Sequence[tuple[str, SignalSpec]] = "standard",
    cfg: OptimizerConfig | None = None,
    quad: QuadratureConfig | None = None,
    seed: int = 42,
    mc_samples: int = 200_000,
    sentinel: bool = False,
) -> list[TheoremReport]:
    """Run every check over the battery; one aggregated report per theorem id.

    Deterministic for a fixed seed and configuration.  The sentinel flag (or
    the ``sentinel-broken`` battery name) swaps a deliberately broken engine
    into the data-processing check, which must then fail.
    """
    if isinstance(battery, str):
        signals, battery_sentinel = battery_by_name(battery)
        sentinel = sentinel or battery_sentinel
        if battery == "quick":
            mc_samples = min(mc_samples, 50_000)
    else:
        signals = list(battery)
    cfg = cfg or _default_cfg(seed)
    quad = quad or QuadratureConfig()
    sat_parts, mono_parts, rc_parts, semi_parts = [], [], [], []
    dp_pairs: list[tuple[SignalSpec, Noise]] = []
    smooth_pairs: list[tuple[SignalSpec, AtomicDistribution]] = []
    shift_parts = []
    colliding = AtomicDistribution(((-0.5, 0.5), (0.5, 0.5)))
    for name, x in signals:
        sat_parts.append((name, check_saturation(x, (0.1, 0.3, 0.5), cfg, quad)))
        mono_parts.append((name, check_monotonicity(x, (0.1, 0.2, 0.3, 0.4, 0.5), cfg, quad)))
        for eps0 in (0.0, 0.3):
            rc_parts.append((name, check_right_continuity(x, eps0, (0.1, 0.01, 0.001), cfg, quad)))
        semi_parts.append(
            (name, check_semicontinuity(x, WeakSequenceSpec("discretized_gaussian", 32, DensityNoise(((0.0, 0.5, 1.0),))), cfg, quad))
        )
        semi_parts.append(
            (name, check_semicontinuity(x, WeakSequenceSpec("vanishing_perturbation", 8, point_mass(0.0)), cfg, quad))
        )
        semi_parts.append(
            (name, check_semicontinuity(x, WeakSequenceSpec("atom_collapse", 8, colliding), cfg, quad))
        )
        dp_pairs.extend(
            [
                (x, point_mass(0.0)),
                (x, _no_collision_noise(x)),
                (x, colliding),
                (x, DensityNoise(((0.0, 0.5, 1.0),))),
            ]
        )
        smooth_pairs.extend([(x, point_mass(0.0)), (x, colliding)])
        shift_parts.append(
            (name, check_shift_invariance(x, [colliding, _no_collision_noise(x)]))
        )
    objective_fn = _sign_flipped_objective if sentinel else None
    dp_report = check_data_processing(dp_pairs, quad, mc_samples=mc_samples, seed=seed, objective_fn=objective_fn)
    smooth_report = check_gaussian_smoothing(smooth_pairs, sigma=0.25, quad=quad)
    reports = [
        _merge_reports("saturation", [p for _, p in sat_parts]),
        _merge_reports("strict_decrease", [p for _, p in mono_parts]),
        _merge_reports("right_continuity", [p for _, p in rc_parts]),
        smooth_report,
        _merge_reports("semicontinuity", [p for _, p in semi_parts]),
        dp_report,
        _merge_reports("shift_invariance", [p for _, p in shift_parts]),
    ]
    return reports
