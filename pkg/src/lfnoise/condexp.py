"""Posterior mean g(s) = E[X | X+Y = s] and the objective J(Y) = var E[X | X+Y].

Two engines: an exact one for atomic noise (conditioning classes are the sum
law's merge classes) and a composite Gauss-Legendre one for Gaussian-mixture
noise with a certified error bound.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy.special import erfc, erfcinv, logsumexp

from .dist import (
    AtomicDistribution,
    DensityNoise,
    Noise,
    SignalSpec,
    mixture_moments,
    moments,
    pairwise_sum_classes,
)
from .errors import (
    InternalConsistencyError,
    NonPositiveSigma,
    ParseError,
    QuadratureBudgetExceeded,
)

MEAN_CONSISTENCY_TOL = 1e-9

METHODS = ("exact_atomic", "quadrature", "grid")


@dataclass
class QuadratureConfig:
    """Controls for the density-noise engine.

    ``nodes`` Gauss-Legendre nodes per panel; panels of width sd/2 span the
    effective range of every mixture component of the sum, wide enough that
    the neglected tail mass stays below ``tail_tol``.
    """

    nodes: int = 32
    tail_tol: float = 1e-12
    max_nodes: int = 200_000

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("need at least 2 nodes per panel")
        if not (0.0 < self.tail_tol < 0.1):
            raise ValueError("tail_tol must lie in (0, 0.1)")
        if self.max_nodes < self.nodes:
            raise ValueError("max_nodes smaller than one panel")


@dataclass
class PosteriorMean:
    """The function g(s) = E[X | X+Y = s] together with the law of S = X+Y.

    For ``kind="atomic"`` the weight of a point is P(S = s); for
    ``kind="gridded"`` it is quadrature weight times the density of S, so the
    weights sum to 1 up to the quadrature tail bound.  Every g value lies in
    the closed range of the signal atoms.
    """

    kind: str
    s: np.ndarray
    weight: np.ndarray
    g: np.ndarray
    bounds: tuple[float, float]

    def __post_init__(self):
        if self.kind not in ("atomic", "gridded"):
            raise ValueError(f"unknown posterior kind {self.kind!r}")
        if np.any(self.weight <= 0.0):
            raise ValueError("posterior weights must be positive")
        lo, hi = self.bounds
        if np.any(self.g < lo) or np.any(self.g > hi):
            raise ValueError("posterior mean escapes the signal atom range")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", "weight", "g"])
        for row in zip(self.s.tolist(), self.weight.tolist(), self.g.tolist()):
            writer.writerow([repr(v) for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class ObjectiveReport:
    """J together with its context: variance split, noise moments, provenance.

    ``prediction_error`` is exactly ``var_x - J``; ``quadrature_error_bound``
    is 0 for the exact engine.
    """

    J: float
    var_x: float
    prediction_error: float
    noise_mean: float
    noise_second_moment: float
    method: str
    quadrature_error_bound: float

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.J < -self.quadrature_error_bound - 1e-15:
            raise ValueError(f"negative objective {self.J!r}")

    def to_json(self) -> str:
        return json.dumps(
            {
                "J": self.J,
                "var_x": self.var_x,
                "prediction_error": self.prediction_error,
                "noise_mean": self.noise_mean,
                "noise_second_moment": self.noise_second_moment,
                "method": self.method,
                "quadrature_error_bound": self.quadrature_error_bound,
            }
        )


def objective_report_from_json(text: str) -> ObjectiveReport:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    expected = {
        "J",
        "var_x",
        "prediction_error",
        "noise_mean",
        "noise_second_moment",
        "method",
        "quadrature_error_bound",
    }
    if not isinstance(doc, dict) or set(doc) != expected:
        raise ParseError("objective report fields do not match the schema")
    return ObjectiveReport(**doc)


def _report(J, var_x, noise_mean, noise_m2, method, qeb) -> ObjectiveReport:
    return ObjectiveReport(
        J=J,
        var_x=var_x,
        prediction_error=var_x - J,
        noise_mean=noise_mean,
        noise_second_moment=noise_m2,
        method=method,
        quadrature_error_bound=qeb,
    )


# ---------------------------------------------------------------------------
# Exact engine for atomic noise
# ---------------------------------------------------------------------------


def posterior_mean_atomic(x: SignalSpec, y: AtomicDistribution) -> PosteriorMean:
    """Conditional expectation on the discrete sum law.

    Conditioning classes are exactly the merge classes of the sum law, so a
    collision of sums is the same event here and there.
    """
    xv, xm = x.dist.values(), x.dist.masses()
    classes = pairwise_sum_classes(xv, xm, y.values(), y.masses())
    g = classes.xnum / classes.mass
    bounds = (float(xv[0]), float(xv[-1]))
    g = np.clip(g, bounds[0], bounds[1])
    return PosteriorMean("atomic", classes.values, classes.mass, g, bounds)


def objective_atomic(x: SignalSpec, y: AtomicDistribution) -> ObjectiveReport:
    """Exact J for atomic noise via enumeration over merge classes."""
    pm = posterior_mean_atomic(x, y)
    J, resid = _variance_of_posterior(pm.weight, pm.g)
    scale = 1.0 + abs(pm.bounds[0]) + abs(pm.bounds[1])
    if abs(resid) > MEAN_CONSISTENCY_TOL * scale:
        raise InternalConsistencyError(
            f"posterior mean of X drifted to {resid!r}; expected 0"
        )
    mean_y, m2_y, _ = moments(y)
    return _report(J, x.variance, mean_y, m2_y, "exact_atomic", 0.0)


def _variance_of_posterior(weight: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    lin = math.fsum((weight * g).tolist())
    quad = math.fsum((weight * g * g).tolist())
    return quad - lin * lin, lin


def objective_from_posterior(x: SignalSpec, pm: PosteriorMean) -> ObjectiveReport:
    """Recompute J from an exported posterior representation.

    Method is ``exact_atomic`` for atomic posteriors and ``grid`` for gridded
    ones; noise moments are not recoverable from the posterior, so they are
    reported as NaN.
    """
    J, _ = _variance_of_posterior(pm.weight, pm.g)
    method = "exact_atomic" if pm.kind == "atomic" else "grid"
    qeb = 0.0 if pm.kind == "atomic" else max(0.0, 1.0 - float(np.sum(pm.weight)))
    return _report(J, x.variance, math.nan, math.nan, method, qeb)


# ---------------------------------------------------------------------------
# Quadrature engine for Gaussian-mixture noise
# ---------------------------------------------------------------------------


@lru_cache(maxsize=16)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ws = np.polynomial.legendre.leggauss(n)
    return xs, ws


def _sum_mixture(x: SignalSpec, y: DensityNoise):
    """Components of the law of S = X+Y: centers x_i + mu_k, sds sigma_k."""
    xv, xm = x.dist.values(), x.dist.masses()
    mu, sd, w = y.means(), y.sds(), y.weights()
    centers = (xv[:, None] + mu[None, :]).ravel()
    sds = np.broadcast_to(sd[None, :], (len(xv), len(mu))).ravel()
    weights = (xm[:, None] * w[None, :]).ravel()
    return centers, sds, weights


def _panel_edges(x: SignalSpec, y: DensityNoise, quad: QuadratureConfig, width_factor: float = 0.5):
    """Locally adaptive panel edges covering every component of S.

    Each component contributes edges of spacing ``width_factor`` times its sd
    across its own +-z sd window; the union keeps narrow features resolved
    without flooding wide regions with narrow panels.  Returns
    (lows, highs, neglected_mass_bound).
    """
    centers, sds, weights = _sum_mixture(x, y)
    z = max(8.0, math.sqrt(2.0) * float(erfcinv(quad.tail_tol)))
    per_comp_tail = float(erfc(z / math.sqrt(2.0)))
    neglected = per_comp_tail  # weights sum to 1
    panels_per_comp = int(math.ceil(2.0 * z / width_factor))
    edge_sets = [
        np.linspace(c - z * s, c + z * s, panels_per_comp + 1)
        for c, s in zip(centers, sds)
    ]
    edges = np.unique(np.concatenate(edge_sets))
    intervals = sorted((c - z * s, c + z * s) for c, s in zip(centers, sds))
    merged = [list(intervals[0])]
    for lo, hi in intervals[1:]:
        if lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    lows, highs = edges[:-1], edges[1:]
    mids = 0.5 * (lows + highs)
    starts = np.array([iv[0] for iv in merged])
    ends = np.array([iv[1] for iv in merged])
    idx = np.searchsorted(starts, mids, side="right") - 1
    inside = (idx >= 0) & (mids <= ends[np.clip(idx, 0, len(ends) - 1)])
    return lows[inside], highs[inside], neglected


def _posterior_on_nodes(x: SignalSpec, y: DensityNoise, s: np.ndarray):
    """Stable d(s), g(s) via per-atom log-density evaluation.

    d(s) is the density of S and g(s) = m(s)/d(s) with
    m(s) = sum_i x_i p_i f_Y(s - x_i); the ratio is formed from shifted
    exponentials so g never over- or underflows.
    """
    xv, xm = x.dist.values(), x.dist.masses()
    mu, sd, w = y.means(), y.sds(), y.weights()
    t = (s[None, None, :] - xv[:, None, None] - mu[None, :, None]) / sd[None, :, None]
    log_k = np.log(w) - np.log(sd) - 0.5 * math.log(2.0 * math.pi)
    log_terms = log_k[None, :, None] - 0.5 * t * t
    log_fi = logsumexp(log_terms, axis=1) + np.log(xm)[:, None]
    lmax = log_fi.max(axis=0)
    ratios = np.exp(log_fi - lmax[None, :])
    denom = ratios.sum(axis=0)
    g = (xv @ ratios) / denom
    with np.errstate(under="ignore"):
        d = np.exp(lmax + np.log(denom))
    return d, g


def _nodes_for_panels(lows, highs, nodes):
    base_x, base_w = _leggauss(nodes)
    half = 0.5 * (highs - lows)
    mid = 0.5 * (highs + lows)
    s = (mid[:, None] + half[:, None] * base_x[None, :]).ravel()
    w = (half[:, None] * base_w[None, :]).ravel()
    return s, w


def posterior_mean_density(
    x: SignalSpec, y: DensityNoise, quad: QuadratureConfig | None = None
) -> PosteriorMean:
    """Posterior mean on quadrature nodes; weights are GL weight times d(s)."""
    quad = quad or QuadratureConfig()
    lows, highs, _ = _panel_edges(x, y, quad)
    if len(lows) * quad.nodes > quad.max_nodes:
        raise QuadratureBudgetExceeded(
            f"{len(lows)} panels x {quad.nodes} nodes exceeds {quad.max_nodes}"
        )
    s, w = _nodes_for_panels(lows, highs, quad.nodes)
    d, g = _posterior_on_nodes(x, y, s)
    keep = d > 0.0
    xv = x.dist.values()
    bounds = (float(xv[0]), float(xv[-1]))
    g = np.clip(g[keep], bounds[0], bounds[1])
    return PosteriorMean("gridded", s[keep], (w * d)[keep], g, bounds)


def _density_run(x: SignalSpec, y: DensityNoise, lows, highs, nodes: int):
    s, w = _nodes_for_panels(lows, highs, nodes)
    d, g = _posterior_on_nodes(x, y, s)
    wd = w * d
    lin = math.fsum((wd * g).tolist())
    quad_term = math.fsum((wd * g * g).tolist())
    mass = math.fsum(wd.tolist())
    return quad_term - lin * lin, mass, lin


def objective_value_search(
    x: SignalSpec, y: DensityNoise, quad: QuadratureConfig | None = None
) -> float:
    """Search-grade J: coarser panels, single run, no error accounting.

    For optimizer inner loops only; report values through
    :func:`objective_density`.
    """
    quad = quad or QuadratureConfig()
    lows, highs, _ = _panel_edges(x, y, quad, width_factor=2.0)
    nodes = max(8, quad.nodes // 2)
    if len(lows) * nodes > quad.max_nodes:
        raise QuadratureBudgetExceeded(
            f"{len(lows)} panels x {nodes} nodes exceeds {quad.max_nodes}"
        )
    J, _, _ = _density_run(x, y, lows, highs, nodes)
    return J


def objective_density(
    x: SignalSpec, y: DensityNoise, quad: QuadratureConfig | None = None
) -> ObjectiveReport:
    """J for Gaussian-mixture noise by composite Gauss-Legendre panels.

    The reported error bound combines the certified tail bound
    max_i x_i^2 times the neglected mass of S with a node-doubling
    refinement estimate, so doubling ``quad.nodes`` moves J by less than the
    bound reported here.
    """
    quad = quad or QuadratureConfig()
    lows, highs, neglected = _panel_edges(x, y, quad)
    if len(lows) * quad.nodes > quad.max_nodes:
        raise QuadratureBudgetExceeded(
            f"{len(lows)} panels x {quad.nodes} nodes exceeds {quad.max_nodes}"
        )
    J_coarse, _, _ = _density_run(x, y, lows, highs, quad.nodes)
    J, mass, resid = _density_run(x, y, lows, highs, 2 * quad.nodes)
    xv = x.dist.values()
    x2max = float(np.max(xv * xv))
    scale = 1.0 + abs(float(xv[0])) + abs(float(xv[-1]))
    if abs(resid) > MEAN_CONSISTENCY_TOL * scale:
        raise InternalConsistencyError(
            f"posterior mean of X drifted to {resid!r}; expected 0"
        )
    tail_term = x2max * max(neglected, abs(1.0 - mass))
    refine_term = abs(J - J_coarse) + 1e-15 * (1.0 + x.variance)
    qeb = tail_term + refine_term
    mean_y, m2_y = mixture_moments(y)
    return _report(J, x.variance, mean_y, m2_y, "quadrature", qeb)


def smooth_with_gaussian(y: Noise, sigma: float) -> DensityNoise:
    """Law of Y + Z for Z ~ N(0, sigma^2) independent of Y.

    Atomic Y becomes a mixture with one component per atom; mixture Y keeps
    its components with inflated variances.  Adds sigma^2 to the second
    moment either way.
    """
    if not (sigma > 0.0) or not math.isfinite(sigma):
        raise NonPositiveSigma(f"sigma {sigma!r} must be positive and finite")
    if isinstance(y, AtomicDistribution):
        return DensityNoise(tuple((v, sigma, m) for v, m in y.atoms))
    return DensityNoise(
        tuple(
            (mu, math.sqrt(sd * sd + sigma * sigma), w) for mu, sd, w in y.components
        )
    )


def objective(
    x: SignalSpec, y: Noise, quad: QuadratureConfig | None = None
) -> ObjectiveReport:
    """Dispatch to the exact or quadrature engine by noise kind."""
    if isinstance(y, AtomicDistribution):
        return objective_atomic(x, y)
    return objective_density(x, y, quad)
