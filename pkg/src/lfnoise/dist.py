"""Distribution representations: finite atomic laws and Gaussian-mixture noise.

Atomic distributions are the exact representation for signals and discrete
noise; Gaussian mixtures are the absolutely-continuous noise family.  All
values are immutable after construction and every operation is pure, so
everything here is safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

from .errors import DegenerateSignal, NegativeEpsilon, ParseError

MASS_TOL = 1e-12
CENTER_TOL = 1e-12


def default_merge_tol(values: Iterable[float]) -> float:
    """Absolute value-collision tolerance, scaled to the support magnitude.

    Distinct float sums rarely collide exactly, yet collisions are the
    mechanism by which discrete noise hides information, so the merge rule
    must be deterministic and platform-independent.
    """
    vmax = max((abs(float(v)) for v in values), default=0.0)
    return 1e-9 * (1.0 + vmax)


def _merge_sorted_atoms(pairs: list[tuple[float, float]], merge_tol: float):
    """Single left-to-right pass merging values closer than ``merge_tol``.

    The merged value is the mass-weighted mean of the colliding values, which
    preserves the first moment exactly.
    """
    merged: list[tuple[float, float]] = []
    group_v: list[float] = []
    group_m: list[float] = []
    for v, m in pairs:
        if group_v and v - group_v[-1] > merge_tol:
            mass = math.fsum(group_m)
            value = math.fsum(gv * gm for gv, gm in zip(group_v, group_m)) / mass
            merged.append((value, mass))
            group_v, group_m = [], []
        group_v.append(v)
        group_m.append(m)
    if group_v:
        mass = math.fsum(group_m)
        value = math.fsum(gv * gm for gv, gm in zip(group_v, group_m)) / mass
        merged.append((value, mass))
    return merged


@dataclass
class AtomicDistribution:
    """Finite distribution given by ordered ``(value, mass)`` atoms.

    Construction sorts the atoms and merges values closer than ``merge_tol``
    in one pass, so instances are in canonical form and can be compared
    atom-by-atom.  Masses must be strictly positive and sum to 1.
    """

    atoms: tuple[tuple[float, float], ...]
    merge_tol: float | None = None

    def __post_init__(self):
        pairs = [(float(v), float(m)) for v, m in self.atoms]
        if not pairs:
            raise ValueError("distribution needs at least one atom")
        for v, m in pairs:
            if not math.isfinite(v):
                raise ValueError(f"non-finite atom value {v!r}")
            if not (0.0 < m <= 1.0):
                raise ValueError(f"atom mass {m!r} outside (0, 1]")
        if self.merge_tol is None:
            self.merge_tol = default_merge_tol(v for v, _ in pairs)
        pairs.sort()
        merged = _merge_sorted_atoms(pairs, self.merge_tol)
        total = math.fsum(m for _, m in merged)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {total!r}, expected 1")
        self.atoms = tuple(merged)

    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms], dtype=np.float64)

    def masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms], dtype=np.float64)

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass
class DensityNoise:
    """Gaussian-mixture noise: ``(mean, sd, weight)`` components, weights sum to 1.

    Every standard deviation must be strictly positive (non-degenerate), so
    the mixture has a smooth everywhere-positive density and closed-form
    moments.
    """

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        comps = [(float(mu), float(sd), float(w)) for mu, sd, w in self.components]
        if not comps:
            raise ValueError("mixture needs at least one component")
        for mu, sd, w in comps:
            if not (math.isfinite(mu) and math.isfinite(sd) and math.isfinite(w)):
                raise ValueError("non-finite mixture component")
            if sd <= 0.0:
                raise ValueError(f"component sd {sd!r} must be positive")
            if not (0.0 < w <= 1.0):
                raise ValueError(f"component weight {w!r} outside (0, 1]")
        total = math.fsum(w for _, _, w in comps)
        if abs(total - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1")
        comps.sort()
        self.components = tuple(comps)

    def means(self) -> np.ndarray:
        return np.array([mu for mu, _, _ in self.components], dtype=np.float64)

    def sds(self) -> np.ndarray:
        return np.array([sd for _, sd, _ in self.components], dtype=np.float64)

    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.components], dtype=np.float64)

    def density(self, s) -> np.ndarray:
        """Mixture density evaluated pointwise (direct summation)."""
        s = np.asarray(s, dtype=np.float64)
        out = np.zeros_like(s, dtype=np.float64)
        for mu, sd, w in self.components:
            z = (s - mu) / sd
            out += w * np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))
        return out


Noise = Union[AtomicDistribution, DensityNoise]


@dataclass
class SignalSpec:
    """Validated signal: centered, non-degenerate atomic distribution.

    ``variance`` is cached at construction.  Use :func:`signal_from_distribution`
    to re-center an arbitrary atomic distribution first.
    """

    dist: AtomicDistribution
    variance: float = 0.0

    def __post_init__(self):
        mean, _, var = moments(self.dist)
        if abs(mean) > CENTER_TOL:
            raise ValueError(f"signal mean {mean!r} is not centered")
        if len(self.dist) < 2 or var <= 0.0:
            raise DegenerateSignal("signal must have at least two atoms and positive variance")
        self.variance = var


def signal_from_distribution(d: AtomicDistribution) -> SignalSpec:
    """Center ``d`` and wrap it as a signal."""
    return SignalSpec(center(d))


@dataclass(frozen=True)
class NoiseBudget:
    """Second-moment budget: the noise must satisfy E[Y^2] <= epsilon^2."""

    epsilon: float

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0.0:
            raise NegativeEpsilon(f"epsilon {self.epsilon!r} must be finite and >= 0")


def as_budget(eps: Union[NoiseBudget, float]) -> NoiseBudget:
    return eps if isinstance(eps, NoiseBudget) else NoiseBudget(float(eps))


def point_mass(value: float = 0.0) -> AtomicDistribution:
    return AtomicDistribution(((float(value), 1.0),))


def center(d: AtomicDistribution) -> AtomicDistribution:
    """Shift all values by minus the mean; masses unchanged."""
    mean, _, _ = moments(d)
    return AtomicDistribution(
        tuple((v - mean, m) for v, m in d.atoms), merge_tol=d.merge_tol
    )


def shift(d: AtomicDistribution, c: float) -> AtomicDistribution:
    """Translate all atom values by ``c``."""
    return AtomicDistribution(tuple((v + c, m) for v, m in d.atoms))


def scale(d: AtomicDistribution, a: float) -> AtomicDistribution:
    """Multiply all atom values by ``a`` (nonzero)."""
    if a == 0.0:
        raise ValueError("scale factor must be nonzero")
    return AtomicDistribution(tuple((v * a, m) for v, m in d.atoms))


def moments(d: AtomicDistribution) -> tuple[float, float, float]:
    """Return (mean, second moment, variance) by exact compensated sums."""
    mean = math.fsum(v * m for v, m in d.atoms)
    second = math.fsum(v * v * m for v, m in d.atoms)
    return mean, second, second - mean * mean


def mixture_moments(y: DensityNoise) -> tuple[float, float]:
    """Closed-form mixture mean and second moment."""
    mean = math.fsum(w * mu for mu, _, w in y.components)
    second = math.fsum(w * (mu * mu + sd * sd) for mu, sd, w in y.components)
    return mean, second


def noise_moments(y: Noise) -> tuple[float, float]:
    """(mean, second moment) for either noise representation."""
    if isinstance(y, AtomicDistribution):
        mean, second, _ = moments(y)
        return mean, second
    return mixture_moments(y)


class SumClasses(NamedTuple):
    """Merge classes of the pairwise sums ``x_i + y_j``.

    ``values[s]`` is the mass-weighted value of class ``s``, ``mass[s]`` its
    probability, and ``xnum[s]`` the sum of ``x_i * p_i * q_j`` over pairs in
    the class.  ``pair_class``, ``i_index`` and ``j_index`` are per-pair and
    aligned with each other.
    """

    values: np.ndarray
    mass: np.ndarray
    xnum: np.ndarray
    pair_class: np.ndarray
    i_index: np.ndarray
    j_index: np.ndarray
    merge_tol: float


def pairwise_sum_classes(
    xv: np.ndarray,
    xm: np.ndarray,
    yv: np.ndarray,
    ym: np.ndarray,
    merge_tol: float | None = None,
) -> SumClasses:
    """Group the pairwise sums into collision classes.

    Sorted sums are chained into one class while consecutive gaps stay within
    ``merge_tol``; the class value is the mass-weighted mean.  This is the
    single source of truth for collisions: the sum law, the conditional
    expectation and the weight gradient all reuse these classes.
    """
    n, m = len(xv), len(yv)
    s = (xv[:, None] + yv[None, :]).ravel()
    w = (xm[:, None] * ym[None, :]).ravel()
    i_index = np.repeat(np.arange(n), m)
    j_index = np.tile(np.arange(m), n)
    if merge_tol is None:
        merge_tol = 1e-9 * (1.0 + float(np.abs(s).max()))
    order = np.argsort(s, kind="stable")
    s, w = s[order], w[order]
    i_index, j_index = i_index[order], j_index[order]
    new_class = np.empty(s.shape, dtype=bool)
    new_class[0] = True
    np.greater(np.diff(s), merge_tol, out=new_class[1:])
    pair_class = np.cumsum(new_class) - 1
    starts = np.flatnonzero(new_class)
    mass = np.add.reduceat(w, starts)
    values = np.add.reduceat(w * s, starts) / mass
    xnum = np.add.reduceat(w * xv[i_index], starts)
    return SumClasses(values, mass, xnum, pair_class, i_index, j_index, merge_tol)


def sum_law(x: AtomicDistribution, y: AtomicDistribution) -> AtomicDistribution:
    """Law of ``X + Y`` for independent atomic ``X`` and ``Y``.

    Atoms sit at all pairwise sums with product masses; sums within the merge
    tolerance are aggregated mass-weightedly.
    """
    classes = pairwise_sum_classes(x.values(), x.masses(), y.values(), y.masses())
    atoms = tuple(zip(classes.values.tolist(), classes.mass.tolist()))
    return AtomicDistribution(atoms, merge_tol=classes.merge_tol)


class Feasibility(NamedTuple):
    feasible: bool
    mean_slack: float
    var_slack: float


def feasibility_check(
    y: Noise, eps: Union[NoiseBudget, float], tol: float = 1e-9
) -> Feasibility:
    """Check membership in the feasible noise class for budget ``eps``.

    Slacks are signed excesses: ``mean_slack`` is E[Y] and ``var_slack`` is
    E[Y^2] - eps^2, so positive ``var_slack`` means the budget is exceeded.
    """
    eps = as_budget(eps)
    mean, second = noise_moments(y)
    var_slack = second - eps.epsilon**2
    feasible = abs(mean) <= tol and var_slack <= tol
    return Feasibility(feasible, mean, var_slack)


# ---------------------------------------------------------------------------
# Serialization: {"atoms": [[v, m], ...]} or {"mixture": [[mean, sd, weight], ...]}
# ---------------------------------------------------------------------------


def distribution_to_json(obj: Noise) -> str:
    if isinstance(obj, AtomicDistribution):
        doc = {"atoms": [[v, m] for v, m in obj.atoms]}
    elif isinstance(obj, DensityNoise):
        doc = {"mixture": [[mu, sd, w] for mu, sd, w in obj.components]}
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
    return json.dumps(doc)


def distribution_from_json(text: str) -> Noise:
    """Parse a distribution document; unknown fields are rejected."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("expected a JSON object")
    keys = set(doc)
    if keys == {"atoms"}:
        rows = doc["atoms"]
        if not isinstance(rows, list) or not all(
            isinstance(r, list) and len(r) == 2 for r in rows
        ):
            raise ParseError('"atoms" must be a list of [value, mass] pairs')
        try:
            return AtomicDistribution(tuple((float(v), float(m)) for v, m in rows))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"invalid atoms: {exc}") from exc
    if keys == {"mixture"}:
        rows = doc["mixture"]
        if not isinstance(rows, list) or not all(
            isinstance(r, list) and len(r) == 3 for r in rows
        ):
            raise ParseError('"mixture" must be a list of [mean, sd, weight] triples')
        try:
            return DensityNoise(tuple((float(a), float(b), float(c)) for a, b, c in rows))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"invalid mixture: {exc}") from exc
    raise ParseError(f"unrecognized fields {sorted(keys)!r}; expected 'atoms' or 'mixture'")


def load_distribution(path) -> Noise:
    with open(path, "r", encoding="utf-8") as handle:
        return distribution_from_json(handle.read())


def save_distribution(obj: Noise, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(distribution_to_json(obj))
        handle.write("\n")
