"""Shared fixtures and the independent enumeration oracle."""

import math

import pytest

import lfnoise as lf


def enum_objective(x_pairs, y_pairs, tol=1e-9):
    """Brute-force oracle for var E[X | X+Y] with atomic X and Y.

    Pure-Python enumeration over all (x, y) outcome pairs, grouping sums by
    gap clustering; independent of the library's engines.
    """
    outcomes = []
    for xv, xm in x_pairs:
        for yv, ym in y_pairs:
            outcomes.append((xv + yv, xm * ym, xv))
    outcomes.sort()
    groups = []
    for s, w, xv in outcomes:
        if groups and s - groups[-1][-1][0] <= tol:
            groups[-1].append((s, w, xv))
        else:
            groups.append([(s, w, xv)])
    mean_x = math.fsum(w * xv for _, w, xv in outcomes)
    second = 0.0
    for grp in groups:
        mass = math.fsum(w for _, w, _ in grp)
        g_val = math.fsum(w * xv for _, w, xv in grp) / mass
        second += mass * g_val * g_val
    return second - mean_x * mean_x


@pytest.fixture
def bernoulli():
    return lf.SignalSpec(lf.AtomicDistribution(((-0.5, 0.5), (0.5, 0.5))))


@pytest.fixture
def pm_half():
    return lf.AtomicDistribution(((-0.5, 0.5), (0.5, 0.5)))


@pytest.fixture
def rademacher():
    return lf.SignalSpec(lf.AtomicDistribution(((-1.0, 0.5), (1.0, 0.5))))
