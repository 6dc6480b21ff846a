"""Self-checks: penalized ascent against the closed-form critic, fast EMD against transport."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import SeriesBasis, derivative_bounds
from .critic import optimal_critic_closed_form, penalized_loss_and_grad, rescale_to_feasible
from .metrics import Histogram, emd_1d, emd_lp_oracle


def penalized_ascent(c, b, lam=10.0, steps=5000, lr=0.01, beta1=0.9, beta2=0.9, eps=1e-8):
    """Adam on the penalized critic loss for a stack of problems at once.

    ``c`` and ``b`` have shape ``(problems, features)`` (or broadcast to it).
    Adam runs on the bound-scaled coefficients ``b * A``: in raw coefficients
    its per-coordinate step makes high-order terms move up to 20*pi times
    faster in surrogate units, and the iterates chatter instead of trading
    mass between terms. The step size decays linearly to zero. Returns ``A``.
    """
    c = np.atleast_2d(np.asarray(c, dtype=np.float64))
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), c.shape)
    u = np.zeros_like(c)
    m = np.zeros_like(c)
    v = np.zeros_like(c)
    for t in range(1, steps + 1):
        _, _, _, g = penalized_loss_and_grad(u / b, c, b, lam)
        g = g / b
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        step = lr * (1.0 - (t - 1) / steps)
        u -= step * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
    return u / b


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: worst={self.worst:.3e} (tolerance {self.tolerance:g}) {self.detail}"


@dataclass
class Report:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def lines(self):
        return [c.line() for c in self.checks]


def critic_ascent_gaps(kind, n_instances=100, n_terms=20, seed=0, bounds_scale=1.0, **ascent):
    """Relative shortfall of penalized ascent versus the exact supremum.

    Each instance draws a feature gap ``c`` uniform in [-1, 1]. The ascent
    result is shrunk onto the feasible set before its objective is compared,
    so a correct run can only fall short of the supremum, never exceed it.
    ``bounds_scale`` corrupts the bounds seen by the ascent (negative control).
    """
    rng = np.random.default_rng(seed)
    b = derivative_bounds(SeriesBasis(kind, n_terms))
    c = rng.uniform(-1.0, 1.0, size=(n_instances, b.size))
    a = penalized_ascent(c, b * bounds_scale, **ascent)
    achieved = np.sum(rescale_to_feasible(a, b * bounds_scale) * c, axis=1)
    best = np.array([optimal_critic_closed_form(ci, b)[1] for ci in c])
    return (best - achieved) / best


def emd_oracle_deviations(n_pairs=500, max_bins=16, seed=0):
    rng = np.random.default_rng(seed)
    out = np.empty(n_pairs)
    for i in range(n_pairs):
        n = int(rng.integers(1, max_bins + 1))
        lo = float(rng.uniform(-2, 0))
        hi = lo + float(rng.uniform(0.5, 3))
        p = Histogram(_random_masses(rng, n), lo, hi)
        q = Histogram(_random_masses(rng, n), lo, hi)
        out[i] = abs(emd_1d(p, q) - emd_lp_oracle(p, q))
    return out


def _random_masses(rng, n):
    w = rng.exponential(size=n) * (rng.uniform(size=n) < 0.7)
    if w.sum() == 0:
        w[rng.integers(n)] = 1.0
    return w / w.sum()


def oracle_check(seed=0, bounds_scale=1.0, tolerance=0.01) -> Report:
    """Run the critic and EMD oracle comparisons on randomized instances."""
    report = Report()
    for kind in ("taylor", "fourier"):
        gaps = critic_ascent_gaps(kind, seed=seed, bounds_scale=bounds_scale)
        # a negative gap beyond rounding means the "feasible" critic beat the supremum
        worst = float(np.max(np.abs(gaps)))
        report.checks.append(CheckResult(
            f"critic ascent vs closed form ({kind}, N=20, 100 instances)",
            bool(worst < tolerance), worst, tolerance,
            f"mean gap {np.mean(gaps):.2e}",
        ))
    dev = emd_oracle_deviations(seed=seed)
    report.checks.append(CheckResult(
        "emd_1d vs transport oracle (500 pairs, <=16 bins)",
        bool(dev.max() < 1e-9), float(dev.max()), 1e-9,
    ))
    return report
