"""Histograms, one-dimensional Earth-Mover's distance, and the KDE baseline."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

BIN_COUNT = 100
RANGE = (-1.0, 1.0)
BANDWIDTH_FLOOR = 1e-3


@dataclass
class Histogram:
    masses: np.ndarray
    lo: float = RANGE[0]
    hi: float = RANGE[1]

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=np.float64)
        if self.masses.ndim != 1 or self.masses.size < 1:
            raise ValueError("histogram needs at least one bin")
        if not self.lo < self.hi:
            raise ValueError(f"empty range [{self.lo}, {self.hi}]")
        if np.any(self.masses < 0) or abs(self.masses.sum() - 1.0) > 1e-9:
            raise ValueError("masses must be nonnegative and sum to 1")

    @property
    def bin_count(self) -> int:
        return self.masses.size

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.bin_count

    @property
    def bin_centers(self) -> np.ndarray:
        return self.lo + self.bin_width * (np.arange(self.bin_count) + 0.5)

    def same_grid(self, other: "Histogram") -> bool:
        return (self.bin_count, self.lo, self.hi) == (other.bin_count, other.lo, other.hi)


def build_histogram(samples, bin_count=BIN_COUNT, range=RANGE) -> Histogram:
    """Uniform-bin histogram normalized to unit mass; ``hi`` goes to the last bin."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    lo, hi = float(range[0]), float(range[1])
    if x.size == 0:
        raise ValueError("cannot build a histogram from no samples")
    if not np.all((x >= lo) & (x <= hi)):
        raise ValueError(f"samples outside [{lo}, {hi}]; clamp them first")
    idx = np.floor((x - lo) / (hi - lo) * bin_count).astype(np.int64)
    np.minimum(idx, bin_count - 1, out=idx)
    counts = np.bincount(idx, minlength=bin_count)
    return Histogram(counts / x.size, lo, hi)


def _check_grids(p: Histogram, q: Histogram):
    if not p.same_grid(q):
        raise ValueError(
            f"histogram grids differ: {p.bin_count} bins on [{p.lo}, {p.hi}] vs "
            f"{q.bin_count} bins on [{q.lo}, {q.hi}]"
        )


def emd_1d(p: Histogram, q: Histogram) -> float:
    """Wasserstein-1 between two histograms on one grid, ground cost |center gap|.

    In one dimension this is the l1 distance between the cumulative masses,
    scaled by the bin width.
    """
    _check_grids(p, q)
    return float(p.bin_width * np.sum(np.abs(np.cumsum(p.masses - q.masses))))


def emd_lp_oracle(p: Histogram, q: Histogram) -> float:
    """Optimal transport cost by north-west-corner matching on the sorted bins.

    For a convex ground cost on the line, the monotone (north-west-corner)
    coupling solves the transport program exactly; this builds that coupling
    explicitly and prices it against the full bin-center cost matrix. Intended
    for small test instances.
    """
    _check_grids(p, q)
    centers = p.bin_centers
    cost = np.abs(centers[:, None] - centers[None, :])
    supply = p.masses.copy()
    demand = q.masses.copy()
    plan = np.zeros_like(cost)
    i = j = 0
    n = p.bin_count
    while i < n and j < n:
        moved = min(supply[i], demand[j])
        plan[i, j] += moved
        supply[i] -= moved
        demand[j] -= moved
        if supply[i] <= demand[j]:
            i += 1
        else:
            j += 1
    return float(np.sum(plan * cost))


def histogram_to_csv(hist: Histogram) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["bin_center", "mass"])
    for c, m in zip(hist.bin_centers, hist.masses):
        writer.writerow([repr(float(c)), repr(float(m))])
    return buf.getvalue()


def histogram_from_csv(text: str) -> Histogram:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [h.strip() for h in rows[0]] != ["bin_center", "mass"]:
        raise ValueError("histogram CSV must start with header 'bin_center,mass'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    centers, masses = data[:, 0], data[:, 1]
    width = centers[1] - centers[0] if centers.size > 1 else 2.0 * abs(centers[0]) or 1.0
    return Histogram(masses, centers[0] - width / 2, centers[-1] + width / 2)


@dataclass
class KdeModel:
    support_points: np.ndarray
    bandwidth: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


def silverman_bandwidth(samples) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n**(-1/5)``, falling back to sd when IQR is 0."""
    x = np.asarray(samples, dtype=np.float64)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34)
    if spread <= 0:
        spread = sd
    return max(0.9 * spread * x.size ** -0.2, BANDWIDTH_FLOOR)


def cv_bandwidth(samples, rng=None, n_grid=24, holdout=0.2, max_eval=2000) -> float:
    """Bandwidth maximizing held-out Gaussian-kernel log-likelihood.

    Candidates are log-spaced from the floor up to the Silverman bandwidth.
    The split is drawn from ``rng`` (a fixed seed when omitted).
    """
    x = np.asarray(samples, dtype=np.float64)
    rng = np.random.default_rng(0) if rng is None else rng
    upper = silverman_bandwidth(x)
    if upper <= BANDWIDTH_FLOOR:
        return BANDWIDTH_FLOOR
    perm = rng.permutation(x.size)
    n_test = min(max(1, int(holdout * x.size)), max_eval)
    test, train = x[perm[:n_test]], x[perm[n_test:]]
    if train.size == 0:
        return upper
    sq = (test[:, None] - train[None, :]) ** 2
    grid = np.geomspace(BANDWIDTH_FLOOR, upper, n_grid)
    scores = []
    for h in grid:
        k = np.exp(-0.5 * sq / (h * h)).mean(axis=1) / (h * np.sqrt(2 * np.pi))
        scores.append(np.sum(np.log(np.maximum(k, 1e-300))))
    return float(grid[int(np.argmax(scores))])


def kde_fit(samples, bandwidth="cv", rng=None) -> KdeModel:
    """Gaussian KDE over ``samples``.

    ``bandwidth`` is a positive number, ``"silverman"``, or ``"cv"``
    (held-out likelihood, searched below the Silverman value).
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("KDE needs at least 2 samples")
    if bandwidth == "silverman":
        h = silverman_bandwidth(x)
    elif bandwidth == "cv":
        h = cv_bandwidth(x, rng)
    else:
        h = float(bandwidth)
    return KdeModel(x.copy(), h)


def kde_sample(model: KdeModel, count, rng, lo=RANGE[0], hi=RANGE[1]) -> np.ndarray:
    idx = rng.integers(0, model.support_points.size, size=count)
    noise = rng.normal(0.0, model.bandwidth, size=count)
    return np.clip(model.support_points[idx] + noise, lo, hi)
