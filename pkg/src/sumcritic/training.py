"""Alternating critic/generator optimization with periodic EMD evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import gp_critic, neural
from .basis import BasisKind, SeriesBasis, eval_features
from .critic import SummableCritic, critic_input_grad, critic_step, lipschitz_surrogate
from .datasets import DataSource, SourceKind
from .metrics import Histogram, build_histogram, emd_1d, kde_fit, kde_sample
from .neural import AdamState

log = logging.getLogger(__name__)

MODELS = ("taylor", "fourier", "wgan_gp", "kde")
SERIES_MODELS = {"taylor": BasisKind.TAYLOR, "fourier": BasisKind.FOURIER}

PRESETS = {
    "desk": {"gen_widths": (64, 64, 64), "iterations": 20_000},
    "full": {"gen_widths": (500, 500, 500), "iterations": 100_000},
}


@dataclass
class TrainConfig:
    model: str = "fourier"
    source: str = "mixture"
    seed: int = 1
    data_seed: int = 0
    n_terms: int = 20
    critic_param: str = "scaled"
    gen_widths: tuple = (64, 64, 64)
    gp_widths: tuple = (100, 100)
    noise_dim: int = 10
    batch_size: int = 256
    critic_steps: int = 5
    lam: float = 10.0
    lr: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    iterations: int = 20_000
    eval_every: int = 1_000
    eval_samples: int = 10_000
    bins: int = 100
    cities_path: str = ""

    def __post_init__(self):
        self.gen_widths = tuple(int(w) for w in self.gen_widths)
        self.gp_widths = tuple(int(w) for w in self.gp_widths)
        self.validate()

    def validate(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        SourceKind(self.source)
        if self.critic_param not in ("scaled", "raw"):
            raise ValueError("critic_param must be 'scaled' or 'raw'")
        for name in ("n_terms", "noise_dim", "batch_size", "critic_steps", "eval_every",
                     "eval_samples", "bins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2 for batch norm")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if not self.gen_widths or min(self.gen_widths) < 1:
            raise ValueError("gen_widths must be positive")

    @classmethod
    def preset(cls, name="desk", **overrides) -> "TrainConfig":
        return cls(**{**PRESETS[name], **overrides})

    @classmethod
    def field_types(cls) -> dict:
        return {f.name: type(f.default) for f in fields(cls)}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gen_widths"] = list(self.gen_widths)
        d["gp_widths"] = list(self.gp_widths)
        return d


@dataclass
class RunResult:
    config: dict
    trajectory: list = field(default_factory=list)  # (iteration, emd)
    surrogate_trajectory: list = field(default_factory=list)  # (iteration, weighted l1 norm)
    best_emd: float = float("inf")
    best_iteration: int = -1
    best_histogram: np.ndarray | None = None
    critic_params: dict = field(default_factory=dict)
    generator_params: dict = field(default_factory=dict)
    failed: bool = False
    message: str = ""
    wall_clock_seconds: float = 0.0

    def record(self, iteration, emd, hist: Histogram):
        self.trajectory.append((int(iteration), float(emd)))
        if emd < self.best_emd:
            self.best_emd = float(emd)
            self.best_iteration = int(iteration)
            self.best_histogram = hist.masses.copy()


class Divergence(RuntimeError):
    pass


def _streams(seed):
    init, train, evaluation = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(init), np.random.default_rng(train),
            np.random.default_rng(evaluation))


def evaluate_generator(gen, data_hist: Histogram, config: TrainConfig, rng) -> tuple[float, Histogram]:
    """EMD between ``eval_samples`` generator outputs and the data histogram.

    Batch norm runs on its running statistics here.
    """
    x = neural.sample_generator(gen, config.eval_samples, config.noise_dim, rng, mode="eval")
    hist = build_histogram(np.clip(x, -1.0, 1.0), data_hist.bin_count, (data_hist.lo, data_hist.hi))
    return emd_1d(hist, data_hist), hist


def generator_input_grad_summable(critic: SummableCritic, x_batch):
    return critic_input_grad(critic, np.clip(x_batch, -1.0, 1.0))


class _Trainer:
    def __init__(self, config: TrainConfig, data: DataSource):
        self.config = config
        self.data = np.asarray(data.samples, dtype=np.float64)
        if not np.all(np.abs(self.data) <= 1.0):
            raise ValueError("data samples must lie in [-1, 1]")
        init_rng, self.rng, self.eval_rng = _streams(config.seed)
        adam = dict(lr=config.lr, beta1=config.beta1, beta2=config.beta2)
        self.gen = neural.make_generator(config.noise_dim, config.gen_widths, init_rng)
        self.gen_adam = AdamState.for_params(self.gen.params(), **adam)
        if config.model in SERIES_MODELS:
            basis = SeriesBasis(SERIES_MODELS[config.model], config.n_terms)
            self.critic = SummableCritic(basis, adam_state=AdamState.for_params([np.zeros(basis.size)], **adam))
            self.data_features = eval_features(basis, self.data)
        else:
            self.critic = gp_critic.make_gp_critic(init_rng, config.gp_widths, **adam)
        self.data_hist = build_histogram(self.data, config.bins)

    def fake_batch(self):
        z = self.rng.standard_normal((self.config.batch_size, self.config.noise_dim))
        out, cache = neural.forward(self.gen, z, mode="train")
        return out[:, 0], cache

    def critic_update(self):
        cfg = self.config
        idx = self.rng.integers(0, self.data.size, size=cfg.batch_size)
        fake, _ = self.fake_batch()
        if isinstance(self.critic, SummableCritic):
            fake = np.clip(fake, -1.0, 1.0)
            c = self.data_features[idx].mean(axis=0) - eval_features(self.critic.basis, fake).mean(axis=0)
            report = critic_step(self.critic, c, cfg.lam, cfg.critic_param == "scaled")
        else:
            report = gp_critic.critic_step(self.critic, self.data[idx], fake, cfg.lam, self.rng)
        if not np.isfinite(report.total_loss):
            raise Divergence(f"non-finite critic loss {report.total_loss}")

    def generator_update(self):
        fake, cache = self.fake_batch()
        if isinstance(self.critic, SummableCritic):
            slope = generator_input_grad_summable(self.critic, fake)
        else:
            slope = gp_critic.input_gradient(self.critic, fake)
        # generator minimizes -mean f(G(z))
        grad_out = (-slope / fake.size).reshape(-1, 1)
        grads, _ = neural.backward(self.gen, cache, grad_out)
        neural.adam_step(self.gen.params(), grads, self.gen_adam)

    def surrogate(self):
        if isinstance(self.critic, SummableCritic):
            return lipschitz_surrogate(self.critic)
        return float("nan")

    def check_finite(self):
        if not self.gen.all_finite():
            raise Divergence("non-finite generator parameter")
        critic_arrays = self.critic_arrays().values()
        if not all(np.all(np.isfinite(a)) for a in critic_arrays):
            raise Divergence("non-finite critic parameter")

    def critic_arrays(self):
        if isinstance(self.critic, SummableCritic):
            return {"coeffs": self.critic.coeffs}
        return self.critic.net.state_arrays()


def train(config: TrainConfig, data: DataSource) -> RunResult:
    """Train one model on one data source; never raises on divergence.

    A run whose loss or parameters stop being finite is returned with
    ``failed=True`` and whatever trajectory it had recorded.
    """
    if config.model == "kde":
        return run_kde(config, data)
    start = time.perf_counter()
    t = _Trainer(config, data)
    result = RunResult(config=config.to_dict())

    def checkpoint(it):
        t.check_finite()
        emd, hist = evaluate_generator(t.gen, t.data_hist, config, t.eval_rng)
        result.record(it, emd, hist)
        result.surrogate_trajectory.append((it, t.surrogate()))

    try:
        checkpoint(0)
        for it in range(1, config.iterations + 1):
            for _ in range(config.critic_steps):
                t.critic_update()
            t.generator_update()
            if it % config.eval_every == 0:
                checkpoint(it)
                log.debug("%s/%s seed %d iter %d emd %.5f", config.model, config.source,
                          config.seed, it, result.trajectory[-1][1])
    except Divergence as exc:
        result.failed = True
        result.message = str(exc)
        log.warning("run %s/%s seed %d diverged: %s", config.model, config.source, config.seed, exc)
    result.critic_params = {k: v.copy() for k, v in t.critic_arrays().items()}
    result.generator_params = {k: v.copy() for k, v in t.gen.state_arrays().items()}
    result.wall_clock_seconds = time.perf_counter() - start
    return result


def run_kde(config: TrainConfig, data: DataSource) -> RunResult:
    """Nonparametric baseline: fit a KDE to the data and score its samples once."""
    start = time.perf_counter()
    init_rng, _, eval_rng = _streams(config.seed)
    data_hist = build_histogram(data.samples, config.bins)
    model = kde_fit(data.samples, "cv", init_rng)
    x = kde_sample(model, config.eval_samples, eval_rng)
    hist = build_histogram(x, config.bins)
    result = RunResult(config=config.to_dict())
    result.record(0, emd_1d(hist, data_hist), hist)
    result.critic_params = {"bandwidth": np.array([model.bandwidth])}
    result.wall_clock_seconds = time.perf_counter() - start
    return result
