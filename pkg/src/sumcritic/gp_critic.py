"""MLP critic trained with a gradient penalty on real/fake interpolates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import neural
from .neural import AdamState, DenseNet


@dataclass
class GpCritic:
    net: DenseNet
    adam_state: AdamState = field(default_factory=AdamState)

    def __post_init__(self):
        if self.net.output_dim != 1 or self.net.input_dim != 1:
            raise ValueError("gradient-penalty critic maps scalars to scalars")
        if self.net.has_batch_norm:
            raise ValueError("gradient-penalty critic must not use batch norm")


def make_gp_critic(rng, widths=(100, 100), **adam) -> GpCritic:
    net = neural.make_mlp_critic(widths, rng)
    return GpCritic(net, AdamState.for_params(net.params(), **adam))


@dataclass
class GpLossReport:
    wasserstein: float  # mean f(real) - mean f(fake)
    penalty: float  # mean (|f'(x_hat)| - 1)^2, before weighting
    total_loss: float


def critic_values(critic: GpCritic, x):
    out, _ = neural.forward(critic.net, np.asarray(x, dtype=np.float64).reshape(-1, 1), mode="eval")
    return out[:, 0]


def input_gradient(critic: GpCritic, x_batch):
    x = np.asarray(x_batch, dtype=np.float64).reshape(-1, 1)
    return neural.input_gradient(critic.net, x)[:, 0]


def gp_loss_and_grads(critic: GpCritic, real_batch, fake_batch, lam=10.0, rng=None, eps=None):
    """Loss ``-(mean f(real) - mean f(fake)) + lam * mean((|f'(x_hat)| - 1)^2)``.

    ``x_hat = eps * real + (1 - eps) * fake`` with one uniform ``eps`` per
    pair, drawn from ``rng`` unless given explicitly. Returns
    ``(GpLossReport, param_grads)``; the gradients include the exact
    second-order contribution of the penalty.
    """
    real = np.asarray(real_batch, dtype=np.float64).ravel()
    fake = np.asarray(fake_batch, dtype=np.float64).ravel()
    if real.size == 0 or fake.size == 0:
        raise ValueError("both batches must be nonempty")
    n = min(real.size, fake.size)
    real, fake = real[:n], fake[:n]
    if eps is None:
        eps = rng.uniform(size=n)
    eps = np.asarray(eps, dtype=np.float64).ravel()
    if eps.size != n:
        raise ValueError(f"need {n} interpolation weights, got {eps.size}")
    interp = eps * real + (1.0 - eps) * fake

    net = critic.net
    x = np.concatenate([real, fake]).reshape(-1, 1)
    out, cache = neural.forward(net, x, mode="eval")
    f_real, f_fake = out[:n, 0], out[n:, 0]
    w_dist = f_real.mean() - f_fake.mean()
    grad_out = np.concatenate([np.full(n, -1.0 / n), np.full(n, 1.0 / n)]).reshape(-1, 1)
    grads, _ = neural.backward(net, cache, grad_out)

    _, icache = neural.forward(net, interp.reshape(-1, 1), mode="eval")
    # d/dg of lam * mean((|g| - 1)^2)
    g, pgrads = neural.input_gradient_param_grads(
        net, icache, lambda g: lam * 2.0 * (np.abs(g) - 1.0) * np.sign(g) / n
    )
    penalty = float(np.mean((np.abs(g) - 1.0) ** 2))
    grads = [a + b for a, b in zip(grads, pgrads)]

    report = GpLossReport(
        wasserstein=float(w_dist),
        penalty=penalty,
        total_loss=float(-w_dist + lam * penalty),
    )
    return report, grads


def critic_step(critic: GpCritic, real_batch, fake_batch, lam, rng):
    report, grads = gp_loss_and_grads(critic, real_batch, fake_batch, lam, rng)
    neural.adam_step(critic.net.params(), grads, critic.adam_state)
    return report
