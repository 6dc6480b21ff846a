"""Series-reparameterized critic: a linear combination of bounded features.

The critic value is ``A @ features(x)``; its slope anywhere on [-1, 1] is at
most ``sum(|A| * b)`` where ``b`` holds the per-feature derivative bounds.
That weighted l1 norm is used as a convex stand-in for the Lipschitz
constant, enforced through a one-sided quadratic penalty.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import SeriesBasis, derivative_bounds, eval_feature_derivatives, eval_features
from .neural import AdamState, adam_step


@dataclass
class SummableCritic:
    basis: SeriesBasis
    coeffs: np.ndarray = None
    adam_state: AdamState = field(default_factory=AdamState)

    def __post_init__(self):
        if self.coeffs is None:
            self.coeffs = np.zeros(self.basis.size)
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.basis.size,):
            raise ValueError(
                f"expected {self.basis.size} coefficients for {self.basis}, got {self.coeffs.shape}"
            )
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("coefficients must be finite")
        self.bounds = derivative_bounds(self.basis)


@dataclass
class CriticObjectiveReport:
    objective: float  # expectation gap under the critic
    surrogate: float  # weighted l1 norm of the coefficients
    penalty: float
    total_loss: float  # -objective + penalty


def critic_value(critic: SummableCritic, x):
    return eval_features(critic.basis, x) @ critic.coeffs


def critic_input_grad(critic: SummableCritic, x):
    """Derivative of the critic with respect to its input, per sample."""
    return eval_feature_derivatives(critic.basis, x) @ critic.coeffs


def lipschitz_surrogate(critic: SummableCritic) -> float:
    return float(np.abs(critic.coeffs) @ critic.bounds)


def feature_mean_diff(basis: SeriesBasis, real_batch, fake_batch) -> np.ndarray:
    """Mean feature vector of ``real_batch`` minus that of ``fake_batch``.

    For the Taylor basis this is the vector of raw-moment differences.
    """
    real = np.asarray(real_batch, dtype=np.float64).ravel()
    fake = np.asarray(fake_batch, dtype=np.float64).ravel()
    if real.size == 0 or fake.size == 0:
        raise ValueError("both batches must be nonempty")
    return eval_features(basis, real).mean(axis=0) - eval_features(basis, fake).mean(axis=0)


def penalized_loss_and_grad(coeffs, c, b, lam):
    """Loss ``-A.c + lam * max(0, sum(b|A|) - 1)**2`` and its (sub)gradient.

    Works on a single coefficient vector or on a stack of them (last axis is
    the feature axis). The subgradient of |A| at 0 is taken as 0.
    """
    objective = np.sum(coeffs * c, axis=-1)
    surrogate = np.sum(np.abs(coeffs) * b, axis=-1)
    excess = np.maximum(0.0, surrogate - 1.0)
    penalty = lam * excess ** 2
    grad = -c + (2.0 * lam * excess)[..., None] * b * np.sign(coeffs)
    return objective, surrogate, penalty, grad


def critic_loss_and_grad(critic: SummableCritic, real_batch, fake_batch, lam=10.0):
    if lam < 0:
        raise ValueError("penalty weight must be nonnegative")
    c = feature_mean_diff(critic.basis, real_batch, fake_batch)
    return critic_loss_and_grad_from_diff(critic, c, lam)


def critic_loss_and_grad_from_diff(critic: SummableCritic, c, lam=10.0):
    """Same as :func:`critic_loss_and_grad` given a precomputed feature-mean gap."""
    objective, surrogate, penalty, grad = penalized_loss_and_grad(
        critic.coeffs, c, critic.bounds, lam
    )
    report = CriticObjectiveReport(
        objective=float(objective),
        surrogate=float(surrogate),
        penalty=float(penalty),
        total_loss=float(penalty - objective),
    )
    return report, grad


def optimal_critic_closed_form(c, b):
    """Exact maximizer of ``A.c`` subject to ``sum(b|A|) <= 1``.

    The feasible set is a weighted cross-polytope, so a linear objective peaks
    at the vertex with the largest ``|c_k| / b_k``. Ties go to the lowest index.
    Returns ``(A_star, value)``.
    """
    c = np.asarray(c, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if c.shape != b.shape or c.ndim != 1:
        raise ValueError(f"c and b must be 1-D of equal length, got {c.shape} and {b.shape}")
    if not np.all(b > 0):
        raise ValueError("all derivative bounds must be positive")
    ratios = np.abs(c) / b
    k = int(np.argmax(ratios))
    a_star = np.zeros_like(c)
    a_star[k] = np.sign(c[k]) / b[k]
    return a_star, float(ratios[k])


def rescale_to_feasible(coeffs, b):
    """Shrink coefficients onto ``sum(b|A|) <= 1`` if they lie outside it.

    The penalty only pushes the surrogate towards 1 from above, so trained
    coefficients sit slightly outside the set; dividing by the surrogate gives
    the feasible critic with the same direction.
    """
    surrogate = np.sum(np.abs(coeffs) * b, axis=-1, keepdims=True)
    return coeffs / np.maximum(1.0, surrogate)


def critic_step(critic: SummableCritic, c, lam=10.0, scaled=True):
    """One Adam update of the coefficients against the feature gap ``c``.

    With ``scaled`` the optimizer state lives on ``bounds * coeffs``, where
    the constraint is a plain l1 ball and every term costs the same per unit
    of step. Raw coefficients let high-order terms (bounds up to N*pi) soak up
    the Lipschitz budget with minibatch noise.
    """
    report, grad = critic_loss_and_grad_from_diff(critic, c, lam)
    if scaled:
        u = critic.coeffs * critic.bounds
        adam_step([u], [grad / critic.bounds], critic.adam_state)
        np.divide(u, critic.bounds, out=critic.coeffs)
    else:
        adam_step([critic.coeffs], [grad], critic.adam_state)
    return report
