"""Gradient training of voting weights on differentiable certificates.

The primary objective is the stochastic-margin certificate: the Beta-CDF
expected margin loss pushed through the inverted small-kl, plus the
de-randomisation penalty.  Dirichlet parameters are kept positive through a
softplus reparameterisation; gradients are assembled by the chain rule
through the incomplete-beta partials, the digamma/trigamma terms of the
Dirichlet KL, and implicit differentiation of the kl inverse.

The first-order (fo) and factor-two (f2) baseline objectives share the same
optimiser so certificates can be compared across training criteria.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import bounds, numkern as nk
from .bounds import BoundResult, BoundSpec, SearchConfig
from .votes import PredictionMatrix, WeightPosterior

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "objective",
    "fo_objective",
    "f2_objective",
    "EpochRecord",
    "RunResult",
    "TrainResult",
    "TrainingError",
    "train_posterior",
    "OBJECTIVES",
]

OBJECTIVES = ("stochastic_margin", "fo", "f2")

_ALPHA_SHIFT = 1e-6


class TrainingError(RuntimeError):
    """Every candidate run diverged."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation hyperparameters; defaults follow the reference protocol:
    Adam(0.9, 0.999) at learning rate 0.1, batches of 100, up to 100 epochs
    with 25-epoch early stopping and a /10 plateau schedule with patience 2,
    uniform initial weights at concentration K_init = 2."""

    learning_rate: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 100
    max_epochs: int = 100
    early_stop_patience: int = 25
    lr_reduce_factor: float = 10.0
    lr_reduce_patience: int = 2
    min_lr: float = 1e-6
    seed: int = 0
    gamma_candidates: tuple = (0.005, 0.01, 0.025, 0.05, 0.1)
    K_init: float = 2.0
    delta: float = 0.05

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")
        if not all(0.0 < g < 0.5 for g in self.gamma_candidates):
            raise ValueError("gamma candidates must lie in (0, 1/2)")
        if self.K_init <= 0.0 or self.learning_rate <= 0.0:
            raise ValueError("K_init and learning_rate must be positive")


@dataclass(frozen=True)
class AdamState:
    params: np.ndarray
    step: int
    exp_avg: np.ndarray
    exp_avg_sq: np.ndarray

    @staticmethod
    def init(params: np.ndarray) -> "AdamState":
        p = np.array(params, dtype=float)
        return AdamState(p, 0, np.zeros_like(p), np.zeros_like(p))


def adam_step(
    state: AdamState,
    gradient: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update; pure (returns a new state)."""
    g = np.asarray(gradient, dtype=float)
    t = state.step + 1
    m = beta1 * state.exp_avg + (1.0 - beta1) * g
    v = beta2 * state.exp_avg_sq + (1.0 - beta2) * g * g
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    params = state.params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(params, t, m, v)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _inv_softplus(y: float) -> float:
    # ln(e^y - 1), stable for small y
    return y + math.log(-math.expm1(-y)) if y > 0 else math.log(math.expm1(y))


def alpha_from(omega: np.ndarray) -> np.ndarray:
    """Positive Dirichlet parameters from unconstrained ones."""
    return _softplus(omega) + _ALPHA_SHIFT


def uniform_omega(num_voters: int, K_init: float) -> np.ndarray:
    """Unconstrained parameters giving uniform theta at concentration K_init."""
    return np.full(num_voters, _inv_softplus(K_init / num_voters - _ALPHA_SHIFT))


def _dirichlet_complexity(alpha: np.ndarray, prior: np.ndarray, spec: BoundSpec):
    """(c, dc/dalpha) for c = (D(alpha, prior) + ln(2 sqrt(m)/delta)) / m.

    The digamma terms of the KL cancel in the gradient, leaving the
    trigamma form (alpha_i - beta_i) psi'(alpha_i) - psi'(alpha_0)(alpha_0 - beta_0).
    """
    a0 = float(alpha.sum())
    dkl = nk.dirichlet_kl(alpha, prior)
    c = max(0.0, dkl + spec.log_confidence()) / spec.m
    grad = (
        (alpha - prior) * nk.trigamma(alpha)
        - nk.trigamma(a0) * (a0 - float(prior.sum()))
    ) / spec.m
    return c, grad


def _kl_inv_with_grad(u: float, c: float):
    """kl_inv value plus guarded implicit-gradient pair."""
    u_c = min(max(u, 1e-12), 1.0 - 1e-12)
    v = nk.kl_inv(u_c, c)
    if v >= 1.0 or v - u_c <= 1e-15:
        return v, 0.0, 0.0
    dv_du, dv_dc = nk.kl_inv_grad(u_c, c + 1e-12)
    return v, dv_du, dv_dc


def _beta_loss_and_grad(corr, wrong, a_y, a_n, gamma: float, num_voters: int):
    """Batch-mean Beta-CDF margin loss and its alpha gradient.

    Degenerate rows (no correct or no erring mass) contribute the constants
    1 and 0, so only the regular rows enter the incomplete-beta partials.
    """
    regular = (a_y > 0.0) & (a_n > 0.0)
    terms = np.where(a_y <= 0.0, 1.0, 0.0)
    grad = np.zeros(num_voters)
    if regular.any():
        val, d_a, d_b = nk.reg_inc_beta_with_grad(
            0.5 + gamma, a_y[regular], a_n[regular]
        )
        terms[regular] = val
        grad = (corr[regular].T @ d_a + wrong[regular].T @ d_b) / a_y.size
    return float(terms.mean()), grad


def objective(
    P: PredictionMatrix,
    omega: np.ndarray,
    batch_rows,
    gamma: float,
    spec: BoundSpec,
):
    """Stochastic-margin training objective and its gradient in omega.

    The empirical term is the batch mean of I_{1/2+gamma}(a_y, a_wrong); the
    complexity term always uses the full-sample m.  Matches central finite
    differences to ~1e-4 relative away from the kl-inverse singularity.
    """
    omega = np.asarray(omega, dtype=float)
    alpha = alpha_from(omega)
    prior = spec.prior(alpha.size)
    rows = np.arange(P.num_examples) if batch_rows is None else np.asarray(batch_rows)
    if rows.size == 0:
        raise ValueError("batch must be non-empty")
    corr = P.correct_mask[rows]
    wrong = ~corr
    a_y = corr @ alpha
    a_n = wrong @ alpha
    u, dE = _beta_loss_and_grad(corr, wrong, a_y, a_n, gamma, alpha.size)

    c, dc = _dirichlet_complexity(alpha, prior, spec)
    v, dv_du, dv_dc = _kl_inv_with_grad(u, c)

    a0 = float(alpha.sum())
    eps = math.exp(-4.0 * (a0 + 1.0) * gamma * gamma)
    d_eps = -4.0 * gamma * gamma * eps

    grad_alpha = dv_du * dE + dv_dc * dc + d_eps
    return v + eps, grad_alpha * _sigmoid(omega)


def f2_objective(P: PredictionMatrix, omega: np.ndarray, batch_rows, spec: BoundSpec):
    """Factor-two objective: 2 * kl_inv(expected 0-1 Beta loss, complexity)."""
    omega = np.asarray(omega, dtype=float)
    alpha = alpha_from(omega)
    prior = spec.prior(alpha.size)
    rows = np.arange(P.num_examples) if batch_rows is None else np.asarray(batch_rows)
    if rows.size == 0:
        raise ValueError("batch must be non-empty")
    corr = P.correct_mask[rows]
    wrong = ~corr
    a_y = corr @ alpha
    a_n = wrong @ alpha
    u, dE = _beta_loss_and_grad(corr, wrong, a_y, a_n, 0.0, alpha.size)

    c, dc = _dirichlet_complexity(alpha, prior, spec)
    v, dv_du, dv_dc = _kl_inv_with_grad(u, c)
    grad_alpha = 2.0 * (dv_du * dE + dv_dc * dc)
    return 2.0 * v, grad_alpha * _sigmoid(omega)


def _softmax(omega: np.ndarray) -> np.ndarray:
    z = np.exp(omega - omega.max())
    return z / z.sum()


def fo_objective(P: PredictionMatrix, omega: np.ndarray, batch_rows, spec: BoundSpec):
    """First-order objective: 2 * kl_inv(batch Gibbs loss, categorical complexity).

    Weights are parameterised by softmax, so the gradient pulls back through
    the simplex Jacobian.
    """
    omega = np.asarray(omega, dtype=float)
    theta = _softmax(omega)
    rows = np.arange(P.num_examples) if batch_rows is None else np.asarray(batch_rows)
    if rows.size == 0:
        raise ValueError("batch must be non-empty")
    err_rates = (~P.correct_mask[rows]).mean(axis=0)
    u = float(err_rates @ theta)

    d = theta.size
    c = (nk.categorical_kl_uniform(theta) + spec.log_confidence()) / spec.m
    v, dv_du, dv_dc = _kl_inv_with_grad(u, c)
    dc_dtheta = (np.log(theta) + 1.0 + math.log(d)) / spec.m
    grad_theta = 2.0 * (dv_du * err_rates + dv_dc * dc_dtheta)
    grad_omega = theta * (grad_theta - float(theta @ grad_theta))
    return 2.0 * v, grad_omega


@dataclass(frozen=True)
class EpochRecord:
    gamma: float | None
    epoch: int
    objective: float
    bound: float
    K: float
    lr: float


@dataclass(frozen=True)
class RunResult:
    gamma: float | None
    posterior: WeightPosterior | None
    history: tuple
    best_bound: float
    failed: bool = False


@dataclass(frozen=True)
class TrainResult:
    posterior: WeightPosterior
    certificate: BoundResult
    objective: str
    runs: tuple

    @property
    def history(self) -> tuple:
        return tuple(rec for run in self.runs for rec in run.history)


def _posterior_from(omega: np.ndarray, kind: str) -> WeightPosterior:
    if kind == "fo":
        return WeightPosterior(_softmax(omega), 1.0)
    alpha = alpha_from(omega)
    return WeightPosterior(alpha / alpha.sum(), float(alpha.sum()))


def _full_bound_value(P, omega, gamma, spec, kind) -> float:
    if kind == "fo":
        return fo_objective(P, omega, None, spec)[0]
    if kind == "f2":
        return f2_objective(P, omega, None, spec)[0]
    return objective(P, omega, None, gamma, spec)[0]


def _run_single(
    P: PredictionMatrix,
    cfg: TrainConfig,
    spec: BoundSpec,
    kind: str,
    gamma: float | None,
    run_index: int,
) -> RunResult:
    m = P.num_examples
    if kind == "fo":
        omega = np.zeros(P.num_voters)
    else:
        omega = uniform_omega(P.num_voters, cfg.K_init)
    state = AdamState.init(omega)
    rng = np.random.default_rng((cfg.seed, run_index))

    def batch_step(params, rows):
        if kind == "fo":
            return fo_objective(P, params, rows, spec)
        if kind == "f2":
            return f2_objective(P, params, rows, spec)
        return objective(P, params, rows, gamma, spec)

    def current_K(params) -> float:
        return 1.0 if kind == "fo" else float(alpha_from(params).sum())

    lr = cfg.learning_rate
    bound0 = _full_bound_value(P, state.params, gamma, spec, kind)
    if not math.isfinite(bound0):
        return RunResult(gamma, None, (), math.inf, failed=True)
    history = [EpochRecord(gamma, 0, bound0, bound0, current_K(state.params), lr)]
    best_bound = bound0
    best_params = state.params.copy()
    stall_stop = 0
    stall_lr = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(m)
        epoch_vals = []
        diverged = False
        for start in range(0, m, cfg.batch_size):
            rows = perm[start : start + cfg.batch_size]
            val, grad = batch_step(state.params, rows)
            if not math.isfinite(val) or not np.all(np.isfinite(grad)):
                diverged = True
                break
            epoch_vals.append(val)
            state = adam_step(
                state, grad, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
            )
        if diverged:
            return RunResult(gamma, None, tuple(history), best_bound, failed=True)
        bound = _full_bound_value(P, state.params, gamma, spec, kind)
        if not math.isfinite(bound):
            return RunResult(gamma, None, tuple(history), best_bound, failed=True)
        history.append(
            EpochRecord(
                gamma, epoch, float(np.mean(epoch_vals)), bound,
                current_K(state.params), lr,
            )
        )
        if bound < best_bound:
            best_bound = bound
            best_params = state.params.copy()
            stall_stop = 0
            stall_lr = 0
        else:
            stall_stop += 1
            stall_lr += 1
        if stall_lr >= cfg.lr_reduce_patience:
            lr /= cfg.lr_reduce_factor
            stall_lr = 0
            if lr < cfg.min_lr:
                break
        if stall_stop >= cfg.early_stop_patience:
            break
    return RunResult(gamma, _posterior_from(best_params, kind), tuple(history), best_bound)


def train_posterior(
    P: PredictionMatrix,
    cfg: TrainConfig,
    spec: BoundSpec,
    objective_kind: str = "stochastic_margin",
    search_cfg: SearchConfig | None = None,
) -> TrainResult:
    """Run one minibatch-Adam fit per margin candidate and keep the winner.

    Early stopping and the plateau schedule track the full-sample bound, and
    the parameters from the best epoch are kept.  The final posterior is
    selected by its deterministic-margin certificate computed at
    delta / (#candidates), so the candidate union is accounted for; the
    certificate returned is never the minibatch surrogate.
    """
    if objective_kind not in OBJECTIVES:
        raise ValueError(f"unknown objective: {objective_kind!r}")
    gammas = (
        list(cfg.gamma_candidates)
        if objective_kind == "stochastic_margin"
        else [None]
    )
    runs = [
        _run_single(P, cfg, spec, objective_kind, g, idx)
        for idx, g in enumerate(gammas)
    ]
    survivors = [r for r in runs if not r.failed]
    if not survivors:
        raise TrainingError("all candidate runs produced non-finite objectives")
    spec_sel = replace(spec, delta=spec.delta / len(gammas))
    best_pair = None
    for run in survivors:
        cert = bounds.certify(P, run.posterior, spec_sel, "dirichlet_margin", search_cfg)
        if best_pair is None or cert.value < best_pair[1].value:
            best_pair = (run, cert)
    run, cert = best_pair
    return TrainResult(run.posterior, cert, objective_kind, tuple(runs))
