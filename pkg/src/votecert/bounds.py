"""Risk certificates for weighted majority votes and the (gamma, K) search.

Two layers per certificate: a ``*_from_loss`` formula that takes precomputed
empirical terms (used by the synthetic comparison sweeps and the search), and
a ``*_bound`` wrapper that evaluates the losses on a PredictionMatrix.  All
certified values are clipped to 1 and carry their additive components so a
result can be reconstructed and audited.

Bound identifiers:

==================  =============================================================
dirichlet_margin    margin certificate for the deterministic vote, de-randomised
                    through a Dirichlet proxy with concentration K
stochastic_margin   differentiable variant using the Beta-CDF expected margin loss
gz                  kth-margin bound, holding simultaneously over margins
bgplus              fixed-margin bound via categorical replication
bg                  closed-form relaxation of bgplus (strictly looser)
bgplusplus          replication bound minimised over the replication count T
fo / so / bin       first-order, second-order and binomial Gibbs baselines
f2                  Dirichlet factor-two baseline
==================  =============================================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import numkern as nk
from . import votes
from .votes import PredictionMatrix, WeightPosterior

__all__ = [
    "BoundSpec",
    "BoundResult",
    "SearchConfig",
    "InapplicableMarginError",
    "BOUND_IDS",
    "dirichlet_margin_from_loss",
    "dirichlet_margin_bound",
    "stochastic_margin_from_loss",
    "stochastic_margin_bound",
    "gz_from_loss",
    "gz_bound",
    "bgplus_from_loss",
    "bgplus_bound",
    "bg_original_from_loss",
    "bg_original_bound",
    "bgplusplus_from_loss",
    "bgplusplus_bound",
    "fo_bound",
    "so_bound",
    "bin_bound",
    "f2_from_loss",
    "f2_bound",
    "dirichlet_margin_best_K",
    "certify",
    "reconstruct_value",
]

BOUND_IDS = (
    "dirichlet_margin",
    "stochastic_margin",
    "gz",
    "bgplus",
    "bg",
    "bgplusplus",
    "fo",
    "so",
    "bin",
    "f2",
)

# Multiplier in front of the inverted small-kl, per bound family.
_KL_FACTOR = {
    "dirichlet_margin": 1.0,
    "stochastic_margin": 1.0,
    "gz": 1.0,
    "bgplus": 1.0,
    "bgplusplus": 1.0,
    "fo": 2.0,
    "so": 4.0,
    "bin": 2.0,
    "f2": 2.0,
}

_THETA_FLOOR = 1e-12


class InapplicableMarginError(ValueError):
    """The requested margin is outside a bound's validity region."""


@dataclass(frozen=True)
class BoundSpec:
    """Sample size, confidence and prior shared by every certificate."""

    m: int
    delta: float
    prior_beta: np.ndarray | None = None
    num_classes: int = 2

    def __post_init__(self):
        if int(self.m) < 1:
            raise ValueError("m must be >= 1")
        object.__setattr__(self, "m", int(self.m))
        if not 0.0 < float(self.delta) < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        object.__setattr__(self, "delta", float(self.delta))
        if self.prior_beta is not None:
            beta = np.asarray(self.prior_beta, dtype=float)
            if np.any(beta <= 0.0) or not np.all(np.isfinite(beta)):
                raise ValueError("prior_beta must be positive and finite")
            beta.setflags(write=False)
            object.__setattr__(self, "prior_beta", beta)

    def prior(self, num_voters: int) -> np.ndarray:
        if self.prior_beta is None:
            return np.ones(num_voters)
        if self.prior_beta.size != num_voters:
            raise ValueError("prior_beta length must equal the number of voters")
        return self.prior_beta

    def log_confidence(self) -> float:
        """ln(2 sqrt(m) / delta), the standard confidence term."""
        return math.log(2.0 * math.sqrt(self.m) / self.delta)


@dataclass(frozen=True)
class BoundResult:
    """Certified risk in [0, 1] plus the winning knobs and audit components."""

    value: float
    gamma_star: float | None
    K_star: float | None
    T_star: int | None
    empirical_term: float
    complexity_term: float
    derandomisation_term: float
    flags: tuple = ()

    def with_flags(self, extra) -> "BoundResult":
        merged = tuple(sorted(set(self.flags) | set(extra)))
        return replace(self, flags=merged)


def reconstruct_value(bound_id: str, r: BoundResult) -> float:
    """Recompute a certified value from its stored components."""
    if bound_id == "bg":
        raw = (
            r.empirical_term
            + math.sqrt(r.complexity_term * r.empirical_term)
            + r.derandomisation_term
        )
        return min(1.0, raw)
    factor = _KL_FACTOR[bound_id]
    return min(
        1.0,
        factor * nk.kl_inv(r.empirical_term, r.complexity_term)
        + r.derandomisation_term,
    )


def _floor_theta(theta) -> tuple[np.ndarray, tuple]:
    """Clamp zero weights before forming Dirichlet parameters.

    Trained posteriors can hit the simplex boundary numerically, where the
    Dirichlet KL diverges; flooring keeps the certificate finite and is
    flagged for audit.
    """
    th = np.asarray(theta, dtype=float)
    if float(th.min()) < _THETA_FLOOR:
        th = np.maximum(th, _THETA_FLOOR)
        th = th / th.sum()
        return th, ("theta_floored",)
    return th, ()


def _vacuous(gamma, K, empirical, flags) -> BoundResult:
    return BoundResult(
        value=1.0,
        gamma_star=gamma,
        K_star=K,
        T_star=None,
        empirical_term=empirical,
        complexity_term=math.inf,
        derandomisation_term=0.0,
        flags=tuple(sorted(set(flags) | {"infinite_complexity", "vacuous"})),
    )


def dirichlet_margin_from_loss(
    l_gamma: float, theta, K: float, gamma: float, spec: BoundSpec
) -> BoundResult:
    """Deterministic-vote margin certificate at a fixed margin gamma.

    value = min(1, kl_inv(min(1, L_gamma + eps), (D(K theta, beta) + ln(2 sqrt(m)/delta))/m) + eps)
    with the de-randomisation penalty eps = exp(-(K + 1) gamma^2).
    """
    if gamma <= 0.0 or K <= 0.0:
        raise ValueError("gamma and K must be positive")
    th, flags = _floor_theta(theta)
    eps = math.exp(-(K + 1.0) * gamma * gamma)
    u = min(1.0, float(l_gamma) + eps)
    dkl = nk.dirichlet_kl(K * th, spec.prior(th.size))
    if not math.isfinite(dkl):
        return _vacuous(gamma, K, u, flags)
    comp = max(0.0, dkl + spec.log_confidence()) / spec.m
    value = min(1.0, nk.kl_inv(u, comp) + eps)
    return BoundResult(value, gamma, K, None, u, comp, eps, flags)


def dirichlet_margin_bound(
    P: PredictionMatrix, wp: WeightPosterior, gamma: float, spec: BoundSpec
) -> BoundResult:
    l_gamma = votes.empirical_margin_loss(P, wp, gamma)
    return dirichlet_margin_from_loss(l_gamma, wp.theta, wp.K, gamma, spec)


def stochastic_margin_from_loss(
    expected_loss: float, theta, K: float, gamma: float, spec: BoundSpec
) -> BoundResult:
    """Differentiable variant; empirical term is the Beta-CDF expected loss."""
    if gamma <= 0.0 or K <= 0.0:
        raise ValueError("gamma and K must be positive")
    th, flags = _floor_theta(theta)
    eps = math.exp(-4.0 * (K + 1.0) * gamma * gamma)
    u = min(1.0, float(expected_loss))
    dkl = nk.dirichlet_kl(K * th, spec.prior(th.size))
    if not math.isfinite(dkl):
        return _vacuous(gamma, K, u, flags)
    comp = max(0.0, dkl + spec.log_confidence()) / spec.m
    value = min(1.0, nk.kl_inv(u, comp) + eps)
    return BoundResult(value, gamma, K, None, u, comp, eps, flags)


def stochastic_margin_bound(
    P: PredictionMatrix, wp: WeightPosterior, gamma: float, spec: BoundSpec
) -> BoundResult:
    th, _ = _floor_theta(wp.theta)
    expected = votes.expected_margin_loss_beta(P, wp.K * th, gamma)
    return stochastic_margin_from_loss(expected, wp.theta, wp.K, gamma, spec)


def gz_from_loss(
    l_gamma: float, num_voters: int, gamma: float, spec: BoundSpec
) -> BoundResult:
    """Margin bound holding simultaneously for all gamma > sqrt(2/d), d >= 3."""
    d = int(num_voters)
    if d < 3:
        raise InapplicableMarginError("needs at least 3 voters")
    if gamma <= math.sqrt(2.0 / d):
        raise InapplicableMarginError("gamma must exceed sqrt(2/d)")
    m = spec.m
    log_d = math.log(d)
    comp = (
        2.0 * math.log(2.0 * d) / (gamma * gamma) * math.log(2.0 * m * m / log_d)
        + math.log(d * m / spec.delta)
    ) / m
    tail = log_d / m
    u = float(l_gamma)
    value = min(1.0, nk.kl_inv(u, comp) + tail)
    return BoundResult(value, gamma, None, None, u, comp, tail)


def gz_bound(P: PredictionMatrix, theta, gamma: float, spec: BoundSpec) -> BoundResult:
    l_gamma = votes.empirical_margin_loss(P, theta, gamma)
    return gz_from_loss(l_gamma, P.num_voters, gamma, spec)


def _bgplus_T(gamma: float, m: int) -> int:
    return max(1, math.ceil(2.0 * math.log(m) / (gamma * gamma)))


def bgplus_from_loss(
    l_gamma: float, num_voters: int, gamma: float, spec: BoundSpec
) -> BoundResult:
    """Sharpened fixed-margin bound; T = ceil(2 ln(m) / gamma^2) replications.

    The sampling penalty exp(-T gamma^2 / 2) <= 1/m by construction, so both
    additive corrections appear as 1/m.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    m = spec.m
    T = _bgplus_T(gamma, m)
    u = min(1.0, float(l_gamma) + 1.0 / m)
    comp = (T * math.log(num_voters) + spec.log_confidence()) / m
    value = min(1.0, nk.kl_inv(u, comp) + 1.0 / m)
    return BoundResult(value, gamma, None, T, u, comp, 1.0 / m)


def bgplus_bound(
    P: PredictionMatrix, theta, gamma: float, spec: BoundSpec
) -> BoundResult:
    l_gamma = votes.empirical_margin_loss(P, theta, gamma)
    return bgplus_from_loss(l_gamma, P.num_voters, gamma, spec)


def bg_original_from_loss(
    l_gamma: float, num_voters: int, gamma: float, spec: BoundSpec
) -> BoundResult:
    """Original closed-form relaxation; strictly looser than bgplus."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    m = spec.m
    C = 2.0 * math.log(2.0 / spec.delta) + 4.75 * math.log(num_voters) * math.log(
        m
    ) / (gamma * gamma)
    u = float(l_gamma)
    comp = C / m
    tail = (C + math.sqrt(C) + 2.0) / m
    value = min(1.0, u + math.sqrt(comp * u) + tail)
    return BoundResult(value, gamma, None, None, u, comp, tail)


def bg_original_bound(
    P: PredictionMatrix, theta, gamma: float, spec: BoundSpec
) -> BoundResult:
    l_gamma = votes.empirical_margin_loss(P, theta, gamma)
    return bg_original_from_loss(l_gamma, P.num_voters, gamma, spec)


def _minimize_over_int(f, t_max: int, forced=()):
    """Deterministic near-exhaustive minimisation of f over {1..t_max}.

    Evaluates a geometric ladder plus any forced candidates, then refines
    between the neighbours of the best ladder point by integer trisection.
    Exact for the unimodal profiles these bounds produce; small ranges are
    scanned exhaustively.
    """
    cache: dict[int, float] = {}

    def val(t: int) -> float:
        if t not in cache:
            cache[t] = f(t)
        return cache[t]

    if t_max <= 512:
        best_t = min(range(1, t_max + 1), key=val)
        return best_t, cache[best_t]

    ladder = [1]
    t = 2
    while t < t_max:
        ladder.append(t)
        t *= 2
    ladder.append(t_max)
    for t in forced:
        if 1 <= t <= t_max:
            ladder.append(int(t))
    ladder = sorted(set(ladder))
    best_idx = min(range(len(ladder)), key=lambda i: val(ladder[i]))
    lo = ladder[best_idx - 1] if best_idx > 0 else 1
    hi = ladder[best_idx + 1] if best_idx + 1 < len(ladder) else t_max
    while hi - lo > 3:
        m1 = lo + (hi - lo) // 3
        m2 = hi - (hi - lo) // 3
        if val(m1) <= val(m2):
            hi = m2
        else:
            lo = m1
    for t in range(lo, hi + 1):
        val(t)
    best_t = min(cache, key=lambda t: (cache[t], t))
    return best_t, cache[best_t]


def bgplusplus_from_loss(
    l_gamma: float,
    theta,
    gamma: float,
    spec: BoundSpec,
    T_max: int | None = None,
) -> BoundResult:
    """Variant minimised over the replication count T in {1..T_max}.

    T_max defaults to 4x the bgplus heuristic so that choice is always in
    the search range.  The complexity charges T * (ln d - H(theta)), which
    vanishes for uniform weights.
    """
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    th = np.asarray(theta, dtype=float)
    m = spec.m
    t_plus = _bgplus_T(gamma, m)
    if T_max is None:
        T_max = 4 * t_plus
    T_max = max(1, int(T_max))
    kl_unif = nk.categorical_kl_uniform(th)
    log_term = math.log(m / spec.delta)
    u0 = float(l_gamma)

    def candidate(T: int) -> tuple[float, float, float, float]:
        eps = math.exp(-0.5 * T * gamma * gamma)
        u = min(1.0, u0 + eps)
        comp = (T * kl_unif + log_term) / m
        return min(1.0, nk.kl_inv(u, comp) + eps), u, comp, eps

    T_star, _ = _minimize_over_int(
        lambda t: candidate(t)[0], T_max, forced=(t_plus,)
    )
    value, u, comp, eps = candidate(T_star)
    return BoundResult(value, gamma, None, T_star, u, comp, eps)


def bgplusplus_bound(
    P: PredictionMatrix,
    theta,
    gamma: float,
    spec: BoundSpec,
    T_max: int | None = None,
) -> BoundResult:
    l_gamma = votes.empirical_margin_loss(P, theta, gamma)
    return bgplusplus_from_loss(l_gamma, theta, gamma, spec, T_max)


def fo_bound(P: PredictionMatrix, theta, spec: BoundSpec) -> BoundResult:
    """First-order Gibbs baseline: 2 * kl_inv(gibbs loss, complexity)."""
    th = np.asarray(theta, dtype=float)
    u = votes.gibbs_loss(P, th)
    comp = (nk.categorical_kl_uniform(th) + spec.log_confidence()) / spec.m
    value = min(1.0, 2.0 * nk.kl_inv(u, comp))
    return BoundResult(value, None, None, None, u, comp, 0.0)


def so_bound(P: PredictionMatrix, theta, spec: BoundSpec) -> BoundResult:
    """Second-order (tandem loss) baseline: 4 * kl_inv(tandem, complexity)."""
    th = np.asarray(theta, dtype=float)
    u = votes.tandem_loss(P, th)
    comp = (2.0 * nk.categorical_kl_uniform(th) + spec.log_confidence()) / spec.m
    value = min(1.0, 4.0 * nk.kl_inv(u, comp))
    return BoundResult(value, None, None, None, u, comp, 0.0)


def bin_bound(
    P: PredictionMatrix, theta, spec: BoundSpec, N: int = 100
) -> BoundResult:
    """Binomial baseline over N categorical draws; k0 = ceil(N/2)."""
    th = np.asarray(theta, dtype=float)
    u = votes.binomial_loss(P, th, N)
    comp = (N * nk.categorical_kl_uniform(th) + spec.log_confidence()) / spec.m
    value = min(1.0, 2.0 * nk.kl_inv(u, comp))
    return BoundResult(value, None, None, None, u, comp, 0.0)


def f2_from_loss(expected_loss: float, theta, K: float, spec: BoundSpec) -> BoundResult:
    """Dirichlet factor-two baseline at a given concentration K."""
    if K <= 0.0:
        raise ValueError("K must be positive")
    th, flags = _floor_theta(theta)
    u = min(1.0, float(expected_loss))
    dkl = nk.dirichlet_kl(K * th, spec.prior(th.size))
    if not math.isfinite(dkl):
        return _vacuous(None, K, u, flags)
    comp = max(0.0, dkl + spec.log_confidence()) / spec.m
    value = min(1.0, 2.0 * nk.kl_inv(u, comp))
    return BoundResult(value, None, K, None, u, comp, 0.0, flags)


def f2_bound(P: PredictionMatrix, wp: WeightPosterior, spec: BoundSpec) -> BoundResult:
    th, _ = _floor_theta(wp.theta)
    expected = votes.expected_zero_one_loss_beta(P, wp.K * th)
    return f2_from_loss(expected, wp.theta, wp.K, spec)


@dataclass(frozen=True)
class SearchConfig:
    """Grid and line-search knobs for certify()."""

    n_gamma: int = 1000
    gamma_min: float = 1e-4
    gamma_max: float = 0.5
    k_span: float = 2.0**16
    k_rel_tol: float = 1e-3
    k_max_iter: int = 200
    bin_voters: int = 100

    def __post_init__(self):
        if self.n_gamma < 1:
            raise ValueError("n_gamma must be >= 1")
        if not 0.0 < self.gamma_min <= self.gamma_max <= 0.5:
            raise ValueError("need 0 < gamma_min <= gamma_max <= 1/2")
        if self.k_span < 1.0:
            raise ValueError("k_span must be >= 1")

    def gamma_grid(self) -> np.ndarray:
        """Log-spaced (base 10) margins over [gamma_min, gamma_max)."""
        return np.logspace(
            math.log10(self.gamma_min),
            math.log10(self.gamma_max),
            self.n_gamma,
            endpoint=False,
        )


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

# Bounds whose statements fix the margin and therefore take the delta/N
# union correction when grid-searched.
_UNION_BOUNDS = frozenset(
    {"dirichlet_margin", "stochastic_margin", "bgplus", "bg", "bgplusplus"}
)


def _golden_min(f, lo: float, hi: float, tol: float, max_iter: int):
    """Golden-section minimum of f on [lo, hi]; returns the best point seen."""
    evals = [(lo, f(lo)), (hi, f(hi))]
    a, b = lo, hi
    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1, f2 = f(x1), f(x2)
    evals.append((x1, f1))
    evals.append((x2, f2))
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = f(x1)
            evals.append((x1, f1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = f(x2)
            evals.append((x2, f2))
    return min(evals, key=lambda t: (t[1], t[0]))


def _optimize_K(builder, K_init: float, cfg: SearchConfig) -> BoundResult:
    """Minimise builder(K).value over K in [K_init, K_init * k_span] on ln K."""
    if cfg.k_span == 1.0:
        return builder(K_init)
    lo, hi = math.log(K_init), math.log(K_init * cfg.k_span)
    x_best, _ = _golden_min(
        lambda x: builder(math.exp(x)).value, lo, hi, cfg.k_rel_tol, cfg.k_max_iter
    )
    return builder(math.exp(x_best))


def _dirichlet_margin_values(
    losses: np.ndarray,
    gammas: np.ndarray,
    K: np.ndarray,
    theta: np.ndarray,
    prior: np.ndarray,
    log_B_prior: float,
    spec: BoundSpec,
) -> np.ndarray:
    """Vectorised deterministic-margin bound over lanes of (loss, gamma, K)."""
    A = K[:, None] * theta[None, :]
    lnB_A = nk.log_gamma(A).sum(axis=1) - nk.log_gamma(K)
    centered = nk.digamma(A) - nk.digamma(K)[:, None]
    dkl = log_B_prior - lnB_A + ((A - prior[None, :]) * centered).sum(axis=1)
    eps = np.exp(-(K + 1.0) * gammas * gammas)
    u = np.minimum(1.0, losses + eps)
    comp = np.maximum(0.0, dkl + spec.log_confidence()) / spec.m
    return np.minimum(1.0, nk.kl_inv_vec(u, comp) + eps)


def _certify_dirichlet_margin(
    losses: np.ndarray,
    gammas: np.ndarray,
    theta: np.ndarray,
    K_init: float,
    spec: BoundSpec,
    cfg: SearchConfig,
) -> BoundResult:
    """Golden-section over ln K run in lockstep across every grid margin.

    All lanes share the same shrinking bracket length, so each golden step
    costs one vectorised bound evaluation; the best (value, K) per lane is
    tracked across every evaluation including the bracket endpoints.
    """
    prior = spec.prior(theta.size)
    log_B_prior = nk.log_multivariate_beta(prior)

    def values_at(x: np.ndarray) -> np.ndarray:
        return _dirichlet_margin_values(
            losses, gammas, np.exp(x), theta, prior, log_B_prior, spec
        )

    n = gammas.size
    lo = math.log(K_init)
    hi = math.log(K_init * cfg.k_span)
    best_val = values_at(np.full(n, lo))
    best_x = np.full(n, lo)

    def consider(x: np.ndarray, fx: np.ndarray):
        nonlocal best_val, best_x
        better = fx < best_val
        best_val = np.where(better, fx, best_val)
        best_x = np.where(better, x, best_x)

    if cfg.k_span > 1.0:
        x_hi = np.full(n, hi)
        consider(x_hi, values_at(x_hi))
        a = np.full(n, lo)
        b = np.full(n, hi)
        x1 = b - _INV_PHI * (b - a)
        x2 = a + _INV_PHI * (b - a)
        f1 = values_at(x1)
        f2 = values_at(x2)
        consider(x1, f1)
        consider(x2, f2)
        for _ in range(cfg.k_max_iter):
            # Bracket lengths stay identical across lanes, so one width test
            # and one fresh vectorised evaluation serve the whole grid.
            if float(b[0] - a[0]) <= cfg.k_rel_tol:
                break
            take_low = f1 <= f2
            a = np.where(take_low, a, x1)
            b = np.where(take_low, x2, b)
            x_keep = np.where(take_low, x1, x2)
            f_keep = np.where(take_low, f1, f2)
            x_new = np.where(take_low, b - _INV_PHI * (b - a), a + _INV_PHI * (b - a))
            f_new = values_at(x_new)
            consider(x_new, f_new)
            x1 = np.where(take_low, x_new, x_keep)
            f1 = np.where(take_low, f_new, f_keep)
            x2 = np.where(take_low, x_keep, x_new)
            f2 = np.where(take_low, f_keep, f_new)

    idx = int(np.lexsort((gammas, best_val))[0])
    return dirichlet_margin_from_loss(
        float(losses[idx]), theta, float(math.exp(best_x[idx])), float(gammas[idx]), spec
    )


def dirichlet_margin_best_K(
    l_gamma: float,
    theta,
    gamma: float,
    spec: BoundSpec,
    K_init: float = 1.0,
    search_cfg: SearchConfig | None = None,
) -> BoundResult:
    """Deterministic-margin bound at fixed gamma, K golden-sectioned over
    [K_init, K_init * k_span].  Formula-level: takes the margin loss value."""
    cfg = search_cfg or SearchConfig()
    th, flags = _floor_theta(theta)
    best = _certify_dirichlet_margin(
        np.array([float(l_gamma)]), np.array([float(gamma)]), th, K_init, spec, cfg
    )
    return _finalize(best, flags)


def certify(
    P: PredictionMatrix,
    wp_init: WeightPosterior,
    spec: BoundSpec,
    bound_id: str,
    search_cfg: SearchConfig | None = None,
) -> BoundResult:
    """Search the margin grid (and K where applicable) for the tightest bound.

    Fixed-margin bounds get the delta/N union correction over the grid; the
    gz bound holds simultaneously over margins and keeps the full delta, as
    do the margin-free baselines.  K is optimised per grid point by
    golden-section on ln K over [K_init, K_init * k_span].  Deterministic
    given (inputs, search_cfg); ties in the grid keep the smallest gamma.
    """
    if bound_id not in BOUND_IDS:
        raise ValueError(f"unknown bound id: {bound_id!r}")
    cfg = search_cfg or SearchConfig()
    theta = wp_init.theta
    th_floored, base_flags = _floor_theta(theta)

    if bound_id == "fo":
        return fo_bound(P, theta, spec)
    if bound_id == "so":
        return so_bound(P, theta, spec)
    if bound_id == "bin":
        return bin_bound(P, theta, spec, N=cfg.bin_voters)

    a_correct = P.correct_mass(th_floored)
    a_wrong = P.wrong_mass(th_floored)

    if bound_id == "f2":

        def f2_at(K: float) -> BoundResult:
            loss = float(
                votes.beta_margin_loss_terms(K * a_correct, K * a_wrong, 0.0).mean()
            )
            return f2_from_loss(loss, th_floored, K, spec)

        best = _optimize_K(f2_at, wp_init.K, cfg)
        return _finalize(best, base_flags)

    sorted_margins = np.sort(votes.margins(P, th_floored))
    m = P.num_examples

    def loss_at(g: float) -> float:
        return float(np.searchsorted(sorted_margins, g, side="right")) / m

    delta_eff = spec.delta / cfg.n_gamma if bound_id in _UNION_BOUNDS else spec.delta
    spec_eff = replace(spec, delta=delta_eff)

    grid = cfg.gamma_grid()
    if bound_id == "dirichlet_margin":
        losses = np.array([loss_at(float(g)) for g in grid])
        best = _certify_dirichlet_margin(
            losses, grid, th_floored, wp_init.K, spec_eff, cfg
        )
        return _finalize(best, base_flags)

    gz_floor = math.sqrt(2.0 / P.num_voters) if bound_id == "gz" else None
    best: BoundResult | None = None
    for g in grid:
        g = float(g)
        if bound_id == "gz":
            if P.num_voters < 3 or g <= gz_floor:
                continue
            result = gz_from_loss(loss_at(g), P.num_voters, g, spec_eff)
        elif bound_id == "bgplus":
            result = bgplus_from_loss(loss_at(g), P.num_voters, g, spec_eff)
        elif bound_id == "bg":
            result = bg_original_from_loss(loss_at(g), P.num_voters, g, spec_eff)
        elif bound_id == "bgplusplus":
            result = bgplusplus_from_loss(loss_at(g), th_floored, g, spec_eff)
        else:  # stochastic_margin
            result = _optimize_K(
                lambda K, _g=g: stochastic_margin_from_loss(
                    float(
                        votes.beta_margin_loss_terms(
                            K * a_correct, K * a_wrong, _g
                        ).mean()
                    ),
                    th_floored,
                    K,
                    _g,
                    spec_eff,
                ),
                wp_init.K,
                cfg,
            )
        if best is None or result.value < best.value:
            best = result
    if best is None:
        best = _vacuous(None, None, 1.0, ("inapplicable_margin",))
    return _finalize(best, base_flags)


def _finalize(result: BoundResult, base_flags: tuple) -> BoundResult:
    flags = set(base_flags)
    if result.value >= 1.0:
        flags.add("vacuous")
    return result.with_flags(flags) if flags else result
