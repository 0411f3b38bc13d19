"""Numeric kernel tests: closed forms, independent oracles, and invariants."""
import math
from decimal import Decimal, getcontext
from fractions import Fraction

import numpy as np
import pytest
from scipy import integrate

from votecert import numkern as nk

EULER_GAMMA = 0.5772156649015329


class TestLogGamma:
    def test_known_values(self):
        assert nk.log_gamma(1.0) == pytest.approx(0.0, abs=1e-14)
        assert nk.log_gamma(2.0) == pytest.approx(0.0, abs=1e-14)
        assert nk.log_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), abs=1e-13)

    def test_accuracy_over_range(self):
        """Absolute-or-relative error <= 1e-12 against the library reference
        across [1e-6, 1e6]."""
        for x in np.logspace(-6, 6, 500):
            ref = math.lgamma(x)
            assert abs(nk.log_gamma(float(x)) - ref) <= 1e-12 * max(1.0, abs(ref))

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
    def test_domain_errors(self, bad):
        with pytest.raises(ValueError):
            nk.log_gamma(bad)


class TestDigamma:
    def test_psi_one_is_minus_euler(self):
        assert nk.digamma(1.0) == pytest.approx(-EULER_GAMMA, abs=1e-12)

    def test_psi_half_closed_form(self):
        assert nk.digamma(0.5) == pytest.approx(
            -EULER_GAMMA - 2.0 * math.log(2.0), abs=1e-12
        )

    def test_recurrence(self):
        """psi(x + 1) = psi(x) + 1/x, including the x = 3.7 check point."""
        assert nk.digamma(3.7) == pytest.approx(nk.digamma(2.7) + 1 / 2.7, abs=1e-12)
        rng = np.random.default_rng(0)
        for x in rng.uniform(1e-3, 60.0, 200):
            assert nk.digamma(x + 1.0) - nk.digamma(x) == pytest.approx(
                1.0 / x, abs=1e-12
            )

    def test_trigamma_against_derivative(self):
        assert nk.trigamma(1.0) == pytest.approx(math.pi**2 / 6.0, abs=1e-11)
        for x in (0.3, 1.7, 6.5, 40.0):
            fd = (nk.digamma(x + 5e-6) - nk.digamma(x - 5e-6)) / 1e-5
            assert nk.trigamma(x) == pytest.approx(fd, rel=1e-6)


class TestLogMultivariateBeta:
    def test_pair_of_ones(self):
        assert nk.log_multivariate_beta([1.0, 1.0]) == pytest.approx(0.0, abs=1e-13)

    def test_all_ones_is_inverse_factorial(self):
        for d in (2, 5, 9):
            assert nk.log_multivariate_beta(np.ones(d)) == pytest.approx(
                -nk.log_gamma(float(d)), abs=1e-12
            )

    def test_two_three(self):
        assert nk.log_multivariate_beta([2.0, 3.0]) == pytest.approx(
            math.log(1.0 / 12.0), abs=1e-12
        )


def beta_cdf_quadrature(z: float, a: float, b: float) -> float:
    """Adaptive quadrature of the Beta density with endpoint-weight handling."""
    if z <= 0.0:
        return 0.0
    if z >= 1.0:
        return 1.0
    ln_B = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    val, _ = integrate.quad(
        lambda t: (1.0 - t) ** (b - 1.0), 0.0, z, weight="alg", wvar=(a - 1.0, 0.0)
    )
    return val * math.exp(-ln_B)


class TestRegIncBeta:
    def test_uniform_cdf(self):
        for z in np.linspace(0.0, 1.0, 21):
            assert nk.reg_inc_beta(float(z), 1.0, 1.0) == pytest.approx(z, abs=1e-13)

    def test_symmetric_half(self):
        for a in (0.3, 1.0, 7.5, 133.0):
            assert nk.reg_inc_beta(0.5, a, a) == pytest.approx(0.5, abs=1e-12)

    def test_against_quadrature_case(self):
        # Beta(2, 3) integral to 0.6 has the exact value 0.8208.
        assert nk.reg_inc_beta(0.6, 2.0, 3.0) == pytest.approx(0.8208, abs=1e-12)
        assert beta_cdf_quadrature(0.6, 2.0, 3.0) == pytest.approx(0.8208, abs=1e-10)

    def test_symmetry_identity_random_grid(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            z = rng.uniform(0.01, 0.99)
            a = math.exp(rng.uniform(math.log(0.05), math.log(500.0)))
            b = math.exp(rng.uniform(math.log(0.05), math.log(500.0)))
            total = nk.reg_inc_beta(z, a, b) + nk.reg_inc_beta(1.0 - z, b, a)
            assert abs(total - 1.0) <= 1e-10

    def test_monotonicity(self):
        zs = np.linspace(0.05, 0.95, 10)
        vals = nk.reg_inc_beta(zs, 2.5, 4.0)
        assert np.all(np.diff(vals) > 0)
        a_grid = np.array([0.5, 1.0, 2.0, 4.0, 8.0])
        in_a = nk.reg_inc_beta(0.4, a_grid, 3.0)
        assert np.all(np.diff(in_a) < 1e-15)  # non-increasing in a
        in_b = nk.reg_inc_beta(0.4, 3.0, a_grid)
        assert np.all(np.diff(in_b) > -1e-15)  # non-decreasing in b

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            nk.reg_inc_beta(-0.1, 1.0, 1.0)
        with pytest.raises(ValueError):
            nk.reg_inc_beta(0.5, 0.0, 1.0)
        with pytest.raises(ValueError):
            nk.reg_inc_beta(0.5, 1.0, -2.0)


def dIda_quadrature(z: float, a: float, b: float) -> float:
    """d/da I_z(a,b) by differentiating under the integral sign; the ln t
    factor rides in the quadrature weight to absorb the endpoint singularity."""
    ln_B = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
    psi_term = nk.digamma(a) - nk.digamma(a + b)
    log_piece, _ = integrate.quad(
        lambda t: (1.0 - t) ** (b - 1.0),
        0.0, z, weight="alg-loga", wvar=(a - 1.0, 0.0),
    )
    return log_piece * math.exp(-ln_B) - psi_term * beta_cdf_quadrature(z, a, b)


class TestRegIncBetaGrad:
    def test_boundary_is_flat(self):
        assert nk.reg_inc_beta_grad(1.0, 2.0, 3.0) == (0.0, 0.0)
        assert nk.reg_inc_beta_grad(0.0, 2.0, 3.0) == (0.0, 0.0)

    def test_symmetric_point_partials_mirror(self):
        for a in (0.7, 2.0, 11.0):
            d_a, d_b = nk.reg_inc_beta_grad(0.5, a, a)
            assert d_a == pytest.approx(-d_b, rel=1e-6)

    def test_against_quadrature_derivative(self):
        d_a, _ = nk.reg_inc_beta_grad(0.6, 2.0, 3.0)
        assert d_a == pytest.approx(dIda_quadrature(0.6, 2.0, 3.0), rel=1e-6)

    def test_with_grad_matches_plain(self):
        val, d_a, d_b = nk.reg_inc_beta_with_grad(0.37, 1.8, 6.0)
        assert val == pytest.approx(nk.reg_inc_beta(0.37, 1.8, 6.0), abs=1e-14)
        g_a, g_b = nk.reg_inc_beta_grad(0.37, 1.8, 6.0)
        assert (d_a, d_b) == (g_a, g_b)

    def test_matches_independent_finite_differences_over_range(self):
        """Relative agreement <= 1e-5 with a finer-step central difference
        across a in [0.1, 1e3], skipping negligible derivatives."""
        rng = np.random.default_rng(23)
        checked = 0
        for _ in range(60):
            z = float(rng.uniform(0.1, 0.9))
            a = math.exp(rng.uniform(math.log(0.1), math.log(1e3)))
            b = math.exp(rng.uniform(math.log(0.1), math.log(1e3)))
            d_a, d_b = nk.reg_inc_beta_grad(z, a, b)
            ha, hb = 1e-6 * max(1.0, a), 1e-6 * max(1.0, b)
            fd_a = (nk.reg_inc_beta(z, a + ha, b) - nk.reg_inc_beta(z, a - ha, b)) / (2 * ha)
            fd_b = (nk.reg_inc_beta(z, a, b + hb) - nk.reg_inc_beta(z, a, b - hb)) / (2 * hb)
            for got, fd in ((d_a, fd_a), (d_b, fd_b)):
                if abs(fd) > 1e-7:
                    assert got == pytest.approx(fd, rel=1e-5)
                    checked += 1
        assert checked >= 40


def small_kl_decimal(q: str, p: str) -> float:
    """50-digit evaluation of the Bernoulli KL divergence."""
    getcontext().prec = 50
    q_d, p_d = Decimal(q), Decimal(p)
    one = Decimal(1)
    total = Decimal(0)
    if q_d > 0:
        total += q_d * (q_d / p_d).ln()
    if q_d < 1:
        total += (one - q_d) * ((one - q_d) / (one - p_d)).ln()
    return float(total)


class TestSmallKl:
    def test_zero_on_diagonal(self):
        for u in (0.0, 0.3, 1.0):
            assert nk.small_kl(u, u) == 0.0

    def test_limit_form_at_zero(self):
        for p in (0.1, 0.5, 0.9):
            assert nk.small_kl(0.0, p) == pytest.approx(-math.log(1.0 - p), abs=1e-14)

    def test_high_precision_value(self):
        assert nk.small_kl(0.1, 0.2) == pytest.approx(
            small_kl_decimal("0.1", "0.2"), abs=1e-15
        )

    def test_boundary_saturation(self):
        assert nk.small_kl(0.3, 0.0) == math.inf
        assert nk.small_kl(0.3, 1.0) == math.inf

    def test_domain(self):
        with pytest.raises(ValueError):
            nk.small_kl(1.2, 0.5)
        with pytest.raises(ValueError):
            nk.small_kl(0.5, -0.1)


class TestKlInv:
    def test_zero_budget_returns_u(self):
        for u in (0.0, 0.25, 0.8):
            assert nk.kl_inv(u, 0.0) == u

    def test_closed_form_at_zero(self):
        for c in (0.01, 0.3, 2.0):
            assert nk.kl_inv(0.0, c) == pytest.approx(1.0 - math.exp(-c), abs=1e-12)

    def test_resubstitution(self):
        v = nk.kl_inv(0.1, 0.05)
        assert abs(nk.small_kl(0.1, v) - 0.05) <= 1e-9

    def test_infinite_budget(self):
        assert nk.kl_inv(0.5, math.inf) == 1.0

    def test_roundtrip_grid(self):
        """kl(u, kl_inv(u, c)) recovers c to 1e-9 wherever the inverse
        does not saturate at 1."""
        for u in np.arange(0.0, 1.0, 0.01):
            for c in np.logspace(-6, math.log10(5.0), 40):
                v = nk.kl_inv(float(u), float(c))
                if v < 1.0:
                    assert abs(nk.small_kl(float(u), v) - c) <= 1e-9

    def test_monotone_in_both_arguments(self):
        cs = np.linspace(0.0, 2.0, 15)
        vals = [nk.kl_inv(0.2, float(c)) for c in cs]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        us = np.linspace(0.0, 0.95, 15)
        vals = [nk.kl_inv(float(u), 0.3) for u in us]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_vectorised_variant_agrees(self):
        rng = np.random.default_rng(3)
        us = rng.uniform(0.0, 0.99, 400)
        cs = rng.uniform(0.0, 4.0, 400)
        vec = nk.kl_inv_vec(us, cs)
        for u, c, v in zip(us, cs, vec):
            assert v == nk.kl_inv(float(u), float(c))


class TestKlInvGrad:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            u = rng.uniform(0.05, 0.8)
            c = rng.uniform(0.01, 1.0)
            dv_du, dv_dc = nk.kl_inv_grad(u, c)
            h = 1e-7
            fd_u = (nk.kl_inv(u + h, c) - nk.kl_inv(u - h, c)) / (2 * h)
            fd_c = (nk.kl_inv(u, c + h) - nk.kl_inv(u, c - h)) / (2 * h)
            assert dv_du == pytest.approx(fd_u, rel=1e-5)
            assert dv_dc == pytest.approx(fd_c, rel=1e-5)

    def test_small_u_limit(self):
        u, c = 1e-9, 0.4
        v = nk.kl_inv(u, c)
        _, dv_dc = nk.kl_inv_grad(u, c)
        assert dv_dc == pytest.approx(1.0 - v, rel=1e-6)

    def test_singular_at_zero_budget(self):
        with pytest.raises(ValueError):
            nk.kl_inv_grad(0.5, 0.0)


class TestCatoni:
    def test_fixed_points(self):
        for C in (0.5, 2.0, 10.0):
            assert nk.catoni_phi(C, 0.0) == pytest.approx(0.0, abs=1e-15)
            assert nk.catoni_phi_inv(C, 0.0) == pytest.approx(0.0, abs=1e-15)
            assert nk.catoni_phi(C, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_roundtrip(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            C = rng.uniform(0.1, 20.0)
            p = rng.uniform(0.0, 1.0)
            assert nk.catoni_phi_inv(C, nk.catoni_phi(C, p)) == pytest.approx(
                p, abs=1e-12
            )

    def test_variational_identity_with_small_kl(self):
        """sup_C [C Phi_C(p) - C q] recovers kl(q, p) (checked on a fine grid)."""
        q, p = 0.1, 0.3
        Cs = np.linspace(1e-4, 50.0, 200001)
        vals = Cs * nk.catoni_phi(Cs, p) - Cs * q
        assert float(vals.max()) == pytest.approx(nk.small_kl(q, p), abs=1e-4)


def beta_kl_quadrature(a1, a2, b1, b2) -> float:
    """KL(Beta(a1,a2) || Beta(b1,b2)) by weighted adaptive quadrature."""
    ln_Ba = math.lgamma(a1) + math.lgamma(a2) - math.lgamma(a1 + a2)
    ln_Bb = math.lgamma(b1) + math.lgamma(b2) - math.lgamma(b1 + b2)
    norm = math.exp(-ln_Ba)
    const = ln_Bb - ln_Ba
    log_x, _ = integrate.quad(
        lambda t: norm, 0.0, 1.0, weight="alg-loga", wvar=(a1 - 1.0, a2 - 1.0)
    )
    log_1mx, _ = integrate.quad(
        lambda t: norm, 0.0, 1.0, weight="alg-logb", wvar=(a1 - 1.0, a2 - 1.0)
    )
    return const + (a1 - b1) * log_x + (a2 - b2) * log_1mx


class TestDirichletKl:
    def test_zero_on_diagonal(self):
        assert nk.dirichlet_kl([2.0, 3.0, 1.5], [2.0, 3.0, 1.5]) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_uniform_prior_matches_unit_posterior(self):
        assert nk.dirichlet_kl(np.ones(6), np.ones(6)) == 0.0

    def test_beta_case_against_quadrature(self):
        got = nk.dirichlet_kl([2.0, 2.0], [1.0, 1.0])
        assert got == pytest.approx(beta_kl_quadrature(2.0, 2.0, 1.0, 1.0), abs=1e-8)

    def test_random_beta_cases_against_quadrature(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            a = rng.uniform(0.3, 20.0, size=2)
            b = rng.uniform(0.3, 20.0, size=2)
            got = nk.dirichlet_kl(a, b)
            want = beta_kl_quadrature(a[0], a[1], b[0], b[1])
            assert got == pytest.approx(want, abs=1e-6)

    def test_non_negative(self):
        rng = np.random.default_rng(13)
        for _ in range(1000):
            d = int(rng.integers(2, 8))
            a = rng.uniform(0.2, 30.0, size=d)
            b = rng.uniform(0.2, 30.0, size=d)
            assert nk.dirichlet_kl(a, b) >= -1e-10

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nk.dirichlet_kl([1.0, 2.0], [1.0, 2.0, 3.0])


def entropy_decimal(weights) -> float:
    getcontext().prec = 50
    total = Decimal(0)
    for w in weights:
        w_d = Decimal(w)
        total -= w_d * w_d.ln()
    return float(total)


class TestCategoricalEntropy:
    def test_uniform(self):
        theta = np.full(7, 1.0 / 7.0)
        assert nk.categorical_entropy(theta) == pytest.approx(math.log(7), abs=1e-12)
        assert nk.categorical_kl_uniform(theta) == pytest.approx(0.0, abs=1e-12)

    def test_one_hot(self):
        theta = np.zeros(5)
        theta[2] = 1.0
        assert nk.categorical_entropy(theta) == 0.0
        assert nk.categorical_kl_uniform(theta) == pytest.approx(math.log(5), abs=1e-12)

    def test_high_precision_point(self):
        theta = [0.7, 0.2, 0.1]
        assert nk.categorical_entropy(np.array(theta)) == pytest.approx(
            entropy_decimal(["0.7", "0.2", "0.1"]), abs=1e-14
        )


def binomial_tail_exact(N: int, p: Fraction, k0: int) -> float:
    total = Fraction(0)
    for k in range(k0, N + 1):
        total += math.comb(N, k) * p**k * (1 - p) ** (N - k)
    return float(total)


class TestBinomialTail:
    def test_zero_probability(self):
        assert nk.binomial_tail(10, 0.0, 1) == 0.0

    def test_two_coin_flips(self):
        assert nk.binomial_tail(2, 0.5, 1) == pytest.approx(0.75, abs=1e-12)

    def test_edge_thresholds(self):
        assert nk.binomial_tail(5, 0.3, 0) == 1.0
        assert nk.binomial_tail(5, 0.3, -2) == 1.0
        assert nk.binomial_tail(5, 0.3, 6) == 0.0

    def test_large_case_against_exact_summation(self):
        got = nk.binomial_tail(100, 0.3, 50)
        want = binomial_tail_exact(100, Fraction(3, 10), 50)
        assert got == pytest.approx(want, abs=1e-12)

    def test_enumeration_agreement_small_N(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            N = int(rng.integers(1, 31))
            k0 = int(rng.integers(1, N + 1))
            num = int(rng.integers(0, 101))
            p = Fraction(num, 100)
            got = nk.binomial_tail(N, float(p), k0)
            assert got == pytest.approx(binomial_tail_exact(N, p, k0), abs=1e-12)
