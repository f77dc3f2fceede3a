import numpy as np
import pytest

from entrood.analysis import (DecompositionLedger, ContrastStats, bits_per_dim, chebyshev_bound,
                              contrast_from_log_likelihoods, contrast_stats, decomposition_ledger,
                              empirical_ledger, gaussian_contrast_moments)
from entrood.density_models import compressor_model, exact_model, fit_gmm_em
from entrood.distributions import (GaussianMixture, analytic_entropy, analytic_kl, categorical_product,
                                   diagonal_gaussian, full_gaussian, isotropic_gaussian, sample, uniform_box)
from entrood.errors import ConfigError, DataError, NumericalError, UnavailableError


def flagship(dim):
    return isotropic_gaussian(dim, 0.0, 16.0), isotropic_gaussian(dim, 0.0, 1.0)


class Parameters:
    standard = isotropic_gaussian(1)
    wide = isotropic_gaussian(1, variance=16.0)
    dims = [2, 4, 8, 16, 32, 64]

    # (data law, law of the exact model), all with closed-form KL and entropy
    ledger_fixtures = [
        (standard, standard),
        (wide, wide),
        (standard, wide),
        (isotropic_gaussian(2), isotropic_gaussian(2, 1.0, 2.0)),
        (full_gaussian([0.0, 1.0], [[2.0, 0.5], [0.5, 1.0]]), diagonal_gaussian([1.0, 0.0], [1.0, 3.0])),
        (uniform_box(0.25, 0.75, dim=2), uniform_box(0.0, 1.0, dim=2)),
        (categorical_product([0.5, 0.5], dim=3), categorical_product([0.25, 0.75], dim=3)),
    ]

    # (P, Q, law of the exact model)
    inversion_triples = [
        (wide, standard, wide),
        (isotropic_gaussian(4, 0.0, 16.0), isotropic_gaussian(4), isotropic_gaussian(4, 0.0, 16.0)),
        (uniform_box(-4.0, 4.0, dim=1), standard, isotropic_gaussian(1, variance=4.0)),
        (standard, wide, standard),
    ]


class TestChebyshev:

    def test_examples(self):

        assert chebyshev_bound(2.0, 1.0) == pytest.approx(0.75)
        assert chebyshev_bound(-1.0, 1.0) is None
        assert chebyshev_bound(0.0, 1.0) is None
        assert chebyshev_bound(7.5, 8.03125) == pytest.approx(0.857222, abs=1e-6)

    def test_errors(self):

        for sigma2 in (0.0, -1.0, np.inf, np.nan):
            with pytest.raises(ConfigError):
                chebyshev_bound(1.0, sigma2)

    def test_monotone_in_dim(self):

        bounds = []
        for dim in Parameters.dims:
            p, q = flagship(dim)
            bounds.append(chebyshev_bound(*gaussian_contrast_moments(p, q, p)))
        assert np.all(np.diff(bounds) > 0)


class TestLedger:

    def test_bits_per_dim(self):

        assert bits_per_dim(784 * np.log(2), 784) == pytest.approx(1.0)
        with pytest.raises(ConfigError):
            bits_per_dim(1.0, 0)

    def test_perfect_model(self):

        ledger = decomposition_ledger(Parameters.standard, exact_model(Parameters.standard), 10 ** 5, seed=1)
        se = ledger.avg_log_likelihood.std_error
        assert abs(ledger.avg_log_likelihood.value + 1.418939) <= 4 * se
        assert ledger.kl_term.value == 0.0
        assert ledger.kl_term.method == "analytic"
        assert ledger.entropy_term.value == pytest.approx(1.418939, abs=1e-6)
        assert abs(ledger.residual) <= 4 * se

    def test_closure(self):

        ledger = decomposition_ledger(Parameters.wide, exact_model(Parameters.wide), 10 ** 5, seed=2)
        assert ledger.avg_log_likelihood.value == pytest.approx(
            -(ledger.kl_term.value + ledger.entropy_term.value) + ledger.residual, abs=1e-12)
        assert abs(ledger.avg_log_likelihood.value + 2.805233) <= 4 * ledger.avg_log_likelihood.std_error

    @pytest.mark.parametrize("fixture", Parameters.ledger_fixtures)
    def test_closure_on_fixtures(self, fixture):

        data_dist, model_dist = fixture
        ledger = decomposition_ledger(data_dist, exact_model(model_dist), 10 ** 5, seed=13)
        assert ledger.kl_term.method == "analytic"
        assert ledger.entropy_term.method == "analytic"
        assert abs(ledger.residual) <= 4 * ledger.avg_log_likelihood.std_error + 1e-12

    def test_residual_shrinks(self):

        model = exact_model(Parameters.wide)
        mean_residuals = []
        for n in (10 ** 2, 10 ** 3, 10 ** 4, 10 ** 5):
            ledgers = [decomposition_ledger(Parameters.standard, model, n, seed=seed) for seed in range(10)]
            for ledger in ledgers:
                assert abs(ledger.residual) <= 5 * ledger.avg_log_likelihood.std_error
            mean_residuals.append(np.mean([abs(ledger.residual) for ledger in ledgers]))

        assert np.all(np.diff(mean_residuals) < 0)

    @pytest.mark.parametrize("triple", Parameters.inversion_triples)
    def test_entropy_gap_inversion(self, triple):

        p, q, model_dist = triple
        entropy_gap = analytic_entropy(p) - analytic_entropy(q)
        kl_gap = analytic_kl(q, model_dist) - analytic_kl(p, model_dist)

        model = exact_model(model_dist)
        on_p = decomposition_ledger(p, model, 10 ** 5, seed=14).avg_log_likelihood
        on_q = decomposition_ledger(q, model, 10 ** 5, seed=15).avg_log_likelihood
        se = np.hypot(on_p.std_error, on_q.std_error)

        if entropy_gap > kl_gap:
            assert on_q.value - on_p.value > 4 * se
        else:
            assert on_p.value - on_q.value > 4 * se
        assert on_q.value - on_p.value == pytest.approx(entropy_gap - kl_gap, abs=4 * se)

    def test_inversion(self):

        in_ledger = decomposition_ledger(Parameters.wide, exact_model(Parameters.wide), 10 ** 5, seed=3)
        out_ledger = decomposition_ledger(Parameters.standard, exact_model(Parameters.wide), 10 ** 5, seed=3)
        assert abs(out_ledger.avg_log_likelihood.value + 2.336483) <= 4 * out_ledger.avg_log_likelihood.std_error
        assert out_ledger.kl_term.value == pytest.approx(0.917544, abs=1e-6)
        assert out_ledger.avg_log_likelihood.value > in_ledger.avg_log_likelihood.value

    def test_flagship_inversion(self):

        p, q = flagship(16)
        in_ledger = decomposition_ledger(p, exact_model(p), 10 ** 4, seed=4)
        out_ledger = decomposition_ledger(q, exact_model(p), 10 ** 4, seed=5)
        gap = out_ledger.avg_log_likelihood.value - in_ledger.avg_log_likelihood.value
        se = np.hypot(in_ledger.avg_log_likelihood.std_error, out_ledger.avg_log_likelihood.std_error)
        assert gap > 4 * se
        assert abs(gap - 7.5) <= 4 * se

    def test_monte_carlo_terms(self):

        mixture = GaussianMixture([0.5, 0.5], [isotropic_gaussian(1, -3.0), isotropic_gaussian(1, 3.0)])
        model = fit_gmm_em(sample(mixture, 2000, seed=1), 2, seed=1)
        ledger = decomposition_ledger(mixture, model, 20000, seed=5)
        assert ledger.entropy_term.method == "mc-entropy"
        assert ledger.kl_term.method == "mc-kl"
        assert np.isfinite(ledger.residual)

    def test_support_violation(self):

        model = exact_model(uniform_box([0.0], [1.0]))
        ledger = decomposition_ledger(uniform_box([0.0], [2.0]), model, 1000, seed=6)
        assert ledger.kl_term.value == np.inf
        assert ledger.kl_term.support_violation
        assert np.isnan(ledger.residual)

    def test_errors(self):

        with pytest.raises(ConfigError, match="proxy has no normalized density"):
            decomposition_ledger(Parameters.standard, compressor_model("zlib", 9, dim=1), 100, seed=0)
        with pytest.raises(DataError):
            decomposition_ledger(isotropic_gaussian(2), exact_model(Parameters.standard), 100, seed=0)

    def test_empirical(self):

        data = sample(Parameters.standard, 1000, seed=7)
        ledger = empirical_ledger(data, exact_model(Parameters.standard), label="train")
        assert ledger.kl_term is None
        assert ledger.residual is None
        assert ledger.data_dist_id == "train"
        assert ledger.bits_per_dim == pytest.approx(-ledger.avg_log_likelihood.value / np.log(2))

    def test_to_dict(self):

        ledger = decomposition_ledger(Parameters.standard, exact_model(Parameters.standard), 1000, seed=8)
        assert DecompositionLedger.from_dict(ledger.to_dict()) == ledger


class TestContrast:

    def test_gaussian_moments(self):

        p, q = flagship(1)
        mu, sigma2 = gaussian_contrast_moments(p, q, p)
        assert mu == pytest.approx(0.468750, abs=1e-9)
        assert sigma2 == pytest.approx(0.501953125, abs=1e-9)

        p, q = flagship(16)
        mu, sigma2 = gaussian_contrast_moments(p, q, p)
        assert mu == pytest.approx(7.5, abs=1e-9)
        assert sigma2 == pytest.approx(8.03125, abs=1e-9)

        with pytest.raises(UnavailableError):
            gaussian_contrast_moments(uniform_box([0.0], [1.0]), q, p)

    def test_flagship_bound(self):

        p, q = flagship(16)
        stats = contrast_stats(p, q, exact_model(p), 10 ** 5, seed=9)
        assert stats.mu == pytest.approx(7.5, abs=0.1)
        assert stats.sigma2 == pytest.approx(8.03125, rel=0.05)
        assert stats.chebyshev_bound == pytest.approx(0.857, abs=0.01)
        assert not stats.vacuous
        p_hat = stats.empirical_p_z_gt_0
        assert p_hat.value >= stats.chebyshev_bound - 3 * p_hat.std_error

    def test_vacuous_in_one_dim(self):

        p, q = flagship(1)
        stats = contrast_stats(p, q, exact_model(p), 10 ** 5, seed=10)
        assert stats.mu == pytest.approx(0.46875, abs=0.02)
        assert stats.chebyshev_bound < 0
        assert stats.vacuous

    def test_symmetric(self):

        p = isotropic_gaussian(3)
        stats = contrast_stats(p, p, exact_model(p), 10 ** 5, seed=11)
        p_hat = stats.empirical_p_z_gt_0
        assert abs(p_hat.value - 0.5) <= 4 * p_hat.std_error
        assert stats.vacuous

    @pytest.mark.parametrize("dim", [4, 16])
    def test_bound_holds(self, dim):

        p, q = flagship(dim)
        model = exact_model(p)
        for seed in range(20):
            stats = contrast_stats(p, q, model, 2000, seed=seed)
            if stats.chebyshev_bound is None:
                continue
            p_hat = stats.empirical_p_z_gt_0
            assert p_hat.value >= stats.chebyshev_bound - 3 * p_hat.std_error

    def test_worker_invariance(self):

        p, q = flagship(4)
        single = contrast_stats(p, q, exact_model(p), 20000, seed=12, workers=1)
        multi = contrast_stats(p, q, exact_model(p), 20000, seed=12, workers=4)
        assert single == multi

    def test_excluded_pairs(self):

        lx = np.array([0.0, -1.0, -np.inf, -2.0])
        ly = np.array([1.0, 0.0, 0.0, np.nan])
        stats = contrast_from_log_likelihoods(lx, ly)
        assert stats.n_pairs == 2
        assert stats.n_excluded == 2
        assert stats.mu == pytest.approx(1.0)
        assert stats.empirical_p_z_gt_0.value == 1.0

        with pytest.raises(NumericalError):
            contrast_from_log_likelihoods(np.array([0.0, np.inf]), np.array([0.0, 1.0]))
        with pytest.raises(DataError):
            contrast_from_log_likelihoods(np.zeros(3), np.zeros(4))

    def test_to_dict(self):

        stats = contrast_from_log_likelihoods(np.array([0.0, -1.0, -3.0]), np.array([1.0, 0.5, 2.0]))
        assert ContrastStats.from_dict(stats.to_dict()) == stats

    def test_errors(self):

        p, q = flagship(2)
        with pytest.raises(DataError):
            contrast_stats(p, isotropic_gaussian(3), exact_model(p), 100, seed=0)
        with pytest.raises(DataError):
            contrast_stats(p, q, exact_model(p), 1, seed=0)
