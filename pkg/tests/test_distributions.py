import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.integrate import trapezoid
from scipy.stats import chisquare

import entrood as eo
from entrood.distributions import (Dataset, GaussianMixture, analytic_entropy, analytic_kl, categorical_product,
                                   diagonal_gaussian, distribution_from_dict, full_gaussian, isotropic_gaussian,
                                   log_density, sample, uniform_box)
from entrood.errors import ConfigError, DataError, UnavailableError


class Parameters:
    standard = isotropic_gaussian(1)
    wide = isotropic_gaussian(1, variance=16.0)
    unit_box = uniform_box(0.0, 1.0, dim=2)
    coin = categorical_product([0.5, 0.5], dim=1)
    biased = categorical_product([0.25, 0.75], dim=1)
    bimodal = GaussianMixture([0.5, 0.5], [isotropic_gaussian(1, -5.0), isotropic_gaussian(1, 5.0)])

    fixtures = [standard, wide, isotropic_gaussian(2), unit_box, coin,
                GaussianMixture([0.5, 0.5], [standard, standard])]

    # (distribution, lower corner, upper corner) of the tested grid
    continuous = [
        (standard, [-5.0], [5.0]),
        (bimodal, [-10.0], [10.0]),
        (diagonal_gaussian([1.0, -2.0], [0.5, 3.0]), [-2.0, -9.0], [4.0, 5.0]),
        (full_gaussian([0.5, -1.0], [[2.0, 0.8], [0.8, 1.0]]), [-5.5, -5.0], [6.5, 3.0]),
        (GaussianMixture([0.3, 0.7], [isotropic_gaussian(2, -2.0), isotropic_gaussian(2, 1.5, 0.5)]),
         [-6.0, -6.0], [5.0, 5.0]),
        (uniform_box([0.0, -1.0], [2.0, 1.0]), [0.0, -1.0], [2.0, 1.0]),
    ]
    discrete = [biased, categorical_product([[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]])]


def grid_cell_masses(dist, lower, upper, bins, sub):
    """ Probability of each cell of a regular grid, midpoint rule on a finer grid. """

    dim = len(lower)
    edges = [np.linspace(lo, hi, bins + 1) for lo, hi in zip(lower, upper)]
    fine = [np.linspace(lo, hi, bins * sub + 1) for lo, hi in zip(lower, upper)]
    mids = [(f[:-1] + f[1:]) / 2 for f in fine]
    grid = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1).reshape(-1, dim)
    volume = np.prod([(hi - lo) / (bins * sub) for lo, hi in zip(lower, upper)])

    mass = np.exp(dist.log_density(grid)).reshape((bins * sub,) * dim) * volume
    for axis in range(dim):
        mass = np.add.reduceat(mass, np.arange(0, bins * sub, sub), axis=axis)

    return edges, mass.ravel()


def chi2_pvalue(observed, probs):
    """ Pearson test, cells expecting fewer than 5 counts are pooled. """

    n = observed.sum()
    expected = probs * n
    small = expected < 5
    pooled_obs, pooled_exp = observed[small].sum(), expected[small].sum()
    observed, expected = observed[~small], expected[~small]
    if pooled_exp > 1e-6:
        observed, expected = np.append(observed, pooled_obs), np.append(expected, pooled_exp)
    else:
        assert pooled_obs == 0

    return chisquare(observed, expected * observed.sum() / expected.sum()).pvalue


class TestDistributions:

    def test_log_density_examples(self):

        assert log_density(Parameters.standard, np.array([0.0])) == pytest.approx(-0.918939, abs=1e-6)
        assert log_density(isotropic_gaussian(2), np.array([1.0, 1.0])) == pytest.approx(-2.837877, abs=1e-6)

        degenerate = GaussianMixture([0.5, 0.5], [Parameters.standard, Parameters.standard])
        assert log_density(degenerate, np.array([0.0])) == pytest.approx(-0.918939, abs=1e-6)

    def test_support(self):

        values = Parameters.unit_box.log_density(np.array([[0.5, 0.5], [1.5, 0.5], [-0.1, 0.2]]))
        assert values[0] == 0.0
        assert np.all(values[1:] == -np.inf)

        codes = Parameters.coin.log_density(np.array([[0], [1], [2], [-1]]))
        assert_allclose(codes[:2], np.log(0.5))
        assert np.all(codes[2:] == -np.inf)

    def test_log_density_errors(self):

        with pytest.raises(DataError):
            Parameters.standard.log_density(np.zeros((3, 2)))
        with pytest.raises(DataError):
            Parameters.standard.log_density(np.array([[np.nan]]))

    def test_sample_empty(self):

        data = sample(isotropic_gaussian(3), 0, seed=7)
        assert data.n == 0
        assert data.dim == 3

    @pytest.mark.parametrize("dist", Parameters.fixtures)
    def test_sample_deterministic(self, dist):

        a = sample(dist, 20000, seed=11)
        b = sample(dist, 20000, seed=11, workers=4)
        assert_array_equal(a.points, b.points)
        assert a.provenance.seed == 11
        assert not a.points.flags.writeable

    def test_sample_moments(self):

        data = sample(Parameters.standard, 10 ** 6, seed=1)
        assert abs(data.points.mean()) < 4 / np.sqrt(10 ** 6)
        assert abs(data.points.var() - 1) < 0.01

    @pytest.mark.parametrize("fixture", Parameters.continuous)
    def test_sampler_matches_density(self, fixture):

        dist, lower, upper = fixture
        bins, sub = (40, 100) if dist.dim == 1 else (10, 40)
        edges, masses = grid_cell_masses(dist, lower, upper, bins, sub)

        points = sample(dist, 10 ** 5, seed=21).points
        inside = np.histogramdd(points, bins=edges)[0].ravel()
        observed = np.append(inside, points.shape[0] - inside.sum())
        probs = np.append(masses, max(1.0 - masses.sum(), 0.0))

        assert chi2_pvalue(observed, probs) > 0.001

    @pytest.mark.parametrize("dist", Parameters.discrete)
    def test_sampler_matches_mass(self, dist):

        shape = (dist.n_categories,) * dist.dim
        codes = np.stack(np.unravel_index(np.arange(np.prod(shape)), shape), axis=1)
        probs = np.exp(dist.log_density(codes))
        assert probs.sum() == pytest.approx(1.0)

        points = sample(dist, 10 ** 5, seed=22).points.astype(np.int64)
        observed = np.bincount(np.ravel_multi_index(points.T, shape), minlength=probs.shape[0])

        assert chi2_pvalue(observed, probs) > 0.001

    def test_analytic_entropy(self):

        assert analytic_entropy(Parameters.standard) == pytest.approx(1.418939, abs=1e-6)
        assert analytic_entropy(Parameters.wide) == pytest.approx(2.805233, abs=1e-6)
        for dim in (1, 3, 10):
            assert analytic_entropy(uniform_box(0.0, 1.0, dim=dim)) == pytest.approx(0.0, abs=1e-12)
        with pytest.raises(UnavailableError):
            analytic_entropy(Parameters.bimodal)

    @pytest.mark.parametrize("dist", Parameters.fixtures)
    def test_entropy_consistency(self, dist):

        data = sample(dist, 10 ** 5, seed=3)
        ll = dist.log_density(data.points)
        se = ll.std(ddof=1) / np.sqrt(data.n)
        assert abs(-ll.mean() - analytic_entropy(dist)) <= 4 * se + 1e-12

    def test_analytic_kl(self):

        assert analytic_kl(Parameters.standard, Parameters.wide) == pytest.approx(0.917544, abs=1e-6)
        assert analytic_kl(Parameters.coin, Parameters.biased) == pytest.approx(0.143841, abs=1e-6)
        for dist in Parameters.fixtures:
            assert analytic_kl(dist, dist) == pytest.approx(0.0, abs=1e-9)

    def test_analytic_kl_supports(self):

        inner = uniform_box(0.25, 0.75, dim=2)
        assert analytic_kl(inner, Parameters.unit_box) == pytest.approx(2 * np.log(2))
        assert analytic_kl(Parameters.unit_box, inner) == np.inf
        assert analytic_kl(uniform_box([2.0], [3.0]), uniform_box([0.0], [1.0])) == np.inf
        assert analytic_kl(Parameters.standard, uniform_box([0.0], [1.0])) == np.inf

    def test_analytic_kl_uniform_gaussian(self):

        box = uniform_box([0.0], [1.0])
        grid = np.linspace(0.0, 1.0, 200001)
        integrand = -Parameters.standard.log_density(grid[:, np.newaxis])
        cross_entropy = trapezoid(integrand, grid)
        assert analytic_kl(box, Parameters.standard) == pytest.approx(cross_entropy, abs=1e-8)

    def test_analytic_kl_errors(self):

        with pytest.raises(UnavailableError):
            analytic_kl(Parameters.bimodal, Parameters.standard)
        with pytest.raises(DataError):
            analytic_kl(Parameters.standard, isotropic_gaussian(2))
        with pytest.raises(DataError):
            analytic_kl(Parameters.coin, Parameters.standard)

    def test_invariants(self):

        with pytest.raises(ConfigError):
            GaussianMixture([0.6, 0.6], [Parameters.standard, Parameters.wide])
        with pytest.raises(ConfigError):
            eo.distributions.full_gaussian([0, 0], [[1, 2], [2, 1]])
        with pytest.raises(ConfigError):
            categorical_product([0.5, 0.6], dim=2)
        with pytest.raises(ConfigError):
            uniform_box([1.0], [0.0])

    def test_from_dict_round_trip(self):

        for dist in Parameters.fixtures + [Parameters.bimodal]:
            rebuilt = distribution_from_dict(dist.to_dict())
            assert rebuilt.describe() == dist.describe()

    def test_from_dict_collects_errors(self):

        with pytest.raises(ConfigError) as err:
            distribution_from_dict({"kind": "full-gaussian", "mu": [0.0], "sigma": 1.0})
        assert any("mu" in e for e in err.value.errors)
        assert any("sigma" in e for e in err.value.errors)
        assert any("covariance" in e for e in err.value.errors)

        with pytest.raises(ConfigError, match="unknown distribution kind"):
            distribution_from_dict({"kind": "student-t", "dim": 1})

    def test_dataset_immutable(self):

        data = Dataset(np.zeros((3, 2)))
        with pytest.raises(ValueError):
            data.points[0, 0] = 1.0
        with pytest.raises(DataError):
            Dataset(np.zeros(3))

