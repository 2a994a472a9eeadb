import math
import unittest

import numpy as np

from test_base import make_records
from velander import mqr, opt, profiles
from velander.evd import CanonicalParams, Formulation

FAST = opt.OptimConfig(n_starts=2)


def single(energy, peak):
    return profiles.Records.from_arrays(['a'], [energy], [peak])


class TestPinball(unittest.TestCase):

    def test_values(self):
        self.assertAlmostEqual(mqr.pinball_loss(0.5, 2), 1.0)
        self.assertAlmostEqual(mqr.pinball_loss(0.9, -1), 0.1)
        self.assertEqual(mqr.pinball_loss(0.25, 0), 0)

    def test_minimised_at_quantile(self):
        """expected loss over a discrete distribution is minimal at its
        tau-quantile"""
        support = np.array([1.0, 2.0, 4.0, 7.0, 11.0])
        mass = np.array([0.1, 0.2, 0.3, 0.25, 0.15])
        candidates = np.linspace(0, 12, 1201)
        for tau in (0.25, 0.5, 0.9):
            risk = [np.sum(mass * mqr.pinball_loss(tau, support - c))
                    for c in candidates]
            best = candidates[int(np.argmin(risk))]
            quantile = support[np.searchsorted(np.cumsum(mass), tau)]
            self.assertAlmostEqual(best, quantile)

    def test_tau_outside(self):
        self.assertRaises(ValueError, mqr.pinball_loss, 1.0, 1)


class TestQuantileGrid(unittest.TestCase):

    def test_default(self):
        grid = mqr.QuantileGrid.default()
        self.assertEqual(len(grid), 81)
        self.assertEqual(grid.taus[0], 0.1)
        self.assertEqual(grid.taus[-1], 0.9)
        self.assertTrue(grid.contains(0.37))

    def test_parse(self):
        self.assertTupleEqual(
            mqr.QuantileGrid.parse('0.25:0.25:0.75').taus, (0.25, 0.5, 0.75))

    def test_invalid(self):
        for spec in ('0.1:0.1', '0.1:0:0.9', 'a:b:c', '0:0.5:1'):
            self.assertRaises(ValueError, mqr.QuantileGrid.parse, spec)

    def test_index_off_grid(self):
        grid = mqr.QuantileGrid.parse('0.1:0.1:0.9')
        self.assertListEqual(grid.index([0.3, 0.9]).tolist(), [2, 8])
        self.assertRaises(ValueError, grid.index, 0.35)


class TestPredict(unittest.TestCase):

    def test_gumbel(self):
        self.assertAlmostEqual(
            mqr.predict_quantile('Gumbel', [0, 1, 0], math.exp(-1), 1), 0)

    def test_c4(self):
        grid = mqr.QuantileGrid.parse('0.1:0.1:0.9')
        w = np.concatenate([[0.1], np.full(len(grid), 2.0)])
        self.assertAlmostEqual(
            mqr.predict_quantile('C4', w, 0.5, 100, grid), 30)
        self.assertRaises(
            ValueError, mqr.predict_quantile, 'C4', w, 0.55, 100, grid)

    def test_frechet_parameterisation(self):
        params = CanonicalParams(0.1, 2.0, 3.0, 0.25)
        w = mqr.from_canonical('Frechet', params)
        self.assertListEqual(w.tolist(), [0.1, 8.0, -5.0, 0.25])
        self.assertEqual(mqr.to_canonical('Frechet', w), params)

    def test_bounds(self):
        bounds = mqr.mqr_bounds('r-Weibull')
        self.assertEqual(bounds.upper[1], 0)
        self.assertEqual(bounds.upper[3], -1e-2)


class TestApl(unittest.TestCase):

    def setUp(self):
        self.grid = mqr.QuantileGrid((0.5,))

    def test_on_every_quantile(self):
        grid = mqr.QuantileGrid.default()
        w = np.concatenate([[0.1], np.full(len(grid), 2.0)])
        self.assertEqual(mqr.apl('C4', w, single(100, 30), grid), 0)

    def test_one_record(self):
        self.assertAlmostEqual(
            mqr.apl('C4', [0, 0], single(1, 2), self.grid), 1.0)

    def test_two_records(self):
        records = profiles.Records.from_arrays(
            ['a', 'b'], [1, 1], [2, -2])
        self.assertAlmostEqual(
            mqr.apl('C4', [0, 0], records, self.grid), 1.0)

    def test_empty(self):
        self.assertRaises(
            ValueError, mqr.apl, 'C4', [0, 0], profiles.Records([]),
            self.grid)


class TestWeightedQuantile(unittest.TestCase):

    def test_equal_weights(self):
        values = np.array([3.0, 1.0, 2.0, 4.0])
        self.assertEqual(
            mqr.weighted_quantile(values, np.ones(4), 0.5), 2.0)
        self.assertEqual(
            mqr.weighted_quantile(values, np.ones(4), 0.9), 4.0)

    def test_heavy_weight(self):
        values = np.array([1.0, 2.0, 3.0])
        weights = np.array([1.0, 10.0, 1.0])
        self.assertEqual(mqr.weighted_quantile(values, weights, 0.1), 2.0)


class TestFitC4(unittest.TestCase):

    def test_single_customer(self):
        fit = mqr.fit_c4(single(100, 25), mqr.QuantileGrid((0.5,)))
        self.assertAlmostEqual(fit.train_apl, 0)
        self.assertAlmostEqual(fit.quantile(0.5, 100), 25)

    def test_monotone_and_nonnegative(self):
        fit = mqr.fit_c4(make_records(300, seed=3))
        self.assertGreaterEqual(fit.alpha, 0)
        self.assertTrue(np.all(np.diff(fit.w[1:]) >= 0))
        self.assertIsNone(fit.gamma)

    def test_beats_gumbel(self):
        records = make_records(300, seed=4)
        c4 = mqr.fit_c4(records)
        gumbel = mqr.fit_parametric('Gumbel', records, config=FAST)
        self.assertLessEqual(c4.train_apl, gumbel.train_apl + 1e-6)

    def test_apl_matches(self):
        records = make_records(100, seed=5)
        fit = mqr.fit_c4(records)
        self.assertAlmostEqual(fit.apl(records), fit.train_apl)

    def test_empty(self):
        self.assertRaises(ValueError, mqr.fit_c4, profiles.Records([]))


class TestFitParametric(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.records = make_records(300, seed=6)
        cls.gumbel = mqr.fit_parametric('Gumbel', cls.records, config=FAST)

    def test_not_worse_than_truth(self):
        truth = mqr.apl('Gumbel', [0.05, 2.0, 5.0], self.records)
        self.assertLessEqual(self.gumbel.train_apl, truth * (1 + 1e-3))
        self.assertAlmostEqual(self.gumbel.alpha, 0.05, delta=0.01)

    def test_fuzzy_nests_gumbel(self):
        fuzzy = mqr.fit_parametric(
            'f-Gumbel', self.records, config=FAST,
            warm_starts=[np.append(self.gumbel.w, 0.0)])
        self.assertLessEqual(fuzzy.train_apl, self.gumbel.train_apl + 1e-6)
        self.assertLessEqual(abs(fuzzy.gamma), 1e-2)

    def test_fuzzy_fits_gumbel_itself(self):
        fuzzy = mqr.fit_parametric('f-Gumbel', self.records, config=FAST)
        self.assertLessEqual(fuzzy.train_apl, self.gumbel.train_apl + 1e-6)

    def test_frechet_near_boundary(self):
        frechet = mqr.fit_parametric('Frechet', self.records, config=FAST)
        self.assertGreaterEqual(frechet.gamma, 1e-2)
        self.assertLess(frechet.gamma, 0.3)

    def test_identical_records(self):
        records = profiles.Records.from_arrays(
            ['a', 'b', 'c', 'd', 'e'], [100] * 5, [30] * 5)
        fit = mqr.fit_parametric('Gumbel', records, config=FAST)
        self.assertTrue(np.isfinite(fit.train_apl))
        self.assertLess(fit.train_apl, 1e-3)

    def test_too_few_records(self):
        self.assertRaises(
            ValueError, mqr.fit_parametric, 'Gumbel', make_records(3))

    def test_rejects_c4(self):
        self.assertRaises(
            ValueError, mqr.fit_parametric, Formulation.C4, self.records)

    def test_deterministic(self):
        again = mqr.fit_parametric('Gumbel', self.records, config=FAST)
        self.assertListEqual(again.w.tolist(), self.gumbel.w.tolist())

    def test_to_dict(self):
        data = self.gumbel.to_dict()
        self.assertEqual(data['method'], 'MQR')
        self.assertEqual(data['formulation'], 'Gumbel')
        self.assertEqual(len(data['w']), 3)


class TestScaling(unittest.TestCase):
    """Multiplying every energy and peak by c leaves alpha unchanged and
    scales beta by sqrt(c)"""

    @classmethod
    def setUpClass(cls):
        cls.records = make_records(300, seed=8)
        cls.scaled = profiles.Records.from_arrays(
            list(cls.records.customer_id), 4 * cls.records.energy,
            4 * cls.records.peak)

    def test_c4_exact(self):
        fit = mqr.fit_c4(self.records)
        scaled = mqr.fit_c4(self.scaled)
        self.assertEqual(scaled.alpha, fit.alpha)
        np.testing.assert_allclose(scaled.w[1:], 2 * fit.w[1:], rtol=1e-12)
        self.assertAlmostEqual(
            scaled.train_apl, 4 * fit.train_apl, delta=1e-12 * fit.train_apl)

    def test_gumbel(self):
        fit = mqr.fit_parametric('Gumbel', self.records)
        scaled = mqr.fit_parametric('Gumbel', self.scaled)
        self.assertAlmostEqual(
            scaled.train_apl / 4, fit.train_apl,
            delta=1e-4 * fit.train_apl)
        energy = np.array([1e3, 1e5])
        for tau in (0.1, 0.5, 0.9):
            np.testing.assert_allclose(
                scaled.quantile(tau, 4 * energy),
                4 * fit.quantile(tau, energy), rtol=1e-3)


class TestQuantileOrder(unittest.TestCase):

    def test_non_decreasing_in_tau(self):
        records = make_records(200, seed=9)
        grid = mqr.QuantileGrid.default()
        energy = np.array([1e2, 1e4, 1e6])
        for formulation in Formulation:
            with self.subTest(formulation=formulation.label):
                fit = mqr.fit(formulation, records, grid, config=FAST)
                quantiles = mqr.quantile_matrix(
                    fit.formulation, fit.w, energy, grid, fit.gamma_th)
                self.assertTrue(np.all(np.diff(quantiles, axis=1) >= 0))
