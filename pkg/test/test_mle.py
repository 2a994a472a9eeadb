import math
import unittest

import numpy as np

from velander import evd, experiments, mle, opt, profiles
from velander.mle import MleParams

FAST = opt.OptimConfig(n_starts=2)


def record(energy, peak, customer_id='a'):
    return profiles.CustomerRecord(customer_id, energy, peak)


class TestLoglikGumbel(unittest.TestCase):

    def test_values(self):
        self.assertAlmostEqual(mle.loglik_gumbel(record(1, 0), [1, 0, 0]), -1)
        self.assertAlmostEqual(
            mle.loglik_gumbel(record(1, math.log(2)), [1, 0, 0]),
            -math.log(2) - 0.5)
        self.assertAlmostEqual(mle.loglik_gumbel(record(4, 0), [2, 0, 0]), -1)

    def test_raises(self):
        self.assertRaises(
            ValueError, mle.loglik_gumbel, record(0, 1), [1, 0, 0])
        self.assertRaises(
            ValueError, mle.loglik_gumbel, record(1, 1), [0, 0, 0])

    def test_matches_density(self):
        w = np.array([0.5, 0.02, 3.0])
        params = MleParams.from_vector(w).to_canonical()
        for energy, peak in ((10.0, 8.0), (400.0, 100.0), (1e4, 900.0)):
            self.assertAlmostEqual(
                mle.loglik_gumbel(record(energy, peak), w),
                evd.peak_logpdf(peak, energy, params), delta=1e-10)


class TestLoglikFw(unittest.TestCase):

    def test_values(self):
        self.assertAlmostEqual(mle.loglik_fw(record(1, 0), [1, 0, 0, 1]), -1)
        self.assertAlmostEqual(
            mle.loglik_fw(record(1, 1), [1, 0, 0, 1]),
            -0.5 - 2 * math.log(2))

    def test_gumbel_limit(self):
        for peak in (-1.0, 0.0, 2.0):
            self.assertAlmostEqual(
                mle.loglik_fw(record(1, peak), [1, 0, 0, 1e-8]),
                mle.loglik_gumbel(record(1, peak), [1, 0, 0]), delta=1e-6)

    def test_matches_density(self):
        for gamma in (0.4, -0.3):
            w = np.array([0.5, 0.02, 3.0, gamma])
            params = MleParams.from_vector(w).to_canonical()
            for energy, peak in ((10.0, 8.0), (400.0, 100.0)):
                self.assertAlmostEqual(
                    mle.loglik_fw(record(energy, peak), w),
                    evd.peak_logpdf(peak, energy, params), delta=1e-10)

    def test_infeasible(self):
        with self.assertRaises(mle.InfeasibleRecordError) as context:
            mle.loglik_fw(record(1, -2, 'x17'), [1, 0, 0, 1])
        self.assertEqual(context.exception.customer_id, 'x17')

    def test_zero_gamma(self):
        self.assertRaises(ValueError, mle.loglik_fw, record(1, 0), [1, 0, 0, 0])


class TestLoglikFuzzyGumbel(unittest.TestCase):

    def test_zero_gamma(self):
        for peak in (-2.0, 0.0, 1.0, 5.0):
            self.assertEqual(
                mle.loglik_fgumbel(record(1, peak), [1, 0, 0, 0]),
                mle.loglik_gumbel(record(1, peak), [1, 0, 0]))

    def test_close_to_exact(self):
        for gamma, peak in ((1e-2, 1.0), (-1e-2, -1.0)):
            w = [1, 0, 0, gamma]
            self.assertAlmostEqual(
                mle.loglik_fgumbel(record(1, peak), w),
                mle.loglik_fw(record(1, peak), w), delta=1e-5)

    def test_taylor_fidelity(self):
        peaks = np.linspace(-1.2, 2.0, 65)
        records = profiles.Records.from_arrays(
            range(len(peaks)), np.ones(len(peaks)), peaks)
        for gamma in (-1e-2, -4e-3, 4e-3, 1e-2):
            w = [1, 0, 0, gamma]
            np.testing.assert_allclose(
                mle.loglik_fgumbel(records, w), mle.loglik_fw(records, w),
                rtol=0, atol=1e-5)

    def test_taylor_error_far_tail(self):
        """far in the lower tail the second order expansion drifts
        away from the exact generalised extreme value likelihood
        """
        w = [1, 0, 0, 1e-2]
        error = abs(mle.loglik_fgumbel(record(1, -6.0), w) -
                    mle.loglik_fw(record(1, -6.0), w))
        self.assertGreater(error, 1e-2)

    def test_outside_region(self):
        self.assertRaises(
            ValueError, mle.loglik_fgumbel, record(1, 0), [1, 0, 0, 0.02])


class TestLoglikSafe(unittest.TestCase):

    def test_interior(self):
        w = [1, 0, 0, 1]
        self.assertEqual(
            mle.loglik_fw_safe(record(1, -0.5), w),
            mle.loglik_fw(record(1, -0.5), w))

    def test_clamped(self):
        w = [1, 0, 0, 1]
        value = mle.loglik_fw_safe(record(1, -1.5), w)
        self.assertAlmostEqual(value / -1e20, 1, places=12)
        self.assertEqual(mle.loglik_fw_safe(record(1, -1.0), w), value)


class TestAnll(unittest.TestCase):

    def test_one_record(self):
        self.assertAlmostEqual(mle.anll('Gumbel', [1, 0, 0], [record(1, 0)]), 1)

    def test_duplicated(self):
        once = [record(1, 0.3)]
        twice = [record(1, 0.3), record(1, 0.3, 'b')]
        self.assertAlmostEqual(
            mle.anll('Gumbel', [1, 0, 0], once),
            mle.anll('Gumbel', [1, 0, 0], twice))
        self.assertAlmostEqual(
            2 * mle.total_nll('Gumbel', [1, 0, 0], once),
            mle.total_nll('Gumbel', [1, 0, 0], twice))

    def test_infeasible_record_named(self):
        records = [record(1, 0, 'ok'), record(1, -5, 'bad')]
        with self.assertRaises(mle.InfeasibleRecordError) as context:
            mle.anll('Frechet', [1, 0, 0, 0.5], records)
        self.assertEqual(context.exception.customer_id, 'bad')
        self.assertEqual(context.exception.index, 1)

    def test_permutation(self):
        rng = np.random.default_rng(1)
        records = profiles.Records.from_arrays(
            range(50), rng.uniform(1, 100, 50), rng.uniform(0, 10, 50))
        order = rng.permutation(50)
        w = [0.5, 0.01, 0.2, 0.005]
        self.assertAlmostEqual(
            mle.anll('f-Gumbel', w, records),
            mle.anll('f-Gumbel', w, records[order]), places=12)


class TestMleParams(unittest.TestCase):

    def test_round_trip(self):
        params = evd.CanonicalParams(0.05, 4.0, 2.0, 0.3)
        mle_params = MleParams.from_canonical(params)
        self.assertListEqual(
            mle_params.vector.tolist(), [0.25, 0.0125, 0.5, 0.3])
        back = mle_params.to_canonical()
        for name in ('theta0', 'scale_a', 'loc_b', 'gamma'):
            self.assertAlmostEqual(getattr(back, name), getattr(params, name))

    def test_gumbel_vector(self):
        params = evd.CanonicalParams(0.05, 4.0, 2.0)
        self.assertEqual(
            len(MleParams.from_canonical(params, with_gamma=False).vector), 3)

    def test_w0_positive(self):
        self.assertRaises(
            ValueError, MleParams(0, 0, 0, 0.1).to_canonical)


class TestFitMle(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.gumbel_data = experiments.synth_records(
            experiments.SynthConfig(base='exponential', n=2000, seed=11))
        cls.pareto_data = experiments.synth_records(
            experiments.SynthConfig(base='pareto(2)', n=2000, seed=12))
        cls.gumbel = mle.fit_mle('Gumbel', cls.gumbel_data, config=FAST)
        cls.frechet = mle.fit_mle('Frechet', cls.pareto_data, config=FAST)

    def test_recovers_theta0(self):
        self.assertAlmostEqual(
            self.gumbel.params.theta0, 0.05, delta=0.05 * 0.05)

    def test_recovers_gamma(self):
        self.assertGreaterEqual(self.frechet.gamma, 0.35)
        self.assertLessEqual(self.frechet.gamma, 0.65)

    def test_feasible(self):
        self.assertGreater(self.frechet.margin, 0)
        self.assertGreater(
            mle.feasibility_margin(self.frechet.w, self.pareto_data), 0)

    def test_train_anll_exact(self):
        self.assertAlmostEqual(
            self.frechet.train_anll,
            mle.anll('Frechet', self.frechet.w, self.pareto_data))
        self.assertAlmostEqual(
            self.frechet.total_nll,
            len(self.pareto_data) * self.frechet.train_anll, places=6)

    def test_not_worse_than_start(self):
        start = mle.moment_start('Gumbel', self.gumbel_data)
        self.assertLessEqual(
            self.gumbel.train_anll,
            mle.anll('Gumbel', start, self.gumbel_data))

    def test_fuzzy_nests_gumbel(self):
        fuzzy = mle.fit_mle(
            'f-Gumbel', self.gumbel_data, config=FAST,
            warm_starts=[np.append(self.gumbel.w, 0.0)])
        self.assertLessEqual(fuzzy.train_anll, self.gumbel.train_anll + 1e-6)

    def test_reverse_weibull_feasible(self):
        fit = mle.fit_mle('r-Weibull', self.gumbel_data, config=FAST)
        self.assertGreater(fit.margin, 0)
        self.assertLessEqual(fit.gamma, -1e-2)

    def test_test_record_outside_support(self):
        outlier = [record(1e12, 0.0)]
        self.assertRaises(
            mle.InfeasibleRecordError, self.frechet.anll, outlier)

    def test_quantile_uses_canonical(self):
        self.assertAlmostEqual(
            self.frechet.quantile(0.5, 1e4),
            evd.peak_qf(0.5, 1e4, self.frechet.params))

    def test_rejects_c4(self):
        self.assertRaises(ValueError, mle.fit_mle, 'C4', self.gumbel_data)

    def test_to_dict(self):
        data = self.frechet.to_dict()
        self.assertEqual(data['method'], 'MLE')
        self.assertEqual(data['formulation'], 'Fréchet')
        self.assertGreater(data['feasibility_margin'], 0)


class TestMleReplicates(unittest.TestCase):

    def test_theta0_mean(self):
        estimates = []
        for seed in range(5):
            records = experiments.synth_records(experiments.SynthConfig(
                base='exponential', n=2000, seed=300 + seed))
            estimates.append(
                mle.fit_mle('Gumbel', records, seed=seed).params.theta0)
        self.assertAlmostEqual(np.mean(estimates), 0.05, delta=0.05 * 0.05)
