"""Synthetic data, k-fold cross-validation and curve exports.

Synthetic customers follow the peak load model directly: for energy E
the loads at K peak slots are ``theta0*E + theta1*sqrt(E)*F_k`` with
i.i.d. base variates F_k, and the peak is their maximum.
"""
import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.model_selection import KFold

from velander import evd, inference, mle, mqr, opt, profiles
from velander.evd import GAMMA_TH, CanonicalParams, Formulation

log = logging.getLogger(__name__)

BASES = ('gumbel', 'exponential', 'pareto', 'uniform')
MODES = ('records', 'profiles')
METHODS = ('MQR', 'MLE')
INTERVAL_MINUTES = 15

Fit = typing.Union[mqr.MqrFit, mle.MleFit]


def parse_base(text: str) -> typing.Tuple[str, typing.Optional[float]]:
    """Parse a base distribution tag such as 'exponential' or
    'pareto(2)'

    :raises ValueError: unknown tag or non-positive Pareto shape
    """

    text = str(text).strip().lower()
    shape = None
    if text.startswith('pareto'):
        rest = text[len('pareto'):].strip()
        if rest:
            if not (rest.startswith('(') and rest.endswith(')')):
                raise ValueError('expected pareto(shape), got {!r}'.format(
                    text))
            shape = float(rest[1:-1])
        else:
            shape = 2.0
        if not shape > 0:
            raise ValueError('pareto shape must be positive')
        return 'pareto', shape
    if text not in BASES:
        raise ValueError('unknown base distribution {!r}, expected one of '
                         '{}'.format(text, ', '.join(BASES)))
    return text, None


def parse_method(text: str) -> typing.List[str]:
    """'mqr', 'mle' or 'both'"""

    text = str(text).strip().upper()
    if text == 'BOTH':
        return list(METHODS)
    if text not in METHODS:
        raise ValueError('unknown method {!r}, expected mqr, mle or '
                         'both'.format(text))
    return [text]


def norming_constants(base: str, K: int, shape: float = None):
    """Norming constants (a_K, b_K) and the extreme value index of the
    maximum of K base variates

    :param base: base distribution tag
    :param K: number of variates
    :param shape: Pareto shape
    :return: (a_K, b_K, gamma)
    """

    if K < 1:
        raise ValueError('K must be at least 1')
    name, parsed = parse_base(base)
    shape = shape or parsed
    if name in ('gumbel', 'exponential'):
        return 1.0, math.log(K), 0.0
    if name == 'pareto':
        gamma = 1 / shape
        return gamma * K ** gamma, K ** gamma - 1, gamma
    return 1 / K, 1 - 1 / K, -1.0


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic customer population

    :param theta0: linear energy coefficient
    :param theta1: scale of the square-root term
    :param K: number of peak slots
    :param base: 'gumbel', 'exponential', 'pareto(shape)' or 'uniform'
    :param n: number of customers when energies is not given
    :param energy_min: lower end of the log-uniform energies
    :param energy_max: upper end of the log-uniform energies
    :param energies: explicit energies, overriding n
    :param seed: random seed
    :param mode: 'records' or 'profiles'
    :param T: profile length in profiles mode
    """

    theta0: float = 0.05
    theta1: float = 1.0
    K: int = 50
    base: str = 'exponential'
    n: int = 2000
    energy_min: float = 1e2
    energy_max: float = 1e6
    energies: typing.Optional[typing.Tuple[float, ...]] = None
    seed: int = 0
    mode: str = 'records'
    T: typing.Optional[int] = None

    def __post_init__(self):
        parse_base(self.base)
        if self.theta0 < 0:
            raise ValueError('theta0 cannot be negative')
        if not self.theta1 > 0:
            raise ValueError('theta1 must be positive')
        if self.K < 1:
            raise ValueError('K must be at least 1')
        if self.mode not in MODES:
            raise ValueError('mode must be one of {}'.format(MODES))
        if self.mode == 'profiles' and (self.T is None or self.T < self.K):
            raise ValueError('profiles mode requires T >= K')
        if self.energies is not None:
            object.__setattr__(
                self, 'energies', tuple(float(e) for e in self.energies))
            if not all(e > 0 for e in self.energies):
                raise ValueError('energies must be positive')
        elif self.n < 1 or not 0 < self.energy_min <= self.energy_max:
            raise ValueError(
                'need n >= 1 and 0 < energy_min <= energy_max')

    @property
    def base_name(self) -> str:
        return parse_base(self.base)[0]

    @property
    def shape(self) -> typing.Optional[float]:
        return parse_base(self.base)[1]

    def limit_params(self) -> CanonicalParams:
        """The limiting model (theta0, theta1*a_K, theta1*b_K, gamma)"""
        a, b, gamma = norming_constants(self.base, self.K)
        return CanonicalParams(
            self.theta0, self.theta1 * a, self.theta1 * b, gamma)


def _energies(config, rng):
    if config.energies is not None:
        return np.array(config.energies)
    low, high = np.log(config.energy_min), np.log(config.energy_max)
    return np.exp(rng.uniform(low, high, config.n))


def _base_variates(config, rng, size):
    name = config.base_name
    if name == 'gumbel':
        return rng.gumbel(size=size)
    if name == 'exponential':
        return rng.exponential(size=size)
    if name == 'pareto':
        # shifted to start at 0
        return (1 - rng.random(size)) ** (-1 / config.shape) - 1
    return rng.random(size)


def _slot_loads(config):
    rng = np.random.default_rng(config.seed)
    energy = _energies(config, rng)
    variates = _base_variates(config, rng, (len(energy), config.K))
    loads = (config.theta0 * energy[:, None] +
             config.theta1 * np.sqrt(energy)[:, None] * variates)
    return energy, loads


def _customer_ids(n):
    width = max(5, len(str(n)))
    return ['c{:0{}d}'.format(i, width) for i in range(n)]


def synth_records(config: SynthConfig) -> profiles.Records:
    """Draw one record per customer, deterministic per seed

    :rtype: profiles.Records
    """

    energy, loads = _slot_loads(config)
    log.debug('synthesised %d records (%s, K=%d)', len(energy),
              config.base, config.K)
    return profiles.Records.from_arrays(
        _customer_ids(len(energy)), energy, loads.max(axis=1))


def profile_from_slots(slots, energy: float, T: int,
                       customer_id: str = 'c00000',
                       interval_minutes: int = INTERVAL_MINUTES
                       ) -> profiles.LoadProfile:
    """Place K slot loads at evenly spread fixed positions of a length T
    profile and fill the rest with a constant baseline so the readings
    sum to *energy*

    :raises ValueError: K > T or the slots alone exceed the energy
    """

    slots = np.asarray(slots, dtype=float)
    K = len(slots)
    if K > T:
        raise ValueError('K={} peak slots do not fit in T={}'.format(K, T))
    positions = np.round(np.linspace(0, T - 1, K)).astype(int)
    readings = np.zeros(T)
    if T > K:
        baseline = (energy - slots.sum()) / (T - K)
        if baseline < 0:
            raise ValueError(
                'peak slots of {} sum to {:.6g}, above the energy '
                '{:.6g}'.format(customer_id, slots.sum(), energy))
        readings[:] = baseline
    readings[positions] = slots
    return profiles.LoadProfile(customer_id, interval_minutes, readings)


def synth_profiles(config: SynthConfig) -> typing.List[profiles.LoadProfile]:
    """Profiles whose reduction reproduces the synthetic energies"""

    if config.mode != 'profiles':
        raise ValueError('synth_profiles requires mode="profiles"')
    energy, loads = _slot_loads(config)
    ids = _customer_ids(len(energy))
    return [
        profile_from_slots(loads[i], energy[i], config.T, ids[i])
        for i in range(len(energy))
    ]


def surface_records(params: CanonicalParams, energies, tau: float
                    ) -> profiles.Records:
    """Noiseless records lying on the tau-quantile surface of a model"""

    energies = np.asarray(energies, dtype=float)
    peak = np.atleast_1d(evd.peak_qf(tau, energies, params))
    return profiles.Records.from_arrays(
        _customer_ids(len(energies)), energies, peak)


def scaled_maxima(records, theta0: float, theta1: float, a_n: float,
                  b_n: float) -> np.ndarray:
    """((P - theta0*E)/(theta1*sqrt(E)) - b_n)/a_n, standard extreme value
    distributed in the limit"""

    records = profiles.as_records(records)
    standard = (records.peak - theta0 * records.energy) / \
        (theta1 * np.sqrt(records.energy))
    return (standard - b_n) / a_n


def kfold_split(n: int, k: int, seed: int = 0) -> typing.List[np.ndarray]:
    """Seeded shuffle of range(n) into k folds whose sizes differ by at
    most one

    :raises ValueError: k < 2 or n < k
    :return: sorted index arrays, one per fold
    """

    if k < 2:
        raise ValueError('k must be at least 2')
    if n < k:
        raise ValueError('cannot split {} records into {} folds'.format(n, k))
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    return [np.sort(test) for _, test in splitter.split(np.arange(n))]


def _seed(*entropy) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1)[0])


def _ordered(formulations):
    # Gumbel first, it warm-starts the fuzzy-Gumbel fit
    parsed = {Formulation.parse(f) for f in formulations}
    return [f for f in Formulation if f in parsed]


def fit_method(method: str, formulations, records, seed: int = 0,
               fold: int = 0, grid: mqr.QuantileGrid = None,
               config: opt.OptimConfig = None, gamma_th: float = GAMMA_TH,
               eps_th: float = mle.EPS_TH, jobs: int = 1
               ) -> typing.Dict[Formulation, Fit]:
    """Fit every formulation with one method; formulations without a
    counterpart in the method (C4 under MLE) are left out

    Seeds are drawn from (seed, fold, formulation position).
    """

    fits = {}
    for formulation in _ordered(formulations):
        position = list(Formulation).index(formulation)
        fit_seed = _seed(seed, fold, position)
        gumbel = fits.get(Formulation.GUMBEL)
        warm = [np.append(gumbel.w, 0.0)] if gumbel is not None and \
            formulation is Formulation.FUZZY_GUMBEL else None
        if method == 'MQR':
            if formulation is Formulation.C4:
                fits[formulation] = mqr.fit_c4(records, grid, fit_seed, config)
            else:
                fits[formulation] = mqr.fit_parametric(
                    formulation, records, grid, fit_seed, config, gamma_th,
                    warm, jobs)
        elif formulation is not Formulation.C4:
            fits[formulation] = mle.fit_mle(
                formulation, records, fit_seed, config, gamma_th, eps_th,
                warm, jobs)
    return fits


def fit_full(records, formulations, methods=METHODS, seed: int = 0,
             grid: mqr.QuantileGrid = None, config: opt.OptimConfig = None,
             gamma_th: float = GAMMA_TH, eps_th: float = mle.EPS_TH,
             jobs: int = 1) -> typing.List[Fit]:
    """Fit every (method, formulation) pair on the entire record set"""

    records = profiles.as_records(records)
    fits = []
    for method in methods:
        fitted = fit_method(method, formulations, records, seed, 0, grid,
                            config, gamma_th, eps_th, jobs)
        fits.extend(fitted.values())
    return fits


@dataclass
class FoldResult:
    """Train and test metric of one fit on one fold"""

    fold: int
    method: str
    formulation: Formulation
    train: float
    test: float
    gamma: typing.Optional[float] = None
    diagnostic: typing.Optional[str] = None

    def to_dict(self) -> dict:
        return {
            'fold': self.fold,
            'method': self.method,
            'formulation': self.formulation.label,
            'train': self.train,
            'test': self.test,
            'gamma': self.gamma,
            'diagnostic': self.diagnostic,
        }


@dataclass
class CvReport:
    """Cross-validated training (Tr) and test (Te) metrics per method and
    formulation, APL in kW for MQR and ANLL for MLE"""

    k: int
    seed: int
    folds: typing.List[FoldResult] = field(default_factory=list)
    lrt: typing.Optional[inference.LrtResult] = None
    std_gamma: typing.Optional[float] = None
    full_gamma: typing.Optional[float] = None
    diagnostics: typing.List[str] = field(default_factory=list)

    def summary(self) -> typing.Dict[str, typing.Dict[Formulation, dict]]:
        """Equal-weight fold means per method and formulation"""

        summary = {}
        for method in METHODS:
            rows = {}
            for formulation in Formulation:
                entries = [r for r in self.folds
                           if r.method == method and
                           r.formulation is formulation]
                if not entries:
                    continue
                gammas = [r.gamma for r in entries if r.gamma is not None]
                rows[formulation] = {
                    'train': float(np.mean([r.train for r in entries])),
                    'test': float(np.mean([r.test for r in entries])),
                    'gamma': float(np.mean(gammas)) if gammas else None,
                    'folds': len(entries),
                }
                if method == 'MLE' and formulation is Formulation.FRECHET:
                    rows[formulation]['std_gamma'] = self.std_gamma
            if rows:
                summary[method] = rows
        return summary

    def to_dict(self) -> dict:
        return {
            'k': self.k,
            'seed': self.seed,
            'summary': {
                method: {f.label: row for f, row in rows.items()}
                for method, rows in self.summary().items()
            },
            'folds': [r.to_dict() for r in self.folds],
            'lrt': self.lrt.to_dict() if self.lrt else None,
            'std_gamma': self.std_gamma,
            'full_gamma': self.full_gamma,
            'diagnostics': list(self.diagnostics),
        }

    def to_table(self) -> str:
        """Aligned text tables, one block per method with columns Tr, Te
        and, where estimated, the mean gamma and Std(gamma)"""

        blocks = []
        units = {'MQR': 'APL', 'MLE': 'ANLL'}
        for method, rows in self.summary().items():
            frame = pd.DataFrame.from_dict({
                f.label: {
                    'Tr': row['train'],
                    'Te': row['test'],
                    'γ̂': row['gamma'],
                    'Std(γ̂)': row.get('std_gamma'),
                } for f, row in rows.items()
            }, orient='index')
            frame = frame.dropna(axis=1, how='all')
            text = frame.to_string(
                float_format=lambda v: '{:.6g}'.format(v), na_rep='-')
            blocks.append('{} ({}, {}-fold)\n{}'.format(
                method, units[method], self.k, text))
        if self.lrt is not None:
            blocks.append('LRT Gumbel vs Fréchet: Λ={:.6g} p={:.2e}'.format(
                self.lrt.statistic, self.lrt.p_value))
        return '\n\n'.join(blocks) + '\n'


def _test_metric(method, fit, records, fold):
    if method == 'MQR':
        return fit.apl(records), None
    try:
        return fit.anll(records), None
    except mle.InfeasibleRecordError as error:
        message = 'fold {} {} test ANLL is infinite: {}'.format(
            fold, fit.formulation.label, error)
        log.warning(message)
        return np.inf, message


def _run_fold(fold, train, test, formulations, methods, seed, grid, config,
              gamma_th, eps_th):
    log.info('fold %d: %d train, %d test records', fold, len(train),
             len(test))
    results = []
    for method in methods:
        fits = fit_method(method, formulations, train, seed, fold, grid,
                          config, gamma_th, eps_th)
        for formulation, fit in fits.items():
            train_metric = fit.train_apl if method == 'MQR' else \
                fit.train_anll
            test_metric, diagnostic = _test_metric(method, fit, test, fold)
            results.append(FoldResult(
                fold, method, formulation, float(train_metric),
                float(test_metric), fit.gamma, diagnostic))
    return results


def run_cv(
    records,
    formulations,
    methods=METHODS,
    k: int = 5,
    seed: int = 0,
    grid: mqr.QuantileGrid = None,
    config: opt.OptimConfig = None,
    gamma_th: float = GAMMA_TH,
    eps_th: float = mle.EPS_TH,
    jobs: int = 1,
    inference_summary: bool = True
) -> CvReport:
    """k-fold cross-validation of every (method, formulation) pair

    Each fold is fitted on the other k - 1 folds. With MLE and the
    Frechet formulation requested, the likelihood ratio test and
    Std(gamma) of the Frechet fit on the full record set are added.

    :param records: the record set
    :param formulations: formulations to fit
    :param methods: subset of ('MQR', 'MLE')
    :param k: number of folds
    :param seed: master seed; fold and formulation seeds derive from it
    :param jobs: folds fitted in parallel
    :rtype: CvReport
    """

    records = profiles.as_records(records)
    methods = [m.upper() for m in methods]
    folds = kfold_split(len(records), k, seed)
    everything = np.arange(len(records))
    jobs_results = Parallel(n_jobs=jobs, prefer='threads')(
        delayed(_run_fold)(
            fold, records[np.setdiff1d(everything, test)], records[test],
            formulations, methods, seed, grid, config, gamma_th, eps_th)
        for fold, test in enumerate(folds)
    )
    report = CvReport(k=k, seed=seed)
    for results in jobs_results:
        report.folds.extend(results)
        report.diagnostics.extend(
            r.diagnostic for r in results if r.diagnostic)

    requested = {Formulation.parse(f) for f in formulations}
    if inference_summary and 'MLE' in methods and \
            Formulation.FRECHET in requested:
        report.lrt, _, frechet = inference.likelihood_ratio_test(
            records, seed, config, gamma_th, eps_th, jobs)
        report.full_gamma = frechet.gamma
        try:
            report.std_gamma = inference.fisher_std_gamma(
                records, frechet).std_gamma
        except inference.FisherInformationError as error:
            report.diagnostics.append('Std(gamma) unavailable: {}'.format(
                error))
            log.warning('Std(gamma) unavailable: %s', error)
    return report


def source_label(fit: Fit) -> str:
    """'MQR-C4', 'MLE-Fréchet', ..."""

    return '{}-{}'.format(fit.method, fit.formulation.label)


def quantile_curves(fit: Fit, energies, taus) -> pd.DataFrame:
    """Predicted peak per (tau, energy)

    :raises ValueError: C4 fit queried off its grid
    """

    energies = np.asarray(energies, dtype=float)
    rows = []
    for tau in taus:
        peaks = np.atleast_1d(fit.quantile(float(tau), energies))
        rows.append(pd.DataFrame({
            'tau': float(tau), 'energy': energies, 'predicted_peak': peaks}))
    return pd.concat(rows, ignore_index=True)


def export_quantile_curves(fit: Fit, energies, taus, target) -> pd.DataFrame:
    """Write (tau, energy, predicted_peak) rows as CSV"""

    frame = quantile_curves(fit, energies, taus)
    frame.to_csv(target, index=False, float_format='%.10g')
    return frame


def beta_curves(fits: typing.Sequence[Fit], taus=None) -> pd.DataFrame:
    """beta_tau per fit: C4 at its grid levels, parametric fits over
    *taus* (0.01, 0.02, ..., 0.99 by default)"""

    if taus is None:
        taus = np.round(np.linspace(0.01, 0.99, 99), 12)
    rows = []
    for fit in fits:
        levels = fit.grid.array if fit.formulation is Formulation.C4 \
            else np.asarray(taus, dtype=float)
        rows.append(pd.DataFrame({
            'tau': levels,
            'beta': np.atleast_1d(fit.beta(levels)),
            'source': source_label(fit),
        }))
    if not rows:
        return pd.DataFrame(columns=['tau', 'beta', 'source'])
    return pd.concat(rows, ignore_index=True)


def export_beta_curves(fits: typing.Sequence[Fit], taus, target
                       ) -> pd.DataFrame:
    """Write (tau, beta, source) rows as CSV"""

    frame = beta_curves(fits, taus)
    frame.to_csv(target, index=False, float_format='%.10g')
    return frame
