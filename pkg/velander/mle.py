"""Maximum likelihood fits of the peak load distribution.

The likelihood is written in the parameters

    w = (1/A, theta0/A, B/A, gamma)

so the standardised peak load of customer i is linear in w:
``z_i = w0*P_i/sqrt(E_i) - w1*sqrt(E_i) - w2``. Frechet and r-Weibull
fits are restricted to the set where ``1 + gamma*z_i > 0`` for every
training record; during optimisation the clamped (safe) likelihood is
used, reported values always use the exact formulas.
"""
import logging
import typing
from dataclasses import dataclass

import numpy as np

from velander import evd, mqr, opt, profiles
from velander.evd import GAMMA_TH, CanonicalParams, Formulation

log = logging.getLogger(__name__)

#: clamp of 1 + gamma*z in the safe likelihood
EPS_TH = 1e-20
#: geometric shrink of |gamma| when repairing a start
SHRINK = 0.5
MAX_SHRINK_STEPS = 60
#: smallest 1 + gamma*z left by the location shift of a start
REPAIR_MARGIN = 0.5

START_GAMMA = {
    Formulation.GUMBEL: None,
    Formulation.FUZZY_GUMBEL: 0.0,
    Formulation.FRECHET: 0.1,
    Formulation.REVERSE_WEIBULL: -0.1,
}


class InfeasibleRecordError(Exception):

    def __init__(self, message: str, customer_id: str = None,
                 index: int = None):
        """This exception will be raised if a record lies outside the
        support of a fitted Frechet or r-Weibull model

        :param message: Description of the failed criteria
        :type message: str
        :param customer_id: id of the first offending record
        :type customer_id: str
        :param index: position of the first offending record
        :type index: int
        """
        self.customer_id = customer_id
        self.index = index
        super().__init__(message)


@dataclass(frozen=True)
class MleParams:
    """Likelihood parameters w0 = 1/A, w1 = theta0/A, w2 = B/A, w3 = gamma
    (None for Gumbel)"""

    w0: float
    w1: float
    w2: float
    w3: typing.Optional[float] = None

    @classmethod
    def from_vector(cls, w) -> 'MleParams':
        w = [float(v) for v in w]
        return cls(*w)

    @classmethod
    def from_canonical(cls, params: CanonicalParams,
                       with_gamma: bool = True) -> 'MleParams':
        if not params.scale_a > 0:
            raise ValueError('scale A must be positive')
        inverse = 1 / params.scale_a
        return cls(inverse, params.theta0 * inverse, params.loc_b * inverse,
                   params.gamma if with_gamma else None)

    @property
    def vector(self) -> np.ndarray:
        values = [self.w0, self.w1, self.w2]
        if self.w3 is not None:
            values.append(self.w3)
        return np.array(values)

    def to_canonical(self) -> CanonicalParams:
        """Invert the map, defined for w0 > 0"""
        if not self.w0 > 0:
            raise ValueError('w0 must be positive')
        return CanonicalParams(
            self.w1 / self.w0, 1 / self.w0, self.w2 / self.w0,
            self.w3 or 0.0)


def _columns(record):
    energy = np.asarray(record.energy, dtype=float)
    peak = np.asarray(record.peak, dtype=float)
    if np.any(~(energy > 0)):
        raise ValueError('energy must be positive')
    return energy, peak


def _z(w, energy, peak):
    root = np.sqrt(energy)
    return w[0] * peak / root - w[1] * root - w[2]


def _check_w0(w):
    if not w[0] > 0:
        raise ValueError('w0 must be positive')


def _gumbel_terms(w, energy, z):
    with np.errstate(over='ignore'):
        return np.log(w[0]) - 0.5 * np.log(energy) - z - np.exp(-z)


def _fw_terms(w, energy, log_t):
    gamma = w[3]
    with np.errstate(over='ignore'):
        return (np.log(w[0]) - 0.5 * np.log(energy) -
                np.exp(-log_t / gamma) - (1 + 1 / gamma) * log_t)


def _fgumbel_terms(w, energy, z):
    gamma = w[3]
    with np.errstate(over='ignore'):
        decay = np.exp(-z)
        first = -z ** 2 / 2 + z ** 2 * decay / 2 + z
        second = (z ** 4 * decay / 8 + z ** 3 / 3 - z ** 3 * decay / 3 -
                  z ** 2 / 2)
        return _gumbel_terms(w, energy, z) - gamma * first - \
            gamma ** 2 * second


def loglik_gumbel(record, w):
    """Gumbel log-likelihood ln w0 - ln(E)/2 - z - exp(-z)

    Arguments:
        record {CustomerRecord} -- a record, or Records for one value per
            customer
        w {np.ndarray} -- (w0, w1, w2[, w3]), w3 is ignored

    Raises:
        ValueError -- if E <= 0 or w0 <= 0

    Returns:
        float -- the log-likelihood
    """

    w = np.asarray(w, dtype=float)
    energy, peak = _columns(record)
    _check_w0(w)
    return evd._out(_gumbel_terms(w, energy, _z(w, energy, peak)))


def _feasibility_error(record, t, gamma):
    bad = int(np.flatnonzero(np.atleast_1d(t) <= 0)[0])
    ids = np.atleast_1d(getattr(record, 'customer_id', None))
    customer = None if ids[0] is None else str(ids[bad])
    return InfeasibleRecordError(
        'record {} (customer {}) lies outside the support: '
        '1 + gamma*z = {:.6g} <= 0 for gamma={}'.format(
            bad, customer, float(np.atleast_1d(t)[bad]), gamma),
        customer, bad
    )


def loglik_fw(record, w):
    """Exact Frechet / r-Weibull log-likelihood
    ln w0 - ln(E)/2 - t^(-1/gamma) - (1 + 1/gamma) ln t, t = 1 + gamma*z

    :raises ValueError: E <= 0, w0 <= 0 or gamma = 0
    :raises InfeasibleRecordError: t <= 0 for some record
    """

    w = np.asarray(w, dtype=float)
    energy, peak = _columns(record)
    _check_w0(w)
    if w[3] == 0:
        raise ValueError('gamma must be non-zero')
    z = _z(w, energy, peak)
    t = 1 + w[3] * z
    if np.any(t <= 0):
        raise _feasibility_error(record, t, w[3])
    return evd._out(_fw_terms(w, energy, np.log1p(w[3] * z)))


def loglik_fgumbel(record, w, gamma_th: float = GAMMA_TH):
    """Fuzzy-Gumbel log-likelihood, the degree-2 Taylor polynomial in
    gamma of the exact log-likelihood around gamma = 0

    :raises ValueError: |gamma| > gamma_th, E <= 0 or w0 <= 0
    """

    w = np.asarray(w, dtype=float)
    if abs(w[3]) > gamma_th:
        raise ValueError(
            'fuzzy-Gumbel requires |gamma| <= {}, got {}'.format(
                gamma_th, w[3]))
    energy, peak = _columns(record)
    _check_w0(w)
    return evd._out(_fgumbel_terms(w, energy, _z(w, energy, peak)))


def _safe_log_t(w, z, eps_th):
    t = 1 + w[3] * z
    with np.errstate(invalid='ignore'):
        return np.where(t > eps_th, np.log1p(w[3] * z), np.log(eps_th))


def loglik_fw_safe(record, w, eps_th: float = EPS_TH):
    """:func:`loglik_fw` with 1 + gamma*z replaced by
    max(1 + gamma*z, eps_th), defined everywhere"""

    w = np.asarray(w, dtype=float)
    energy, peak = _columns(record)
    _check_w0(w)
    if w[3] == 0:
        raise ValueError('gamma must be non-zero')
    z = _z(w, energy, peak)
    return evd._out(_fw_terms(w, energy, _safe_log_t(w, z, eps_th)))


def loglik(formulation, records, w, gamma_th: float = GAMMA_TH):
    """Exact per-record log-likelihood of any parametric formulation"""

    formulation = Formulation.parse(formulation)
    records = profiles.check_fit_records(records, 1)
    if formulation is Formulation.GUMBEL:
        return np.asarray(loglik_gumbel(records, w))
    if formulation is Formulation.FUZZY_GUMBEL:
        return np.asarray(loglik_fgumbel(records, w, gamma_th))
    if formulation in (Formulation.FRECHET, Formulation.REVERSE_WEIBULL):
        return np.asarray(loglik_fw(records, w))
    raise ValueError('C4 has no likelihood')


def anll(formulation, w, records, gamma_th: float = GAMMA_TH) -> float:
    """Average negative log-likelihood with the exact formulas

    :raises ValueError: empty records or non-positive energy
    :raises InfeasibleRecordError: a record lies outside the support of
        a Frechet or r-Weibull model
    """

    return float(-np.mean(loglik(formulation, records, w, gamma_th)))


def total_nll(formulation, w, records, gamma_th: float = GAMMA_TH) -> float:
    """Negative log-likelihood summed over records"""

    return float(-np.sum(loglik(formulation, records, w, gamma_th)))


def feasibility_margin(w, records) -> float:
    """min over records of 1 + gamma*z_i; positive inside the feasible
    set of a Frechet or r-Weibull model"""

    w = np.asarray(w, dtype=float)
    energy, peak = _columns(profiles.as_records(records))
    return float(np.min(1 + w[3] * _z(w, energy, peak)))


def mle_bounds(formulation, gamma_th: float = GAMMA_TH) -> opt.Bounds:
    """Box of the likelihood parameters, closed at its finite ends"""

    formulation = Formulation.parse(formulation)
    inf = np.inf
    lower, upper = [0, 0, -inf], [inf, inf, inf]
    gamma = {
        Formulation.GUMBEL: None,
        Formulation.FUZZY_GUMBEL: (-gamma_th, gamma_th),
        Formulation.FRECHET: (gamma_th, inf),
        Formulation.REVERSE_WEIBULL: (-inf, -gamma_th),
    }
    if formulation not in gamma:
        raise ValueError('C4 has no likelihood')
    if gamma[formulation] is not None:
        lower.append(gamma[formulation][0])
        upper.append(gamma[formulation][1])
    return opt.Bounds(lower, upper)


class _FeasibleSet:
    """1 + gamma*z_i > 0 for every record"""

    def __init__(self, energy, peak):
        self.energy = energy
        self.peak = peak

    def __call__(self, w):
        return bool(np.all(1 + w[3] * _z(w, self.energy, self.peak) > 0))


class _NllObjective:

    def __init__(self, formulation, energy, peak, gamma_th, eps_th):
        self.formulation = formulation
        self.energy = energy
        self.peak = peak
        self.gamma_th = gamma_th
        self.eps_th = eps_th

    def __call__(self, w):
        if not w[0] > 0:
            return np.inf
        z = _z(w, self.energy, self.peak)
        if self.formulation is Formulation.GUMBEL:
            terms = _gumbel_terms(w, self.energy, z)
        elif self.formulation is Formulation.FUZZY_GUMBEL:
            terms = _fgumbel_terms(w, self.energy, z)
        else:
            terms = _fw_terms(
                w, self.energy, _safe_log_t(w, z, self.eps_th))
        return float(-np.mean(terms))


def _repair(w, formulation, energy, peak, gamma_th):
    """Move a start into the feasible set: shrink |gamma| towards
    gamma_th, then shift w2 until every 1 + gamma*z >= REPAIR_MARGIN"""

    w = np.array(w, dtype=float)
    feasible = _FeasibleSet(energy, peak)
    sign = 1.0 if formulation is Formulation.FRECHET else -1.0
    for _ in range(MAX_SHRINK_STEPS):
        if feasible(w) or abs(w[3]) <= gamma_th:
            break
        w[3] = sign * max(abs(w[3]) * SHRINK, gamma_th)
    if feasible(w):
        return w
    z = _z(w, energy, peak)
    bound = (REPAIR_MARGIN - 1) / w[3]
    # shifting w2 moves every z by the same amount
    if formulation is Formulation.FRECHET:
        w[2] -= float(np.max(bound - z))
    else:
        w[2] += float(np.max(z - bound))
    if not feasible(w):
        raise opt.InfeasibleStartError(
            'could not move the {} start into the feasible set'.format(
                formulation.label))
    return w


def moment_start(formulation, records, gamma_th: float = GAMMA_TH):
    """Moment start of :func:`velander.mqr.moment_params` mapped into the
    likelihood parameters and projected onto the box"""

    formulation = Formulation.parse(formulation)
    base = mqr.moment_params(records)
    gamma = START_GAMMA[formulation]
    params = MleParams.from_canonical(base, with_gamma=False)
    w = params.vector
    if gamma is not None:
        w = np.append(w, gamma)
    return mle_bounds(formulation, gamma_th).project(w)


@dataclass
class MleFit:
    """A maximum likelihood fit

    :param formulation: the formulation fitted
    :param w: likelihood parameters
    :param params: canonical parameters
    :param train_anll: exact training ANLL
    :param total_nll: exact training negative log-likelihood
    :param result: optimiser diagnostics
    """

    method: typing.ClassVar[str] = 'MLE'

    formulation: Formulation
    w: np.ndarray
    params: CanonicalParams
    train_anll: float
    total_nll: float
    result: opt.OptimResult
    margin: typing.Optional[float] = None
    gamma_th: float = GAMMA_TH
    eps_th: float = EPS_TH

    @property
    def gamma(self) -> typing.Optional[float]:
        return self.params.gamma if self.formulation.has_gamma else None

    @property
    def mle_params(self) -> MleParams:
        return MleParams.from_vector(self.w)

    def quantile(self, tau, energy):
        """Quantile of the fitted peak load distribution"""
        if self.formulation is Formulation.FUZZY_GUMBEL:
            return evd.fgumbel_qf_taylor(tau, energy, self.params,
                                         self.gamma_th)
        return evd.peak_qf(tau, energy, self.params)

    def beta(self, tau):
        if self.formulation is Formulation.FUZZY_GUMBEL:
            return evd.fgumbel_beta_tau(tau, self.params, self.gamma_th)
        return evd.beta_tau(tau, self.params)

    def anll(self, records) -> float:
        """Exact ANLL on other records, see :func:`anll`"""
        return anll(self.formulation, self.w, records, self.gamma_th)

    def to_dict(self) -> dict:
        return {
            'method': self.method,
            'formulation': self.formulation.label,
            'w': [float(v) for v in self.w],
            'params': self.params.to_dict(),
            'train_anll': float(self.train_anll),
            'total_nll': float(self.total_nll),
            'feasibility_margin': self.margin,
            'gamma_th': self.gamma_th,
            'eps_th': self.eps_th,
            'optimizer': self.result.to_dict(),
        }


def fit_mle(
    formulation,
    records,
    seed: int = 0,
    config: opt.OptimConfig = None,
    gamma_th: float = GAMMA_TH,
    eps_th: float = EPS_TH,
    warm_starts: typing.Sequence = None,
    jobs: int = 1
) -> MleFit:
    """Minimise the training ANLL of a parametric formulation

    Frechet and r-Weibull starts are moved into the feasible set before
    optimising; a fuzzy-Gumbel fit also starts from the Gumbel optimum
    with gamma = 0.

    :param formulation: Gumbel, f-Gumbel, Frechet or r-Weibull
    :param records: training records
    :param seed: master seed
    :param config: optimiser settings
    :param gamma_th: bound of the extreme value index
    :param eps_th: clamp of the safe likelihood
    :param warm_starts: extra start vectors tried first
    :param jobs: worker threads for the multistart
    :raises ValueError: C4 requested, too few records
    :raises InfeasibleStartError: no start could be made feasible
    :rtype: MleFit
    """

    formulation = Formulation.parse(formulation)
    if formulation not in START_GAMMA:
        raise ValueError('C4 has no likelihood')
    config = config or opt.OptimConfig()
    bounds = mle_bounds(formulation, gamma_th)
    records = profiles.check_fit_records(records, bounds.dim + 1)
    energy, peak = records.energy, records.peak

    if formulation is Formulation.FUZZY_GUMBEL and warm_starts is None:
        gumbel = fit_mle(Formulation.GUMBEL, records, seed, config,
                         gamma_th, eps_th, jobs=jobs)
        warm_starts = [np.append(gumbel.w, 0.0)]
    starts = [bounds.project(w) for w in warm_starts or []]
    starts += opt.perturbed_starts(
        moment_start(formulation, records, gamma_th), bounds,
        config.n_starts, seed,
        gamma_index=3 if formulation.has_gamma else None
    )

    fw = formulation in (Formulation.FRECHET, Formulation.REVERSE_WEIBULL)
    if fw:
        bounds = bounds.with_feasible(_FeasibleSet(energy, peak))
        repaired = []
        for i, start in enumerate(starts):
            try:
                repaired.append(
                    _repair(start, formulation, energy, peak, gamma_th))
            except opt.InfeasibleStartError as error:
                log.info('skipping start %d: %s', i, error)
        starts = repaired or starts

    log.info('MLE %s: fitting %d records from %d starts',
             formulation.label, len(records), len(starts))
    objective = _NllObjective(formulation, energy, peak, gamma_th, eps_th)
    result = opt.multistart_minimize(
        objective, starts, bounds, seed, config, jobs)

    w = result.x
    margin = feasibility_margin(w, records) if fw else None
    if fw and not margin > 0:
        raise InfeasibleRecordError(
            'fitted {} model leaves a training record outside its '
            'support'.format(formulation.label))
    fit = MleFit(
        formulation=formulation,
        w=w,
        params=MleParams.from_vector(w).to_canonical(),
        train_anll=anll(formulation, w, records, gamma_th),
        total_nll=total_nll(formulation, w, records, gamma_th),
        result=result,
        margin=margin,
        gamma_th=gamma_th,
        eps_th=eps_th
    )
    log.info('MLE %s: ANLL=%.8g gamma=%s nfev=%d', formulation.label,
             fit.train_anll, fit.gamma, result.nfev)
    return fit
