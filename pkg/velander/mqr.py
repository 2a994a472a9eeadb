"""Multiple quantile regression of peak load on energy consumption.

The fitted quantiles have the Velander form ``alpha*E + beta_tau*sqrt(E)``
and are scored by the average pinball loss (APL) over every customer
and every level of a :class:`QuantileGrid`.

Parameter vectors per formulation (gamma_th = 1e-2 by default):

===============  ===============================  ==========================
formulation      w                                space
===============  ===============================  ==========================
C4               (alpha, beta_1, ..., beta_m)     alpha >= 0, beta monotone
Gumbel           (theta0, A, B)                   R+ x R+ x R
f-Gumbel         (theta0, A, B, gamma)            ... x [-gamma_th, gamma_th]
Frechet          (theta0, A/gamma, B - A/gamma,   R+ x R+ x R x [gamma_th, inf)
                 gamma)
r-Weibull        same as Frechet                  R+ x R- x R x (-inf, -gamma_th]
===============  ===============================  ==========================
"""
import logging
import typing
from dataclasses import dataclass

import numpy as np

from velander import evd, opt, profiles
from velander.evd import GAMMA_TH, CanonicalParams, Formulation

log = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329
#: smallest scale used by the moment start
MIN_SCALE = 1e-8
DEFAULT_GRID = '0.10:0.01:0.90'

# golden-section settings of the C4 outer search
GOLDEN = (np.sqrt(5) - 1) / 2
ALPHA_TOL = 1e-13
MAX_DOUBLINGS = 64
MAX_SECTIONS = 400

PARAMETRIC = (
    Formulation.GUMBEL,
    Formulation.FUZZY_GUMBEL,
    Formulation.FRECHET,
    Formulation.REVERSE_WEIBULL,
)


@dataclass(frozen=True)
class QuantileGrid:
    """Strictly increasing quantile levels in (0, 1)

    :param taus: the levels
    :type taus: typing.Tuple[float, ...]
    """

    taus: typing.Tuple[float, ...]

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        if not taus:
            raise ValueError('quantile grid cannot be empty')
        if not all(0 < t < 1 for t in taus):
            raise ValueError('quantile levels must lie in (0, 1)')
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError('quantile levels must be strictly increasing')
        object.__setattr__(self, 'taus', taus)

    @classmethod
    def parse(cls, spec: str) -> 'QuantileGrid':
        """Parse ``lo:step:hi`` into the closed grid lo, lo+step, ..., hi

        :raises ValueError: malformed spec or non-positive step
        """
        try:
            lo, step, hi = (float(part) for part in str(spec).split(':'))
        except ValueError:
            raise ValueError(
                'grid must be given as lo:step:hi, got {!r}'.format(spec))
        if step <= 0 or hi < lo:
            raise ValueError(
                'grid {!r} needs a positive step and lo <= hi'.format(spec))
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        return cls(tuple(np.round(lo + step * np.arange(n), 12)))

    @classmethod
    def default(cls) -> 'QuantileGrid':
        """The levels 0.10, 0.11, ..., 0.90"""
        return cls.parse(DEFAULT_GRID)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.taus)

    def __len__(self):
        return len(self.taus)

    def __iter__(self):
        return iter(self.taus)

    def index(self, tau) -> np.ndarray:
        """Positions of tau in the grid

        :raises ValueError: Raised if any tau is not a grid level
        """
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        match = np.isclose(tau[:, None], self.array[None, :],
                           rtol=0, atol=1e-9)
        if not np.all(match.any(axis=1)):
            off = tau[~match.any(axis=1)][0]
            raise ValueError(
                'C4 defines quantiles on the grid only, tau={} is '
                'off-grid'.format(off))
        return match.argmax(axis=1)

    def contains(self, tau) -> bool:
        return bool(np.any(np.isclose(tau, self.array, rtol=0, atol=1e-9)))


@dataclass
class MqrFit:
    """A fitted quantile regression

    :param formulation: the formulation fitted
    :param w: parameter vector in the formulation's parameterisation
    :param grid: quantile levels used for training
    :param train_apl: training average pinball loss in kW
    :param params: canonical parameters, None for C4
    :param result: optimiser diagnostics
    :param gamma_th: half-width of the fuzzy-Gumbel region
    """

    method: typing.ClassVar[str] = 'MQR'

    formulation: Formulation
    w: np.ndarray
    grid: QuantileGrid
    train_apl: float
    params: typing.Optional[CanonicalParams]
    result: opt.OptimResult
    gamma_th: float = GAMMA_TH

    @property
    def alpha(self) -> float:
        return float(self.w[0])

    @property
    def gamma(self) -> typing.Optional[float]:
        if not self.formulation.has_gamma:
            return None
        return self.params.gamma

    def quantile(self, tau, energy):
        """Predicted tau-quantile of the peak load at energy E"""
        return predict_quantile(
            self.formulation, self.w, tau, energy, self.grid, self.gamma_th)

    def beta(self, tau):
        """beta_tau of the fit, grid levels only for C4"""
        if self.formulation is Formulation.C4:
            betas = self.w[1:][self.grid.index(tau)]
            return float(betas[0]) if np.ndim(tau) == 0 else betas
        if self.formulation is Formulation.FUZZY_GUMBEL:
            return evd.fgumbel_beta_tau(tau, self.params, self.gamma_th)
        return evd.beta_tau(tau, self.params)

    def apl(self, records) -> float:
        return apl(self.formulation, self.w, records, self.grid,
                   self.gamma_th)

    def to_dict(self) -> dict:
        return {
            'method': self.method,
            'formulation': self.formulation.label,
            'w': [float(v) for v in self.w],
            'params': self.params.to_dict() if self.params else None,
            'train_apl': float(self.train_apl),
            'grid': list(self.grid.taus),
            'gamma_th': self.gamma_th,
            'optimizer': self.result.to_dict(),
        }


def pinball_loss(tau, delta):
    """Pinball loss tau*delta for delta >= 0, (tau - 1)*delta otherwise

    Arguments:
        tau {np.ndarray} -- quantile level in (0, 1)
        delta {np.ndarray} -- observation minus predicted quantile

    Raises:
        ValueError -- if tau is outside (0, 1)

    Returns:
        np.ndarray -- non-negative losses
    """

    tau = evd._check_tau(tau)
    delta = np.asarray(delta, dtype=float)
    return evd._out(np.where(delta < 0, (tau - 1) * delta, tau * delta))


def to_canonical(formulation, w) -> CanonicalParams:
    """Map an MQR parameter vector to canonical parameters

    :raises ValueError: Raised for C4, which has no canonical form
    """

    formulation = Formulation.parse(formulation)
    w = np.asarray(w, dtype=float)
    if formulation is Formulation.GUMBEL:
        return CanonicalParams(w[0], w[1], w[2], 0.0)
    if formulation is Formulation.FUZZY_GUMBEL:
        return CanonicalParams(w[0], w[1], w[2], w[3])
    if formulation in (Formulation.FRECHET, Formulation.REVERSE_WEIBULL):
        return CanonicalParams(w[0], w[1] * w[3], w[2] + w[1], w[3])
    raise ValueError('C4 has no canonical parameters')


def from_canonical(formulation, params: CanonicalParams) -> np.ndarray:
    """Inverse of :func:`to_canonical`"""

    formulation = Formulation.parse(formulation)
    if formulation is Formulation.GUMBEL:
        return np.array([params.theta0, params.scale_a, params.loc_b])
    if formulation is Formulation.FUZZY_GUMBEL:
        return np.array([
            params.theta0, params.scale_a, params.loc_b, params.gamma])
    if formulation in (Formulation.FRECHET, Formulation.REVERSE_WEIBULL):
        if params.is_gumbel:
            raise ValueError(
                '{} needs a non-zero gamma'.format(formulation.label))
        ratio = params.scale_a / params.gamma
        return np.array([
            params.theta0, ratio, params.loc_b - ratio, params.gamma])
    raise ValueError('C4 has no canonical parameters')


def mqr_bounds(formulation, gamma_th: float = GAMMA_TH) -> opt.Bounds:
    """Parameter space of a parametric formulation, closed at its
    finite ends"""

    formulation = Formulation.parse(formulation)
    inf = np.inf
    if formulation is Formulation.GUMBEL:
        return opt.Bounds([0, 0, -inf], [inf, inf, inf])
    if formulation is Formulation.FUZZY_GUMBEL:
        return opt.Bounds([0, 0, -inf, -gamma_th], [inf, inf, inf, gamma_th])
    if formulation is Formulation.FRECHET:
        return opt.Bounds([0, 0, -inf, gamma_th], [inf, inf, inf, inf])
    if formulation is Formulation.REVERSE_WEIBULL:
        return opt.Bounds([0, -inf, -inf, -inf], [inf, 0, inf, -gamma_th])
    raise ValueError('C4 is solved exactly and has no box')


def _betas(formulation, w, taus, gamma_th):
    params = to_canonical(formulation, w)
    if formulation is Formulation.FUZZY_GUMBEL:
        return params.theta0, np.asarray(
            evd.fgumbel_beta_tau(taus, params, gamma_th))
    return params.theta0, np.asarray(evd.beta_tau(taus, params))


def predict_quantile(formulation, w, tau, energy,
                     grid: QuantileGrid = None, gamma_th: float = GAMMA_TH):
    """Predicted tau-quantile alpha*E + beta_tau*sqrt(E)

    :param formulation: formulation of w
    :param w: parameter vector
    :param tau: quantile level(s)
    :param energy: energy consumption, strictly positive
    :param grid: training grid, required for C4
    :param gamma_th: half-width of the fuzzy-Gumbel region
    :raises ValueError: C4 queried off its grid, non-positive energy
    :return: quantiles in kW
    """

    formulation = Formulation.parse(formulation)
    energy = evd._check_energy(energy)
    w = np.asarray(w, dtype=float)
    if formulation is Formulation.C4:
        if grid is None:
            raise ValueError('C4 predictions need the training grid')
        beta = w[1:][grid.index(tau)]
        beta = beta[0] if np.ndim(tau) == 0 else beta
        return evd._out(w[0] * energy + beta * np.sqrt(energy))
    alpha, beta = _betas(formulation, w, tau, gamma_th)
    return evd._out(alpha * energy + beta * np.sqrt(energy))


def quantile_matrix(formulation, w, energy, grid: QuantileGrid,
                    gamma_th: float = GAMMA_TH) -> np.ndarray:
    """Predicted quantiles for every customer (rows) and grid level
    (columns)"""

    formulation = Formulation.parse(formulation)
    energy = np.asarray(energy, dtype=float)
    w = np.asarray(w, dtype=float)
    if formulation is Formulation.C4:
        alpha, beta = w[0], w[1:]
    else:
        alpha, beta = _betas(formulation, w, grid.array, gamma_th)
    return alpha * energy[:, None] + np.sqrt(energy)[:, None] * beta[None, :]


def _mean_pinball(taus, delta):
    return float(np.mean(
        np.where(delta < 0, (taus - 1) * delta, taus * delta)))


def apl(formulation, w, records, grid: QuantileGrid = None,
        gamma_th: float = GAMMA_TH) -> float:
    """Average pinball loss over customers and grid levels in kW

    :raises ValueError: empty records or non-positive energy
    """

    records = profiles.check_fit_records(records, 1)
    grid = grid or QuantileGrid.default()
    q = quantile_matrix(formulation, w, records.energy, grid, gamma_th)
    return _mean_pinball(grid.array[None, :], records.peak[:, None] - q)


class _AplObjective:

    def __init__(self, formulation, energy, peak, taus, gamma_th):
        self.formulation = formulation
        self.energy = energy[:, None]
        self.root = np.sqrt(energy)[:, None]
        self.peak = peak[:, None]
        self.taus = taus[None, :]
        self.levels = taus
        self.gamma_th = gamma_th

    def __call__(self, w):
        alpha, beta = _betas(self.formulation, w, self.levels, self.gamma_th)
        delta = self.peak - alpha * self.energy - self.root * beta[None, :]
        return _mean_pinball(self.taus, delta)


def moment_params(records) -> CanonicalParams:
    """Moment start: least squares of P on (E, sqrt(E)) for theta0, then
    Gumbel moments of the residuals (P - theta0*E)/sqrt(E)

    :rtype: CanonicalParams
    """

    records = profiles.as_records(records)
    energy, peak = records.energy, records.peak
    root = np.sqrt(energy)
    design = np.column_stack([energy, root])
    coef, *_ = np.linalg.lstsq(design, peak, rcond=None)
    theta0 = max(float(coef[0]), 0.0)
    residual = (peak - theta0 * energy) / root
    scale = float(np.std(residual)) * np.sqrt(6) / np.pi
    scale = max(scale, MIN_SCALE * (1 + abs(float(np.mean(residual)))))
    loc = float(np.mean(residual)) - EULER_GAMMA * scale
    return CanonicalParams(theta0, scale, loc, 0.0)


def moment_start(formulation, records, gamma_th: float = GAMMA_TH):
    """Moment start mapped into the formulation's parameter space"""

    formulation = Formulation.parse(formulation)
    base = moment_params(records)
    gamma = {
        Formulation.GUMBEL: 0.0,
        Formulation.FUZZY_GUMBEL: 0.0,
        Formulation.FRECHET: 10 * gamma_th,
        Formulation.REVERSE_WEIBULL: -10 * gamma_th,
    }[formulation]
    params = CanonicalParams(base.theta0, base.scale_a, base.loc_b, gamma)
    bounds = mqr_bounds(formulation, gamma_th)
    return bounds.project(from_canonical(formulation, params))


def fit_parametric(
    formulation,
    records,
    grid: QuantileGrid = None,
    seed: int = 0,
    config: opt.OptimConfig = None,
    gamma_th: float = GAMMA_TH,
    warm_starts: typing.Sequence = None,
    jobs: int = 1
) -> MqrFit:
    """Minimise the training APL of a parametric formulation

    The moment start and its seeded perturbations are used as starts.
    A fuzzy-Gumbel fit also starts from the Gumbel optimum with
    gamma = 0 (fitted here unless given in *warm_starts*), so its APL
    never exceeds the Gumbel APL.

    :param formulation: Gumbel, f-Gumbel, Frechet or r-Weibull
    :param records: training records
    :param grid: quantile levels, defaults to 0.10:0.01:0.90
    :param seed: master seed
    :param config: optimiser settings
    :param gamma_th: half-width of the fuzzy-Gumbel region
    :param warm_starts: extra start vectors tried first
    :param jobs: worker threads for the multistart
    :raises ValueError: C4 requested, fewer than dim(w) + 1 records
    :rtype: MqrFit
    """

    formulation = Formulation.parse(formulation)
    if formulation not in PARAMETRIC:
        raise ValueError('use fit_c4 for the C4 formulation')
    config = config or opt.OptimConfig()
    grid = grid or QuantileGrid.default()
    bounds = mqr_bounds(formulation, gamma_th)
    records = profiles.check_fit_records(records, bounds.dim + 1)

    if formulation is Formulation.FUZZY_GUMBEL and warm_starts is None:
        gumbel = fit_parametric(
            Formulation.GUMBEL, records, grid, seed, config, gamma_th,
            jobs=jobs)
        warm_starts = [np.append(gumbel.w, 0.0)]
    starts = [bounds.project(w) for w in warm_starts or []]
    starts += opt.perturbed_starts(
        moment_start(formulation, records, gamma_th), bounds,
        config.n_starts, seed,
        gamma_index=3 if formulation.has_gamma else None
    )

    log.info('MQR %s: fitting %d records from %d starts',
             formulation.label, len(records), len(starts))
    objective = _AplObjective(
        formulation, records.energy, records.peak, grid.array, gamma_th)
    result = opt.multistart_minimize(
        objective, starts, bounds, seed, config, jobs)
    log.info('MQR %s: APL=%.8g nfev=%d', formulation.label, result.fun,
             result.nfev)
    return MqrFit(
        formulation=formulation,
        w=result.x,
        grid=grid,
        train_apl=result.fun,
        params=to_canonical(formulation, result.x),
        result=result,
        gamma_th=gamma_th
    )


def weighted_quantile(values, weights, tau) -> np.ndarray:
    """Smallest value whose cumulative weight reaches tau times the
    total weight, the minimiser of sum_i w_i * PL(tau, values_i - beta)

    Ties go to the smaller value.
    """

    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind='stable')
    ordered = values[order]
    cumulative = np.cumsum(weights[order])
    target = np.asarray(tau, dtype=float) * cumulative[-1]
    k = np.searchsorted(cumulative, target, side='left')
    return ordered[np.minimum(k, len(ordered) - 1)]


def _pool_adjacent_violators(betas, taus, values, weights):
    """Merge adjacent levels until beta is non-decreasing; a merged
    block takes the weighted quantile at the mean level of the block"""

    blocks = []
    for j, beta in enumerate(betas):
        blocks.append([j, j + 1, beta])
        while len(blocks) > 1 and blocks[-2][2] > blocks[-1][2]:
            right = blocks.pop()
            left = blocks[-1]
            left[1] = right[1]
            mean_tau = float(np.mean(taus[left[0]:left[1]]))
            left[2] = float(weighted_quantile(values, weights, mean_tau))
    merged = np.empty(len(betas))
    for start, end, beta in blocks:
        merged[start:end] = beta
    return merged


class _C4Profile:
    """Value function of alpha with the betas solved exactly"""

    def __init__(self, energy, peak, taus):
        self.energy = energy
        self.root = np.sqrt(energy)
        self.peak = peak
        self.taus = taus
        self.nfev = 0

    def betas(self, alpha):
        values = (self.peak - alpha * self.energy) / self.root
        betas = weighted_quantile(values, self.root, self.taus)
        return _pool_adjacent_violators(betas, self.taus, values, self.root)

    def __call__(self, alpha):
        self.nfev += 1
        betas = self.betas(alpha)
        delta = (
            self.peak[:, None] - alpha * self.energy[:, None] -
            self.root[:, None] * betas[None, :]
        )
        return _mean_pinball(self.taus[None, :], delta)


def _golden_section(func, lower, upper):
    """Minimise a convex function on [lower, upper], returning the best
    point evaluated (endpoints included)"""

    seen = {lower: func(lower), upper: func(upper)}
    a, b = lower, upper
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    seen[c], seen[d] = fc, fd
    for _ in range(MAX_SECTIONS):
        if b - a <= ALPHA_TOL * (1 + abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = seen[c] = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = seen[d] = func(d)
    return min(seen.items(), key=lambda item: (item[1], item[0]))


def fit_c4(
    records,
    grid: QuantileGrid = None,
    seed: int = 0,
    config: opt.OptimConfig = None
) -> MqrFit:
    """Fit the C4 formulation: one shared alpha >= 0 and a
    non-decreasing beta per grid level

    For a fixed alpha each beta_tau is a weighted tau-quantile of
    (P - alpha*E)/sqrt(E) with weights sqrt(E), and adjacent violators
    are pooled. The resulting value function is convex in alpha and is
    minimised by golden-section search; the search interval starts at
    [0, 2*max(P/E)] and doubles while the value still decreases.
    The solver is deterministic, *seed* and *config* are accepted for a
    uniform fitting signature.

    :param records: training records, at least one
    :param grid: quantile levels, defaults to 0.10:0.01:0.90
    :raises ValueError: empty records or non-positive energy
    :rtype: MqrFit
    """

    grid = grid or QuantileGrid.default()
    records = profiles.check_fit_records(records, 1)
    profile = _C4Profile(records.energy, records.peak, grid.array)

    upper = float(np.max(records.peak / records.energy))
    if not upper > 0:
        upper = 1.0
    for _ in range(MAX_DOUBLINGS):
        if not profile(2 * upper) < profile(upper):
            break
        upper *= 2
    alpha, value = _golden_section(profile, 0.0, 2 * upper)

    w = np.concatenate([[alpha], profile.betas(alpha)])
    log.info('MQR C4: alpha=%.8g APL=%.8g nfev=%d', alpha, value,
             profile.nfev)
    result = opt.OptimResult(
        x=w, fun=value, nfev=profile.nfev, converged=True,
        message='exact inner solve, golden-section search on alpha')
    return MqrFit(
        formulation=Formulation.C4,
        w=w,
        grid=grid,
        train_apl=value,
        params=None,
        result=result
    )


def fit(formulation, records, grid: QuantileGrid = None, seed: int = 0,
        config: opt.OptimConfig = None, gamma_th: float = GAMMA_TH,
        jobs: int = 1) -> MqrFit:
    """Dispatch to :func:`fit_c4` or :func:`fit_parametric`"""

    formulation = Formulation.parse(formulation)
    if formulation is Formulation.C4:
        return fit_c4(records, grid, seed, config)
    return fit_parametric(formulation, records, grid, seed, config,
                          gamma_th, jobs=jobs)
