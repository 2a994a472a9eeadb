"""Customer-specific extreme value distributions of the peak load.

For a customer with energy consumption E the peak load P is modelled by
a generalised extreme value distribution after the transformation

    z = (y - theta0*E - B*sqrt(E)) / (A*sqrt(E))

so every quantile has the Velander form ``alpha*E + beta*sqrt(E)`` with
``alpha = theta0`` shared by all quantile levels. All functions accept
numpy arrays and broadcast; scalar input gives a float.
"""
import enum
import typing
from dataclasses import asdict, dataclass

import numpy as np

#: half-width of the fuzzy-Gumbel region |gamma| <= GAMMA_TH
GAMMA_TH = 1e-2
#: |gamma| below this takes the gamma = 0 branch
GAMMA_ZERO = 1e-12

BELOW = 'below'
ABOVE = 'above'


class OutOfSupportError(Exception):

    def __init__(self, message: str, side: str):
        """This exception will be raised if a value lies outside the
        support of an extreme value distribution

        :param message: Description of the failed criteria
        :type message: str
        :param side: 'below' where the CDF is 0, 'above' where it is 1
        :type side: str
        """
        self.side = side
        super().__init__(message)


class Formulation(str, enum.Enum):
    """The five model formulations"""

    C4 = 'C4'
    GUMBEL = 'Gumbel'
    FUZZY_GUMBEL = 'FuzzyGumbel'
    FRECHET = 'Frechet'
    REVERSE_WEIBULL = 'ReverseWeibull'

    @property
    def label(self) -> str:
        """Display label used in tables and curve exports"""
        return _LABELS[self]

    @property
    def has_gamma(self) -> bool:
        """True if the formulation estimates an extreme value index"""
        return self in (
            Formulation.FUZZY_GUMBEL,
            Formulation.FRECHET,
            Formulation.REVERSE_WEIBULL
        )

    @classmethod
    def parse(cls, text: typing.Union[str, 'Formulation']) -> 'Formulation':
        """Parse a formulation name, ignoring case, accents and
        separators so 'f-gumbel', 'FuzzyGumbel' and 'Fréchet' are all
        accepted

        :raises ValueError: Raised for an unknown name
        """
        if isinstance(text, cls):
            return text
        key = ''.join(
            c for c in str(text).lower().replace('é', 'e') if c.isalnum())
        try:
            return _ALIASES[key]
        except KeyError:
            raise ValueError(
                'unknown formulation {!r}, expected one of {}'.format(
                    text, ', '.join(f.label for f in cls)))


_LABELS = {
    Formulation.C4: 'C4',
    Formulation.GUMBEL: 'Gumbel',
    Formulation.FUZZY_GUMBEL: 'f-Gumbel',
    Formulation.FRECHET: 'Fréchet',
    Formulation.REVERSE_WEIBULL: 'r-Weibull',
}

_ALIASES = {
    'c4': Formulation.C4,
    'gumbel': Formulation.GUMBEL,
    'fgumbel': Formulation.FUZZY_GUMBEL,
    'fuzzygumbel': Formulation.FUZZY_GUMBEL,
    'frechet': Formulation.FRECHET,
    'rweibull': Formulation.REVERSE_WEIBULL,
    'reverseweibull': Formulation.REVERSE_WEIBULL,
}


@dataclass(frozen=True)
class CanonicalParams:
    """The (theta0, A, B, gamma) parameterisation shared by every
    formulation

    :param theta0: linear energy coefficient, the shared alpha
    :param scale_a: scale A = theta1 * a_K
    :param loc_b: location B = theta1 * b_K
    :param gamma: extreme value index
    """

    theta0: float
    scale_a: float
    loc_b: float
    gamma: float = 0.0

    def __post_init__(self):
        for name in ('theta0', 'scale_a', 'loc_b', 'gamma'):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError('{} must be finite'.format(name))
            object.__setattr__(self, name, value)
        if self.theta0 < 0:
            raise ValueError('theta0 cannot be negative')

    @property
    def is_gumbel(self) -> bool:
        return abs(self.gamma) < GAMMA_ZERO

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SupportSet:
    """The open interval (lower, upper) of peak loads y with
    1 + gamma*z(y) > 0"""

    lower: float
    upper: float

    def contains(self, y):
        y = np.asarray(y, dtype=float)
        return _out(np.logical_and(y > self.lower, y < self.upper))


def _out(value):
    value = np.asarray(value)
    return value.item() if value.ndim == 0 else value


def _check_energy(energy) -> np.ndarray:
    energy = np.asarray(energy, dtype=float)
    if np.any(~(energy > 0)):
        raise ValueError('energy must be positive')
    return energy


def _check_tau(tau) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if np.any(~((tau > 0) & (tau < 1))):
        raise ValueError('tau must lie strictly between 0 and 1')
    return tau


def standard_gev_cdf(x, gamma: float):
    """Evaluate the standard extreme value distribution
    G(x) = exp(-(1 + gamma*x)^(-1/gamma)), exp(-exp(-x)) for gamma = 0

    Arguments:
        x {np.ndarray} -- points to evaluate
        gamma {float} -- extreme value index

    Raises:
        OutOfSupportError -- if 1 + gamma*x <= 0 for any x, side 'below'
            for gamma > 0 and 'above' for gamma < 0

    Returns:
        np.ndarray -- probabilities
    """

    x = np.asarray(x, dtype=float)
    if abs(gamma) < GAMMA_ZERO:
        return _out(np.exp(-np.exp(-x)))
    t = 1 + gamma * x
    if np.any(t <= 0):
        side = BELOW if gamma > 0 else ABOVE
        raise OutOfSupportError(
            'x lies {} the support of G with gamma={}'.format(side, gamma),
            side
        )
    return _out(np.exp(-np.exp(-np.log(t) / gamma)))


def z_transform(y, energy, params: CanonicalParams):
    """Map a peak load to the standard extreme value scale

    Arguments:
        y {np.ndarray} -- peak loads in kW
        energy {np.ndarray} -- energy consumption, strictly positive
        params {CanonicalParams} -- model parameters

    Raises:
        ValueError -- if energy is not positive or A is not positive

    Returns:
        np.ndarray -- (y - theta0*E - B*sqrt(E)) / (A*sqrt(E))
    """

    energy = _check_energy(energy)
    if not params.scale_a > 0:
        raise ValueError('scale A must be positive')
    root = np.sqrt(energy)
    y = np.asarray(y, dtype=float)
    return _out(
        (y - params.theta0 * energy - params.loc_b * root) /
        (params.scale_a * root)
    )


def support(energy, params: CanonicalParams) -> SupportSet:
    """Support of the peak load distribution of a customer

    :param energy: energy consumption of the customer
    :param params: model parameters
    :return: the whole line for gamma = 0, a ray bounded below for
        gamma > 0 and a ray bounded above for gamma < 0
    :rtype: SupportSet
    """

    energy = float(_check_energy(energy))
    if params.is_gumbel:
        return SupportSet(-np.inf, np.inf)
    root = np.sqrt(energy)
    end = (
        params.theta0 * energy +
        (params.loc_b - params.scale_a / params.gamma) * root
    )
    if params.gamma > 0:
        return SupportSet(end, np.inf)
    return SupportSet(-np.inf, end)


def _log_tail(z, gamma):
    """Return (t, ln t, t^(-1/gamma)) with t = 1 + gamma*z, t masked to 1
    outside the support"""
    t = 1 + gamma * z
    inside = t > 0
    log_t = np.log(np.where(inside, t, 1.0))
    return inside, log_t, np.exp(-log_t / gamma)


def peak_cdf(y, energy, params: CanonicalParams):
    """Distribution function of the peak load, 0 below and 1 above
    the support"""

    z = np.asarray(z_transform(y, energy, params))
    with np.errstate(over='ignore'):
        if params.is_gumbel:
            return _out(np.exp(-np.exp(-z)))
        inside, _, tail = _log_tail(z, params.gamma)
        outside = 0.0 if params.gamma > 0 else 1.0
        return _out(np.where(inside, np.exp(-tail), outside))


def peak_logpdf(y, energy, params: CanonicalParams):
    """Log density of the peak load, -inf outside the support"""

    z = np.asarray(z_transform(y, energy, params))
    scale = np.log(params.scale_a * np.sqrt(np.asarray(energy, dtype=float)))
    with np.errstate(over='ignore'):
        if params.is_gumbel:
            return _out(-scale - z - np.exp(-z))
        gamma = params.gamma
        inside, log_t, tail = _log_tail(z, gamma)
        value = -scale - (1 + 1 / gamma) * log_t - tail
        return _out(np.where(inside, value, -np.inf))


def peak_pdf(y, energy, params: CanonicalParams):
    """Density of the peak load in 1/kW, 0 outside the support"""

    with np.errstate(over='ignore'):
        return _out(np.exp(peak_logpdf(y, energy, params)))


def beta_tau(tau, params: CanonicalParams):
    """Quantile coefficient beta_tau of the Velander representation
    Q(tau; E) = theta0*E + beta_tau*sqrt(E)

    Arguments:
        tau {np.ndarray} -- quantile levels in (0, 1)
        params {CanonicalParams} -- model parameters

    Raises:
        ValueError -- if tau is outside (0, 1)

    Returns:
        np.ndarray -- -A*ln(-ln tau) + B for gamma = 0,
            A*((-ln tau)^(-gamma) - 1)/gamma + B otherwise
    """

    level = np.log(-np.log(_check_tau(tau)))
    if params.is_gumbel:
        return _out(-params.scale_a * level + params.loc_b)
    gamma = params.gamma
    return _out(params.scale_a * np.expm1(-gamma * level) / gamma +
                params.loc_b)


def peak_qf(tau, energy, params: CanonicalParams):
    """Quantile function of the peak load in kW

    :raises ValueError: tau outside (0, 1) or non-positive energy
    """

    energy = _check_energy(energy)
    beta = np.asarray(beta_tau(tau, params))
    return _out(params.theta0 * energy + beta * np.sqrt(energy))


def fgumbel_beta_tau(tau, params: CanonicalParams,
                     gamma_th: float = GAMMA_TH):
    """beta_tau from the degree-3 Taylor polynomial of the quantile
    function in gamma around 0

    :raises ValueError: |gamma| > gamma_th or tau outside (0, 1)
    """

    if abs(params.gamma) > gamma_th:
        raise ValueError(
            'fuzzy-Gumbel requires |gamma| <= {}, got {}'.format(
                gamma_th, params.gamma))
    level = np.log(-np.log(_check_tau(tau)))
    gamma = params.gamma
    poly = (
        -level + gamma * level ** 2 / 2 - gamma ** 2 * level ** 3 / 6 +
        gamma ** 3 * level ** 4 / 24
    )
    return _out(params.scale_a * poly + params.loc_b)


def fgumbel_qf_taylor(tau, energy, params: CanonicalParams,
                      gamma_th: float = GAMMA_TH):
    """Fuzzy-Gumbel quantile function, well conditioned for small gamma

    :raises ValueError: |gamma| > gamma_th, tau outside (0, 1) or
        non-positive energy
    """

    energy = _check_energy(energy)
    beta = np.asarray(fgumbel_beta_tau(tau, params, gamma_th))
    return _out(params.theta0 * energy + beta * np.sqrt(energy))
