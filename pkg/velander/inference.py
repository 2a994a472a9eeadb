"""Likelihood ratio test of Gumbel against Frechet and the observed
Fisher information standard deviation of the extreme value index."""
import logging
import typing
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.special

from velander import mle, opt, profiles
from velander.evd import GAMMA_TH, Formulation

log = logging.getLogger(__name__)

#: relative finite-difference step
STEP = 1e-4
#: absolute step for coordinates at zero
STEP_FLOOR = 1e-8
PD_MESSAGE = 'Fisher information not PD at optimum'


class FisherInformationError(Exception):

    def __init__(self, message: str):
        """This exception will be raised if the observed Fisher
        information cannot be inverted at an estimate

        :param message: Description of the failed criteria
        :type message: str
        """
        super().__init__(message)


@dataclass
class LrtResult:
    """Outcome of the likelihood ratio test

    :param ell0: maximised log-likelihood under H0 (Gumbel)
    :param ell1: maximised log-likelihood under H1 (Frechet)
    :param statistic: max(0, -2*(ell0 - ell1))
    :param p_value: upper chi-squared(1) tail at the statistic
    """

    ell0: float
    ell1: float
    statistic: float
    p_value: float

    def to_dict(self) -> dict:
        return {
            'ell0': self.ell0,
            'ell1': self.ell1,
            'lambda': self.statistic,
            'p_value': self.p_value,
            'p_value_text': '{:.2e}'.format(self.p_value),
        }


@dataclass
class FisherResult:
    """Observed Fisher information at an estimate

    :param hessian: Hessian of the total NLL
    :param covariance: its inverse
    :param std_gamma: square root of the gamma entry of the covariance
    """

    hessian: np.ndarray
    covariance: np.ndarray
    std_gamma: float

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def to_dict(self) -> dict:
        return {
            'hessian': self.hessian.tolist(),
            'covariance': self.covariance.tolist(),
            'std_gamma': self.std_gamma,
        }


def chi2_1_cdf(x):
    """CDF of the chi-squared distribution with one degree of freedom,
    erf(sqrt(x/2))

    :raises ValueError: Raised if x is negative
    """

    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError('x cannot be negative')
    return float(scipy.special.erf(np.sqrt(x / 2))) if x.ndim == 0 else \
        scipy.special.erf(np.sqrt(x / 2))


def chi2_1_sf(x):
    """Upper tail 1 - chi2_1_cdf(x) computed as erfc(sqrt(x/2)), accurate
    far below 1e-16"""

    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError('x cannot be negative')
    return float(scipy.special.erfc(np.sqrt(x / 2))) if x.ndim == 0 else \
        scipy.special.erfc(np.sqrt(x / 2))


def lrt_from_fits(gumbel: mle.MleFit, frechet: mle.MleFit) -> LrtResult:
    """Test statistic and p-value from the two fitted models"""

    ell0, ell1 = -gumbel.total_nll, -frechet.total_nll
    # H1 excludes gamma < gamma_th, so ell1 may fall below ell0
    statistic = max(0.0, -2 * (ell0 - ell1))
    return LrtResult(ell0, ell1, statistic, chi2_1_sf(statistic))


def likelihood_ratio_test(
    records,
    seed: int = 0,
    config: opt.OptimConfig = None,
    gamma_th: float = GAMMA_TH,
    eps_th: float = mle.EPS_TH,
    jobs: int = 1
) -> typing.Tuple[LrtResult, mle.MleFit, mle.MleFit]:
    """Fit Gumbel (H0) and Frechet (H1) on the full record set and
    compare their maximised log-likelihoods

    :return: the test result and the Gumbel and Frechet fits
    """

    records = profiles.as_records(records)
    gumbel = mle.fit_mle(Formulation.GUMBEL, records, seed, config,
                         gamma_th, eps_th, jobs=jobs)
    frechet = mle.fit_mle(Formulation.FRECHET, records, seed, config,
                          gamma_th, eps_th, jobs=jobs)
    result = lrt_from_fits(gumbel, frechet)
    log.info('LRT: lambda=%.6g p=%.3e', result.statistic, result.p_value)
    return result, gumbel, frechet


def numerical_hessian(func, w, steps) -> np.ndarray:
    """Central-difference Hessian of func at w

    Arguments:
        func {Callable} -- scalar function of a 1-d array
        w {np.ndarray} -- evaluation point
        steps {np.ndarray} -- per-coordinate steps

    Returns:
        np.ndarray -- the (n, n) Hessian, symmetric by construction
    """

    w = np.asarray(w, dtype=float)
    steps = np.broadcast_to(np.asarray(steps, dtype=float), w.shape)
    n = len(w)
    hessian = np.zeros((n, n))
    center = func(w)

    def shifted(i, si, j=None, sj=0):
        x = w.copy()
        x[i] += si * steps[i]
        if j is not None:
            x[j] += sj * steps[j]
        return func(x)

    for i in range(n):
        hessian[i, i] = (
            shifted(i, 1) - 2 * center + shifted(i, -1)
        ) / steps[i] ** 2
        for j in range(i + 1, n):
            hessian[i, j] = hessian[j, i] = (
                shifted(i, 1, j, 1) - shifted(i, 1, j, -1) -
                shifted(i, -1, j, 1) + shifted(i, -1, j, -1)
            ) / (4 * steps[i] * steps[j])
    return hessian


def observed_fisher(nll, w_hat, bounds: opt.Bounds = None,
                    gamma_index: int = -1) -> FisherResult:
    """Invert the central-difference Hessian of a negative
    log-likelihood at its minimiser

    :param nll: total negative log-likelihood, a function of w
    :param w_hat: the estimate
    :param bounds: parameter box, the estimate must be farther than
        one step from every finite bound
    :param gamma_index: position of gamma in w
    :raises FisherInformationError: estimate near the boundary, NLL not
        finite around the estimate or Hessian not positive definite
    :rtype: FisherResult
    """

    w_hat = np.asarray(w_hat, dtype=float)
    steps = np.maximum(STEP * np.abs(w_hat), STEP_FLOOR)
    if bounds is not None:
        near = (w_hat - bounds.lower <= steps) | \
            (bounds.upper - w_hat <= steps)
        if np.any(near):
            raise FisherInformationError(
                'estimate lies on or near the boundary in coordinate '
                '{}'.format(int(np.flatnonzero(near)[0])))

    hessian = numerical_hessian(nll, w_hat, steps)
    if not np.all(np.isfinite(hessian)):
        raise FisherInformationError(
            'negative log-likelihood is not finite around the estimate')
    try:
        factor = scipy.linalg.cho_factor(hessian)
    except np.linalg.LinAlgError:
        raise FisherInformationError(PD_MESSAGE)
    covariance = scipy.linalg.cho_solve(factor, np.eye(len(w_hat)))
    return FisherResult(
        hessian=hessian,
        covariance=covariance,
        std_gamma=float(np.sqrt(covariance[gamma_index, gamma_index]))
    )


def fisher_std_gamma(records, fit: mle.MleFit) -> FisherResult:
    """Standard deviation of the estimated gamma of a Frechet (or
    r-Weibull) fit from the observed Fisher information

    :raises FisherInformationError: see :func:`observed_fisher`
    """

    if not fit.formulation.has_gamma:
        raise ValueError(
            '{} has no extreme value index'.format(fit.formulation.label))
    records = profiles.check_fit_records(records, 1)

    def nll(w):
        try:
            return mle.total_nll(fit.formulation, w, records, fit.gamma_th)
        except (mle.InfeasibleRecordError, ValueError):
            return np.inf

    result = observed_fisher(
        nll, fit.w, mle.mle_bounds(fit.formulation, fit.gamma_th),
        gamma_index=3)
    log.info('Fisher: std(gamma)=%.6g', result.std_gamma)
    return result
