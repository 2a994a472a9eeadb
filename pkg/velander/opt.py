"""Derivative-free minimisation over boxes with a feasibility predicate.

Every fit in velander minimises a low dimensional, piecewise smooth
objective. :func:`minimize` runs a Nelder-Mead simplex with restarts,
projecting trial points onto the box and scoring points that fail the
feasibility predicate as +inf. :func:`multistart_minimize` runs it from
several starts and keeps the best result.
"""
import logging
import typing
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from joblib import Parallel, delayed

log = logging.getLogger(__name__)

# relative and absolute steps of the initial simplex
NONZDELT = 0.05
ZDELT = 0.00025
# perturbation half-widths for the multistart points
PERTURB_SCALE = 0.2
PERTURB_SHIFT = 0.2

Objective = typing.Callable[[np.ndarray], float]


class InfeasibleStartError(Exception):

    def __init__(self, message: str):
        """This exception will be raised if no start point lies inside
        the bounds with a finite objective

        :param message: Description of the failed criteria
        :type message: str
        """
        super().__init__(message)


@dataclass(frozen=True)
class OptimConfig:
    """Stopping rules and the number of starts and restarts"""

    max_evals: int = 50000
    tol_f: float = 1e-10
    tol_x: float = 1e-9
    n_starts: int = 8
    max_restarts: int = 3

    def __post_init__(self):
        if self.max_evals <= 0:
            raise ValueError('max_evals must be positive')
        if self.tol_f <= 0 or self.tol_x <= 0:
            raise ValueError('tolerances must be positive')
        if self.n_starts < 1:
            raise ValueError('n_starts must be at least 1')
        if self.max_restarts < 0:
            raise ValueError('max_restarts cannot be negative')


class Bounds:
    """Per-coordinate box [lower, upper] with an optional feasibility
    predicate on top

    :param lower: lower bounds, -inf for none
    :type lower: Sequence[float]
    :param upper: upper bounds, inf for none
    :type upper: Sequence[float]
    :param feasible: predicate a point must also satisfy
    :type feasible: Callable[[np.ndarray], bool], optional
    """

    def __init__(self, lower, upper, feasible=None):
        self.lower = np.asarray(lower, dtype=float).ravel()
        self.upper = np.asarray(upper, dtype=float).ravel()
        if self.lower.shape != self.upper.shape:
            raise ValueError('lower and upper bounds differ in length')
        if np.any(self.lower > self.upper):
            raise ValueError('lower bound exceeds upper bound')
        self.feasible = feasible

    @classmethod
    def unbounded(cls, dim: int) -> 'Bounds':
        return cls(np.full(dim, -np.inf), np.full(dim, np.inf))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def project(self, x) -> np.ndarray:
        """Clip a point onto the box"""
        return np.clip(np.asarray(x, dtype=float), self.lower, self.upper)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def is_feasible(self, x) -> bool:
        """True if x lies in the box and satisfies the predicate"""
        if not self.contains(x):
            return False
        return self.feasible is None or bool(self.feasible(x))

    def with_feasible(self, feasible) -> 'Bounds':
        return Bounds(self.lower, self.upper, feasible)

    def __repr__(self):
        return 'Bounds(lower={}, upper={})'.format(
            self.lower.tolist(), self.upper.tolist())


@dataclass
class OptimResult:
    """Outcome of a minimisation

    :param x: best point found, feasible
    :param fun: objective at x, never above the objective at the start
    :param nfev: objective evaluations used
    :param converged: True if the last simplex run met both tolerances
    :param restarts: restarts performed after the first simplex run
    """

    x: np.ndarray
    fun: float
    nfev: int
    converged: bool
    restarts: int = 0
    message: str = ''
    start_index: int = 0
    skipped: typing.List[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'x': [float(v) for v in self.x],
            'fun': float(self.fun),
            'nfev': int(self.nfev),
            'converged': bool(self.converged),
            'restarts': int(self.restarts),
            'message': self.message,
            'start_index': int(self.start_index),
            'skipped_starts': list(self.skipped),
        }


class _Penalised:
    """Objective wrapper: projects onto the box, +inf where infeasible
    or non-finite, counts evaluations"""

    def __init__(self, objective: Objective, bounds: Bounds):
        self.objective = objective
        self.bounds = bounds
        self.nfev = 0

    def __call__(self, x):
        self.nfev += 1
        x = self.bounds.project(x)
        if self.bounds.feasible is not None and not self.bounds.feasible(x):
            return np.inf
        value = float(self.objective(x))
        return value if np.isfinite(value) else np.inf


def _initial_simplex(x0, bounds, signs):
    n = len(x0)
    simplex = np.tile(x0, (n + 1, 1))
    for j in range(n):
        step = NONZDELT * abs(x0[j]) if x0[j] != 0 else ZDELT
        step *= signs[j]
        if not bounds.lower[j] <= x0[j] + step <= bounds.upper[j]:
            step = -step
        simplex[j + 1, j] += step
    return simplex


def _check_start(objective, start, bounds):
    if start.shape != (bounds.dim,):
        raise ValueError(
            'start has shape {}, bounds expect ({},)'.format(
                start.shape, bounds.dim))
    if not bounds.is_feasible(start):
        raise InfeasibleStartError(
            'start point {} violates the bounds or the feasibility '
            'predicate'.format(start.tolist()))
    value = float(objective(start))
    if not np.isfinite(value):
        raise InfeasibleStartError(
            'objective is not finite at the start point {}'.format(
                start.tolist()))
    return value


def minimize(
    objective: Objective,
    start,
    bounds: Bounds,
    seed: int = 0,
    config: OptimConfig = None
) -> OptimResult:
    """Minimise an objective from a feasible start with Nelder-Mead

    The simplex is restarted from the best point with seeded step
    directions until a restart no longer improves the objective or
    ``config.max_restarts`` is reached.

    :param objective: function of a 1-d array returning a float
    :param start: feasible start point
    :param bounds: box and feasibility predicate
    :param seed: seed of the restart step directions
    :param config: stopping rules, defaults to :class:`OptimConfig`
    :raises InfeasibleStartError: the start is infeasible or the
        objective is not finite there
    :return: the best point found
    :rtype: OptimResult
    """

    config = config or OptimConfig()
    start = np.asarray(start, dtype=float).ravel()
    best_f = _check_start(objective, start, bounds)
    best_x = start.copy()
    wrapped = _Penalised(objective, bounds)
    rng = np.random.default_rng(seed)
    n = len(start)
    signs = np.ones(n)
    converged, restarts, message = False, 0, 'no iterations'

    for attempt in range(config.max_restarts + 1):
        budget = config.max_evals - wrapped.nfev
        if budget <= n + 1:
            message = 'evaluation budget exhausted'
            converged = False
            break
        previous = best_f
        result = scipy.optimize.minimize(
            wrapped, best_x, method='Nelder-Mead',
            options={
                'initial_simplex': _initial_simplex(best_x, bounds, signs),
                'xatol': config.tol_x,
                'fatol': config.tol_f * (1 + abs(best_f)),
                'maxfev': budget,
            }
        )
        restarts = attempt
        converged = result.status == 0
        message = str(result.message)
        if result.fun < best_f:
            best_x, best_f = bounds.project(result.x), float(result.fun)
        if previous - best_f <= config.tol_f * (1 + abs(best_f)):
            break
        signs = rng.choice([-1.0, 1.0], size=n)

    log.debug(
        'minimize: f=%.10g nfev=%d restarts=%d converged=%s',
        best_f, wrapped.nfev + 1, restarts, converged
    )
    return OptimResult(
        x=best_x,
        fun=best_f,
        nfev=wrapped.nfev + 1,
        converged=converged,
        restarts=restarts,
        message=message
    )


def _attempt(objective, index, start, bounds, seed, config):
    try:
        result = minimize(objective, start, bounds, seed, config)
    except InfeasibleStartError as error:
        log.info('skipping start %d: %s', index, error)
        return index, None
    result.start_index = index
    return index, result


def multistart_minimize(
    objective: Objective,
    starts: typing.Sequence,
    bounds: Bounds,
    seed: int = 0,
    config: OptimConfig = None,
    jobs: int = 1
) -> OptimResult:
    """Run :func:`minimize` from every start and keep the best result

    Infeasible starts are skipped. Ties are broken by start order, and
    every start gets its own seed from the master seed, so the result
    does not depend on ``jobs``.

    :param objective: re-entrant function of a 1-d array
    :param starts: candidate start points
    :param bounds: box and feasibility predicate
    :param seed: master seed
    :param config: stopping rules
    :param jobs: number of worker threads
    :raises ValueError: Raised if starts is empty
    :raises InfeasibleStartError: Raised if every start is infeasible
    :rtype: OptimResult
    """

    starts = [np.asarray(start, dtype=float).ravel() for start in starts]
    if not len(starts):
        raise ValueError('multistart_minimize requires at least one start')
    config = config or OptimConfig()
    children = np.random.SeedSequence(seed).spawn(len(starts))
    seeds = [int(child.generate_state(1)[0]) for child in children]

    outcomes = Parallel(n_jobs=jobs, prefer='threads')(
        delayed(_attempt)(objective, i, start, bounds, seeds[i], config)
        for i, start in enumerate(starts)
    )
    skipped = [i for i, result in outcomes if result is None]
    results = [result for _, result in outcomes if result is not None]
    if not results:
        raise InfeasibleStartError(
            'none of the {} start points is feasible'.format(len(starts)))
    best = min(results, key=lambda r: (r.fun, r.start_index))
    best.nfev = sum(r.nfev for r in results)
    best.skipped = skipped
    return best


def perturbed_starts(
    start,
    bounds: Bounds,
    n_starts: int,
    seed: int = 0,
    gamma_index: typing.Optional[int] = None
) -> typing.List[np.ndarray]:
    """The start itself followed by n_starts - 1 seeded perturbations

    Coordinates are scaled by a factor in [0.8, 1.2], except the
    extreme value index which is shifted by up to 0.2. All points are
    projected onto the box.

    :param start: the central start point
    :param bounds: box to project onto
    :param n_starts: total number of points returned
    :param seed: perturbation seed
    :param gamma_index: position of gamma in the vector, if any
    :rtype: typing.List[np.ndarray]
    """

    start = np.asarray(start, dtype=float).ravel()
    rng = np.random.default_rng(seed)
    is_gamma = np.arange(len(start)) == (
        -1 if gamma_index is None else gamma_index)
    starts = [bounds.project(start)]
    for _ in range(n_starts - 1):
        factors = 1 + rng.uniform(-PERTURB_SCALE, PERTURB_SCALE, len(start))
        shifts = rng.uniform(-PERTURB_SHIFT, PERTURB_SHIFT, len(start))
        point = np.where(is_gamma, start + shifts, start * factors)
        starts.append(bounds.project(point))
    return starts
