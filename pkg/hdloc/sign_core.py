"""Spatial-sign primitives and the weighted HR-type location/scale solver.

The solver finds (theta, D), D = diag(d_1^2, ..., d_p^2), such that

    n^-1 sum_i w(||eps_i||) U(eps_i) = 0
    p n^-1 diag{sum_i U(eps_i) U(eps_i)^T} = I_p

with eps_i = D^-1/2 (X_i - theta), U the spatial sign and w(x) = x**m.
"""

# stdlib imports
import logging
from typing import Iterable, Optional, Tuple, Union

# third party imports
import numpy as np

# local imports
from .exceptions import DegenerateSampleError, InvalidInputError
from .models import HREstimate, MomentEstimates, Sample, SolverOptions, WeightExponent, as_sample

logger = logging.getLogger(__name__)

JITTER = 1e-12
SCALE_FLOOR = 1e-300


def spatial_sign(x) -> np.ndarray:
    """Return x / ||x||, or the zero vector when x = 0."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("spatial_sign needs a finite vector")
    norm = np.linalg.norm(x)
    if norm == 0:
        return np.zeros_like(x)
    return x / norm


def row_signs(eps: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Row norms and row spatial signs of a matrix; zero rows map to zero signs."""
    radii = np.linalg.norm(eps, axis=1)
    signs = np.zeros_like(eps)
    positive = radii > 0
    signs[positive] = eps[positive] / radii[positive, None]
    return radii, signs


def _check_radii(radii: np.ndarray, m: WeightExponent) -> None:
    if not np.any(radii > 0):
        raise DegenerateSampleError("every observation coincides with the location; no sign information")
    if m.m < 0 and np.any(radii == 0):
        raise DegenerateSampleError(
            f"zero residual vector with m={m.m:g}: the weight w(0) is undefined"
        )


def _equations(values: np.ndarray, theta: np.ndarray, d: np.ndarray, m: WeightExponent):
    eps = (values - theta) / np.sqrt(d)
    radii, signs = row_signs(eps)
    _check_radii(radii, m)
    weights = m.weights(radii)
    location = float(np.max(np.abs((weights[:, None] * signs).mean(axis=0))))
    scale = float(np.max(np.abs(values.shape[1] * np.mean(signs ** 2, axis=0) - 1.0)))
    return location, scale, radii, signs, weights


def hr_residuals(X: Union[Sample, np.ndarray], theta, d, m: Union[WeightExponent, float] = WeightExponent.SIGN) -> Tuple[float, float]:
    """Sup-norm residuals of the location and scale estimating equations at (theta, d)."""
    sample = as_sample(X)
    m = WeightExponent.coerce(m)
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(d, dtype=float)
    if theta.shape != (sample.p,) or d.shape != (sample.p,):
        raise InvalidInputError(f"theta and d must both have length p={sample.p}")
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise InvalidInputError("d entries must be positive and finite")
    location, scale, *_ = _equations(sample.values, theta, d, m)
    return location, scale


def weighted_hr_estimate(X: Union[Sample, np.ndarray], m: Union[WeightExponent, float] = WeightExponent.INVERSE_NORM,
                         opts: Optional[SolverOptions] = None) -> HREstimate:
    """
    Solve the weighted estimating equations by the three-step iteration.

    Each sweep computes eps_i = D^-1/2 (X_i - theta), then updates

        theta <- theta + D^1/2 sum w_i U_i / sum w_i ||eps_i||^-1
        D     <- p diag{n^-1 sum U_i U_i^T} D

    from the same eps_i, until both residuals of :func:`hr_residuals` are at
    most ``opts.tol``. Starts from the sample mean and sample variances unless
    a warm start is supplied.

    Returns:
        HREstimate: the converged pair, or the iterate with the smallest
        residuals and ``converged=False`` when ``max_iter`` is exhausted.

    Raises:
        InvalidInputError, DegenerateSampleError
    """
    sample = as_sample(X)
    sample.require_shape()
    m = WeightExponent.coerce(m)
    opts = opts or SolverOptions()
    values = sample.values
    n, p = values.shape

    if opts.initial_theta is not None:
        theta = np.array(opts.initial_theta, dtype=float)
    else:
        theta = values.mean(axis=0)
    if opts.initial_d is not None:
        d = np.array(opts.initial_d, dtype=float)
    else:
        d = values.var(axis=0, ddof=1)
    if theta.shape != (p,) or d.shape != (p,):
        raise InvalidInputError(f"initial theta and d must have length p={p}")
    if np.any(d <= 0):
        bad = np.flatnonzero(d <= 0).tolist()
        if opts.initial_d is not None:
            raise InvalidInputError(f"initial d must be positive, got non-positive entries in columns {bad}")
        raise InvalidInputError(f"constant columns {bad} have zero sample variance")

    jittered = False
    best = None
    iterations = 0
    note = None
    while True:
        try:
            location, scale, radii, signs, weights = _equations(values, theta, d, m)
        except DegenerateSampleError:
            # a single deterministic nudge off an observation, then give up
            if jittered or m.m >= 0:
                raise
            jittered = True
            theta = theta + JITTER * np.sqrt(d)
            logger.debug("zero residual at iteration %d; jittered theta once", iterations)
            continue

        if best is None or max(location, scale) < max(best[2], best[3]):
            best = (theta.copy(), d.copy(), location, scale, iterations)
        if location <= opts.tol and scale <= opts.tol:
            return HREstimate(theta, d, iterations, location, scale, True, m=m.m, tol=opts.tol)
        if iterations >= opts.max_iter:
            break

        positive = radii > 0
        denominator = np.sum(weights[positive] / radii[positive])
        theta = theta + np.sqrt(d) * (weights[:, None] * signs).sum(axis=0) / denominator
        d = p * np.mean(signs ** 2, axis=0) * d
        iterations += 1
        if np.any(d < SCALE_FLOOR):
            d = np.maximum(d, SCALE_FLOOR)
            note = "scale entries hit the lower clamp"
            location, scale, *_ = _equations(values, theta, d, m)
            if max(location, scale) < max(best[2], best[3]):
                best = (theta.copy(), d.copy(), location, scale, iterations)
            break

    theta, d, location, scale, at = best
    note = note or f"no convergence within {opts.max_iter} iterations"
    logger.warning(
        "HR solver did not converge (m=%g, n=%d, p=%d): residuals %.3g / %.3g; %s",
        m.m, n, p, location, scale, note,
    )
    return HREstimate(theta, d, at, location, scale, False, m=m.m, tol=opts.tol, note=note)


def leave_out_scale(X: Union[Sample, np.ndarray], excluded: Tuple[int, int],
                    m: Union[WeightExponent, float] = WeightExponent.SIGN,
                    opts: Optional[SolverOptions] = None) -> HREstimate:
    """Fit the solver on X with rows i and j removed (the leave-two-out D~_ij)."""
    sample = as_sample(X)
    i, j = (int(k) for k in excluded)
    if i == j or not (0 <= i < sample.n and 0 <= j < sample.n):
        raise InvalidInputError(f"excluded rows must be two distinct indices in [0, {sample.n}), got {excluded}")
    if sample.n - 2 < 4:
        raise InvalidInputError(f"leave-two-out needs n >= 6, got n={sample.n}")
    return weighted_hr_estimate(sample.without_rows((i, j)), m, opts)


def moment_estimates(X: Union[Sample, np.ndarray], est: HREstimate, exponents: Iterable[float]) -> MomentEstimates:
    """zeta_k = n^-1 sum_i ||D^-1/2 (X_i - theta)||^k for each requested k."""
    sample = as_sample(X)
    radii = np.linalg.norm(est.standardized_residuals(sample), axis=1)
    moments = {}
    for k in exponents:
        k = float(k)
        if not np.isfinite(k):
            raise InvalidInputError(f"moment exponent must be finite, got {k}")
        if k == 0:
            moments[k] = 1.0
            continue
        if k < 0 and np.any(radii == 0):
            raise DegenerateSampleError(f"zero residual radius makes zeta_{k:g} infinite")
        moments[k] = float(np.mean(radii ** k))
    return MomentEstimates(moments)
