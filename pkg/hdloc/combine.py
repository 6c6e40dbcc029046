"""Cauchy combination of max-type and sum-type p-values."""

# stdlib imports
import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence, Tuple, Union

# third party imports
import numpy as np
from scipy import stats

# local imports
from .distributions import SettingLike, sample_panel
from .exceptions import DegenerateSampleError, HDLocError, InvalidInputError
from .max_test import max_test, mean_max_test
from .models import (
    CombinedResult,
    Sample,
    ScaleMode,
    SignalSpec,
    SolverOptions,
    TestResult,
    WeightExponent,
    as_sample,
    check_alpha,
)
from .parallel import map_replications
from .sign_core import weighted_hr_estimate
from .sum_test import mean_sum_test, sum_components, sum_test

logger = logging.getLogger(__name__)

P_FLOOR = 1e-15


def _clip(p_values: Sequence[float]) -> Tuple[np.ndarray, List[str]]:
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InvalidInputError("cauchy_combine needs a non-empty list of p-values")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise InvalidInputError(f"p-values must lie in [0, 1], got {p.tolist()}")
    clipped = np.clip(p, P_FLOOR, 1.0 - P_FLOOR)
    notes = []
    if np.any(clipped != p):
        notes.append(f"p-values clipped to [{P_FLOOR:g}, 1 - {P_FLOOR:g}] before combination")
    return clipped, notes


def _check_weights(weights: Optional[Sequence[float]], size: int) -> np.ndarray:
    if weights is None:
        return np.full(size, 1.0 / size)
    w = np.asarray(weights, dtype=float)
    if w.shape != (size,) or np.any(w < 0) or not math.isclose(float(w.sum()), 1.0, abs_tol=1e-12):
        raise InvalidInputError(f"weights must be {size} non-negative numbers summing to 1")
    return w


def combine_with_notes(p_values: Sequence[float], weights: Optional[Sequence[float]] = None) -> Tuple[float, float, List[str]]:
    """Return (p_cc, tangent statistic, notes) for the weighted Cauchy combination."""
    p, notes = _clip(p_values)
    w = _check_weights(weights, p.size)
    # tan((0.5 - p) pi) written as cot(p pi) keeps full precision for small p
    statistic = float(np.sum(w / np.tan(np.pi * p)))
    if statistic > 0:
        p_cc = float(np.arctan(1.0 / statistic) / np.pi)
    else:
        p_cc = float(stats.cauchy.sf(statistic))
    # a weighted average of the statistics lies between the smallest and largest input
    used = p[w > 0]
    return min(max(p_cc, float(used.min())), float(used.max())), statistic, notes


def cauchy_combine(p_values: Sequence[float], weights: Optional[Sequence[float]] = None) -> float:
    """
    Combine p-values as 1 - G(sum_i w_i tan{(0.5 - p_i) pi}), G the standard Cauchy CDF.

    Equal weights by default. Inputs at 0 or 1 are clipped to [1e-15, 1 - 1e-15].
    """
    p_cc, _, notes = combine_with_notes(p_values, weights)
    for note in notes:
        logger.warning(note)
    return p_cc


def combine_results(method: str, max_result: TestResult, sum_result: TestResult, alpha: float) -> CombinedResult:
    p_cc, statistic, notes = combine_with_notes([max_result.p_value, sum_result.p_value])
    return CombinedResult(
        method=method,
        statistic=statistic,
        p_max=max_result.p_value,
        p_sum=sum_result.p_value,
        p_cc=p_cc,
        alpha=alpha,
        reject=p_cc < alpha,
        component_results=(max_result, sum_result),
        warnings=list(max_result.warnings) + list(sum_result.warnings) + notes,
    )


def cc_test(X: Union[Sample, np.ndarray], m: Union[WeightExponent, float] = WeightExponent.INVERSE_NORM,
            alpha: float = 0.05, scale_mode: Union[ScaleMode, str] = ScaleMode.EXACT,
            opts: Optional[SolverOptions] = None) -> CombinedResult:
    """Weighted max and sum tests with the same m on the same sample, combined with equal weights."""
    sample = as_sample(X)
    m = WeightExponent.coerce(m)
    alpha = check_alpha(alpha)
    est = weighted_hr_estimate(sample, m, opts)
    max_result = max_test(sample, m, alpha, est)
    sum_res = sum_test(sample, m, alpha, scale_mode, opts)
    return combine_results(f"{m.label}-CC", max_result, sum_res, alpha)


def mean_cc_test(X: Union[Sample, np.ndarray], alpha: float = 0.05) -> CombinedResult:
    """Cauchy combination of the mean-based MAX and SUM baselines."""
    sample = as_sample(X)
    alpha = check_alpha(alpha)
    return combine_results("CC", mean_max_test(sample, alpha), mean_sum_test(sample, alpha), alpha)


def min_p_threshold(alpha: float) -> float:
    """Level 1 - sqrt(1 - alpha) at which the smaller of two independent p-values is compared."""
    return 1.0 - math.sqrt(1.0 - check_alpha(alpha))


@dataclass
class IndependenceReport:
    correlation: float
    ks_distance: float
    reps: int
    errors: int

    def to_dict(self) -> dict:
        return {
            "correlation": self.correlation,
            "ks_distance": self.ks_distance,
            "reps": self.reps,
            "errors": self.errors,
        }


def _independence_replication(index: int, setting: SettingLike, n: int, p: int, m: WeightExponent,
                              signal: Optional[SignalSpec], seed: int, scale_mode: ScaleMode):
    try:
        sample = sample_panel(setting, n, p, signal, seed, (index,))
        est = weighted_hr_estimate(sample, m)
        t_max = max_test(sample, m, 0.05, est)
        components = sum_components(sample, m, scale_mode)
        p_sum = float(stats.norm.sf(components.studentized))
        p_cc, _, _ = combine_with_notes([t_max.p_value, p_sum])
    except (HDLocError, ValueError) as e:
        logger.warning("independence replication %d failed: %s", index, e)
        return None
    return t_max.statistic, components.studentized, p_cc


def joint_independence_diagnostic(setting: SettingLike, n: int, p: int,
                                  m: Union[WeightExponent, float] = WeightExponent.INVERSE_NORM,
                                  reps: int = 500, seed: int = 0, signal: Optional[SignalSpec] = None,
                                  scale_mode: Union[ScaleMode, str] = ScaleMode.SHARED,
                                  parallelism: int = 1) -> IndependenceReport:
    """
    Simulate panels and report corr(T_MAX, T_SUM / sigma_hat) and the KS distance of p_cc from uniform.

    Null panels unless ``signal`` is given.
    """
    if int(reps) != reps or reps < 200:
        raise InvalidInputError(f"the independence diagnostic needs reps >= 200, got {reps}")
    m = WeightExponent.coerce(m)
    scale_mode = ScaleMode.coerce(scale_mode)
    work = partial(
        _independence_replication,
        setting=setting, n=n, p=p, m=m, signal=signal, seed=seed, scale_mode=scale_mode,
    )
    outcomes = map_replications(work, range(int(reps)), parallelism)
    rows = np.array([row for row in outcomes if row is not None], dtype=float).reshape(-1, 3)
    errors = int(reps) - rows.shape[0]
    if rows.shape[0] < 3:
        raise DegenerateSampleError(f"only {rows.shape[0]} replications succeeded; cannot summarise")
    correlation = float(np.corrcoef(rows[:, 0], rows[:, 1])[0, 1])
    ks_distance = float(stats.kstest(rows[:, 2], "uniform").statistic)
    logger.info("independence diagnostic: corr=%.4f ks=%.4f errors=%d", correlation, ks_distance, errors)
    return IndependenceReport(correlation, ks_distance, int(reps), errors)
