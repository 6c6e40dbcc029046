"""Method tags and a per-sample evaluator that shares fits between tests."""

import logging
import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Union

from .combine import combine_results, min_p_threshold
from .exceptions import HDLocError, InvalidInputError
from .max_test import max_test, mean_max_test
from .models import (
    CombinedResult,
    HREstimate,
    Sample,
    ScaleMode,
    SolverOptions,
    TestResult,
    WeightExponent,
    as_sample,
    check_alpha,
)
from .sign_core import weighted_hr_estimate
from .sum_test import SumComponents, mean_sum_test, sum_components, sum_result

logger = logging.getLogger(__name__)

FAMILIES = ("MAX", "SUM", "CC", "MIN-P")

NINE_METHODS = ["IN-MAX", "SS-MAX", "MAX", "IN-SUM", "SS-SUM", "SUM", "IN-CC", "SS-CC", "CC"]

_PREFIXES = {"IN": -1.0, "SS": 0.0}
_TAG = re.compile(r"^(?:(IN|SS|W\((-?[0-9.eE+-]+)\))-)?(MAX|SUM|CC|MIN-P)$")


@dataclass(frozen=True)
class MethodSpec:
    """A parsed method tag; ``m`` is None for the mean-based baselines."""

    family: str
    m: Optional[float] = None

    @property
    def tag(self) -> str:
        if self.m is None:
            return self.family
        return f"{WeightExponent(self.m).label}-{self.family}"

    @property
    def weight(self) -> WeightExponent:
        return WeightExponent(self.m)


def parse_method(tag: str, weight_m: Optional[float] = None) -> MethodSpec:
    """
    Parse a tag such as ``in-cc``, ``SUM`` or ``W(0.5)-MAX`` (case-insensitive).

    ``weight_m`` turns any tag into the weighted test of its family with that m.
    """
    match = _TAG.match(str(tag).strip().upper())
    if not match:
        raise InvalidInputError(f"Unknown method tag {tag!r}; expected one of {NINE_METHODS} or W(m)-<family>")
    prefix, explicit_m, family = match.groups()
    if weight_m is not None:
        return MethodSpec(family, WeightExponent.coerce(weight_m).m)
    if prefix is None:
        return MethodSpec(family)
    if prefix in _PREFIXES:
        return MethodSpec(family, _PREFIXES[prefix])
    try:
        return MethodSpec(family, WeightExponent(float(explicit_m)).m)
    except ValueError:
        raise InvalidInputError(f"Could not read the weight exponent in {tag!r}")


def parse_methods(tags: Iterable[str], weight_m: Optional[float] = None) -> List[MethodSpec]:
    specs = [parse_method(tag, weight_m) for tag in tags]
    if not specs:
        raise InvalidInputError("at least one method is required")
    seen = set()
    for spec in specs:
        if spec.tag in seen:
            raise InvalidInputError(f"method {spec.tag} listed twice")
        seen.add(spec.tag)
    return specs


class MethodContext:
    """
    Evaluates methods on one sample, fitting each HR estimate and sum statistic at most once.

    Failures are cached too, so every method that needs a failed fit re-raises
    the same error.
    """

    def __init__(self, X: Union[Sample, object], alpha: float = 0.05,
                 scale_mode: Union[ScaleMode, str] = ScaleMode.EXACT, opts: Optional[SolverOptions] = None):
        self.sample = as_sample(X)
        self.alpha = check_alpha(alpha)
        self.scale_mode = ScaleMode.coerce(scale_mode)
        self.opts = opts
        self._cache: Dict[tuple, object] = {}

    def _cached(self, key: tuple, compute: Callable[[], object]):
        if key not in self._cache:
            try:
                self._cache[key] = compute()
            except HDLocError as e:
                self._cache[key] = e
        value = self._cache[key]
        if isinstance(value, Exception):
            raise value
        return value

    def estimate(self, m: float) -> HREstimate:
        return self._cached(("est", m), lambda: weighted_hr_estimate(self.sample, m, self.opts))

    def components(self, m: float) -> SumComponents:
        def compute():
            if self.scale_mode is ScaleMode.EXACT:
                return sum_components(self.sample, m, ScaleMode.EXACT, self.opts)
            shared = self.estimate(0.0)
            components = sum_components(self.sample, m, ScaleMode.SHARED, d=shared.d_hat)
            if not shared.converged:
                components.warnings.append(f"shared scale fit did not converge: {shared.note}")
            return components

        return self._cached(("sum", m), compute)

    def max_result(self, spec: MethodSpec) -> TestResult:
        if spec.m is None:
            return self._cached(("MAX",), lambda: mean_max_test(self.sample, self.alpha))
        return self._cached(
            ("max", spec.m),
            lambda: max_test(self.sample, spec.m, self.alpha, self.estimate(spec.m)),
        )

    def sum_result(self, spec: MethodSpec) -> TestResult:
        if spec.m is None:
            return self._cached(("SUM",), lambda: mean_sum_test(self.sample, self.alpha))
        return self._cached(("sum-result", spec.m), lambda: sum_result(self.components(spec.m), spec.weight, self.alpha))

    def run(self, spec: MethodSpec) -> Union[TestResult, CombinedResult]:
        if spec.family == "MAX":
            return self.max_result(spec)
        if spec.family == "SUM":
            return self.sum_result(spec)
        max_res = self.max_result(MethodSpec("MAX", spec.m))
        sum_res = self.sum_result(MethodSpec("SUM", spec.m))
        if spec.family == "CC":
            return combine_results(spec.tag, max_res, sum_res, self.alpha)
        smallest = min(max_res.p_value, sum_res.p_value)
        return TestResult.from_p_value(
            spec.tag,
            smallest,
            smallest,
            min_p_threshold(self.alpha),
            warnings=list(max_res.warnings) + list(sum_res.warnings),
            scale_mode=sum_res.scale_mode,
        )


def run_method(X: Union[Sample, object], spec: Union[MethodSpec, str], alpha: float = 0.05,
               scale_mode: Union[ScaleMode, str] = ScaleMode.EXACT,
               opts: Optional[SolverOptions] = None) -> Union[TestResult, CombinedResult]:
    if isinstance(spec, str):
        spec = parse_method(spec)
    return MethodContext(X, alpha, scale_mode, opts).run(spec)
