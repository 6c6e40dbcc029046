import math
from dataclasses import dataclass, field
from enum import Enum
from typing import ClassVar, Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .exceptions import InvalidInputError, MissingMomentError


def check_alpha(alpha: float) -> float:
    """Return alpha as a float, rejecting anything outside (0, 1)."""
    try:
        value = float(alpha)
    except (TypeError, ValueError):
        raise InvalidInputError(f"alpha must be a real number, got {alpha!r}")
    if not 0.0 < value < 1.0:
        raise InvalidInputError(f"alpha must be in (0, 1), got {alpha}")
    return value


@dataclass(frozen=True, eq=False)
class Sample:
    """An n x p data panel; rows are observations."""

    values: np.ndarray
    variable_names: Optional[List[str]] = None

    def __post_init__(self):
        try:
            values = np.array(self.values, dtype=float)
        except (TypeError, ValueError) as e:
            raise InvalidInputError(f"Sample values must be numeric: {e}")
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InvalidInputError(f"Sample values must be a non-empty n x p matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("Sample values must all be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.variable_names is not None:
            names = [str(name) for name in self.variable_names]
            if len(names) != values.shape[1]:
                raise InvalidInputError(
                    f"Expected {values.shape[1]} variable names, got {len(names)}"
                )
            object.__setattr__(self, "variable_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def require_shape(self, min_n: int = 4, min_p: int = 2) -> None:
        if self.n < min_n or self.p < min_p:
            raise InvalidInputError(
                f"Need at least {min_n} observations and {min_p} variables, got n={self.n}, p={self.p}"
            )

    def without_rows(self, rows: Iterable[int]) -> "Sample":
        keep = np.ones(self.n, dtype=bool)
        keep[list(rows)] = False
        return Sample(self.values[keep], self.variable_names)

    def take_rows(self, rows: Iterable[int]) -> "Sample":
        return Sample(self.values[np.asarray(list(rows), dtype=int)], self.variable_names)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "Sample":
        numeric = frame.apply(pd.to_numeric, errors="coerce")
        if numeric.isna().to_numpy().any():
            raise InvalidInputError("Data contains missing or non-numeric entries")
        return cls(numeric.to_numpy(dtype=float), [str(c) for c in frame.columns])

    @classmethod
    def read_csv(cls, path) -> "Sample":
        """Read a CSV whose first row holds variable names."""
        try:
            frame = pd.read_csv(path, encoding="utf-8")
        except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise InvalidInputError(f"Could not read data file {path}: {e}")
        return cls.from_frame(frame)


def as_sample(X: Union[Sample, np.ndarray]) -> Sample:
    return X if isinstance(X, Sample) else Sample(X)


@dataclass(frozen=True)
class WeightExponent:
    """Exponent m of the weight w(x) = x**m, restricted to m <= 1."""

    m: float

    INVERSE_NORM: ClassVar["WeightExponent"]
    SIGN: ClassVar["WeightExponent"]
    IDENTITY: ClassVar["WeightExponent"]

    def __post_init__(self):
        try:
            m = float(self.m)
        except (TypeError, ValueError):
            raise InvalidInputError(f"weight exponent must be a real number, got {self.m!r}")
        if not math.isfinite(m) or m > 1:
            raise InvalidInputError(f"weight exponent m must be a finite real <= 1, got {self.m}")
        object.__setattr__(self, "m", m)

    @classmethod
    def coerce(cls, value: Union["WeightExponent", float]) -> "WeightExponent":
        return value if isinstance(value, cls) else cls(value)

    @property
    def label(self) -> str:
        if self.m == -1:
            return "IN"
        if self.m == 0:
            return "SS"
        return f"W({self.m:g})"

    def weights(self, radii: np.ndarray) -> np.ndarray:
        """Evaluate r**m; zero radii get weight 0 because U(0) = 0."""
        radii = np.asarray(radii, dtype=float)
        out = np.zeros_like(radii)
        positive = radii > 0
        out[positive] = radii[positive] ** self.m
        return out


WeightExponent.INVERSE_NORM = WeightExponent(-1.0)
WeightExponent.SIGN = WeightExponent(0.0)
WeightExponent.IDENTITY = WeightExponent(1.0)


class ScaleMode(str, Enum):
    EXACT = "exact-leave-two-out"
    SHARED = "shared-scale"

    @classmethod
    def coerce(cls, value: Union["ScaleMode", str]) -> "ScaleMode":
        try:
            return cls(value)
        except ValueError:
            raise InvalidInputError(
                f"scale_mode must be one of {[mode.value for mode in cls]}, got {value!r}"
            )


@dataclass(frozen=True, eq=False)
class SolverOptions:
    tol: float = 1e-8
    max_iter: int = 200
    initial_theta: Optional[np.ndarray] = None
    initial_d: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (math.isfinite(self.tol) and self.tol > 0):
            raise InvalidInputError(f"tol must be a positive real, got {self.tol}")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidInputError(f"max_iter must be a positive integer, got {self.max_iter}")


@dataclass(frozen=True, eq=False)
class HREstimate:
    """Fixed point (theta_hat, d_hat) of the weighted estimating equations.

    d_hat holds the diagonal of D, i.e. the squared scales d_j**2.
    """

    theta_hat: np.ndarray
    d_hat: np.ndarray
    iterations: int
    residual_location: float
    residual_scale: float
    converged: bool
    m: float = 0.0
    tol: float = 1e-8
    note: Optional[str] = None

    def __post_init__(self):
        if np.any(np.asarray(self.d_hat) <= 0):
            raise InvalidInputError("d_hat entries must be strictly positive")
        if self.converged and max(self.residual_location, self.residual_scale) > self.tol:
            raise InvalidInputError("a converged estimate must have both residuals within tol")

    def standardized_residuals(self, X: Union[Sample, np.ndarray]) -> np.ndarray:
        values = as_sample(X).values
        return (values - self.theta_hat) / np.sqrt(self.d_hat)


@dataclass(frozen=True)
class MomentEstimates:
    """Plug-in radius moments zeta_k keyed by exponent k."""

    values: Dict[float, float]

    def __post_init__(self):
        clean = {float(k): float(v) for k, v in self.values.items()}
        for k, v in clean.items():
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"moment zeta_{k:g} must be positive and finite, got {v}")
        if 0.0 in clean and clean[0.0] != 1.0:
            raise InvalidInputError(f"zeta_0 must equal 1, got {clean[0.0]}")
        object.__setattr__(self, "values", clean)

    def __getitem__(self, k: float) -> float:
        try:
            return self.values[float(k)]
        except KeyError:
            raise MissingMomentError(f"moment zeta_{float(k):g} was not estimated")

    def __contains__(self, k: float) -> bool:
        return float(k) in self.values


@dataclass
class TestResult:
    """Uniform result envelope shared by every test in the package."""

    __test__ = False

    method: str
    statistic: float
    p_value: float
    alpha: float
    reject: bool
    warnings: List[str] = field(default_factory=list)
    scale_mode: Optional[str] = None

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise InvalidInputError(f"p_value must lie in [0, 1], got {self.p_value}")
        check_alpha(self.alpha)
        if self.reject != (self.p_value < self.alpha):
            raise InvalidInputError("reject must equal (p_value < alpha)")

    @classmethod
    def from_p_value(cls, method: str, statistic: float, p_value: float, alpha: float,
                     warnings: Optional[List[str]] = None, scale_mode: Optional[str] = None) -> "TestResult":
        p_value = float(min(max(p_value, 0.0), 1.0))
        return cls(
            method=method,
            statistic=float(statistic),
            p_value=p_value,
            alpha=alpha,
            reject=p_value < alpha,
            warnings=list(warnings or []),
            scale_mode=scale_mode,
        )

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject": self.reject,
            "warnings": list(self.warnings),
            "scale_mode": self.scale_mode,
        }


@dataclass
class CombinedResult:
    """Cauchy combination of a max-type and a sum-type p-value."""

    method: str
    statistic: float
    p_max: float
    p_sum: float
    p_cc: float
    alpha: float
    reject: bool
    component_results: Tuple[TestResult, TestResult]
    warnings: List[str] = field(default_factory=list)

    def as_test_result(self) -> TestResult:
        return TestResult(
            method=self.method,
            statistic=self.statistic,
            p_value=self.p_cc,
            alpha=self.alpha,
            reject=self.reject,
            warnings=list(self.warnings),
            scale_mode=self.component_results[1].scale_mode,
        )

    def to_dict(self) -> dict:
        out = self.as_test_result().to_dict()
        out.update(
            p_max=self.p_max,
            p_sum=self.p_sum,
            components=[result.to_dict() for result in self.component_results],
        )
        return out


@dataclass(frozen=True)
class SumVarianceEstimate:
    sigma_sq_hat: float
    pair_count: int

    def __post_init__(self):
        if not self.sigma_sq_hat > 0:
            raise InvalidInputError(f"sigma_sq_hat must be positive, got {self.sigma_sq_hat}")


_RADIAL_KINDS = ("normal", "t", "mixture")


@dataclass(frozen=True)
class RadialLaw:
    """Law of the mixing variable v in X = theta + v * Gamma W."""

    kind: str
    df: Optional[float] = None
    gamma: Optional[float] = None
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in _RADIAL_KINDS:
            raise InvalidInputError(f"radial law kind must be one of {_RADIAL_KINDS}, got {self.kind!r}")
        if self.kind == "t":
            if self.df is None or not self.df > 2:
                raise InvalidInputError(f"t law needs df > 2, got {self.df}")
        if self.kind == "mixture":
            if self.gamma is None or not 0 < self.gamma < 1:
                raise InvalidInputError(f"mixture law needs 0 < gamma < 1, got {self.gamma}")
            if self.sigma is None or not self.sigma > 0:
                raise InvalidInputError(f"mixture law needs sigma > 0, got {self.sigma}")

    @classmethod
    def normal(cls) -> "RadialLaw":
        return cls("normal")

    @classmethod
    def t(cls, df: float) -> "RadialLaw":
        return cls("t", df=float(df))

    @classmethod
    def mixture(cls, gamma: float, sigma: float) -> "RadialLaw":
        return cls("mixture", gamma=float(gamma), sigma=float(sigma))

    @classmethod
    def from_dict(cls, data: dict) -> "RadialLaw":
        allowed = {"kind", "df", "gamma", "sigma"}
        unknown = set(data) - allowed
        if unknown:
            raise InvalidInputError(f"Unknown radial law keys: {sorted(unknown)}")
        return cls(**data)

    @property
    def label(self) -> str:
        if self.kind == "t":
            return f"t({self.df:g})"
        if self.kind == "mixture":
            return f"MN({self.gamma:g},{self.sigma:g})"
        return "normal"


_COVARIANCE_KINDS = ("ar1", "identity", "custom")


@dataclass(frozen=True, eq=False)
class CovarianceSpec:
    kind: str
    p: int
    rho: Optional[float] = None
    matrix: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in _COVARIANCE_KINDS:
            raise InvalidInputError(f"covariance kind must be one of {_COVARIANCE_KINDS}, got {self.kind!r}")
        if int(self.p) != self.p or self.p < 1:
            raise InvalidInputError(f"dimension p must be a positive integer, got {self.p}")
        if self.kind == "ar1" and (self.rho is None or not -1 < self.rho < 1):
            raise InvalidInputError(f"ar1 covariance needs -1 < rho < 1, got {self.rho}")
        if self.kind == "custom":
            if self.matrix is None or np.shape(self.matrix) != (self.p, self.p):
                raise InvalidInputError(f"custom covariance needs a {self.p} x {self.p} matrix")

    @classmethod
    def ar1(cls, rho: float, p: int) -> "CovarianceSpec":
        return cls("ar1", p, rho=float(rho))

    @classmethod
    def identity(cls, p: int) -> "CovarianceSpec":
        return cls("identity", p)

    @classmethod
    def custom(cls, matrix: np.ndarray) -> "CovarianceSpec":
        matrix = np.asarray(matrix, dtype=float)
        return cls("custom", matrix.shape[0], matrix=matrix)


@dataclass(frozen=True, eq=False)
class CovarianceModel:
    """Sigma, a factor Gamma with Gamma Gamma^T = Sigma, and tr(R^2) of its shape matrix."""

    sigma: np.ndarray
    factor: np.ndarray
    trace_r_squared: float

    @property
    def scales(self) -> np.ndarray:
        return np.diag(self.sigma).copy()


@dataclass(frozen=True)
class SignalSpec:
    """theta = (kappa, ..., kappa, 0, ..., 0) with kappa = sqrt(delta / s)."""

    delta: float = 0.0
    s: int = 1
    placement: str = "first"

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise InvalidInputError(f"signal delta must be >= 0, got {self.delta}")
        if int(self.s) != self.s or self.s < 1:
            raise InvalidInputError(f"signal sparsity s must be a positive integer, got {self.s}")
        if self.placement != "first":
            raise InvalidInputError(f"only 'first' placement is supported, got {self.placement!r}")

    @property
    def kappa(self) -> float:
        return math.sqrt(self.delta / self.s)

    def theta(self, p: int) -> np.ndarray:
        theta = np.zeros(p)
        if self.delta > 0:
            if self.s > p:
                raise InvalidInputError(f"signal sparsity s={self.s} exceeds dimension p={p}")
            theta[: int(self.s)] = self.kappa
        return theta


@dataclass
class AREReport:
    law: RadialLaw
    are_in_vs_max: float
    are_in_vs_ss: float
    are_ss_vs_max: float
    mode: str
    mc_stderr: Optional[float] = None
    reference: Optional[Tuple[float, float, float]] = None
    discrepancies: List[str] = field(default_factory=list)

    @property
    def flagged(self) -> bool:
        return bool(self.discrepancies)

    def as_row(self) -> dict:
        row = {
            "law": self.law.label,
            "are_in_vs_max": self.are_in_vs_max,
            "are_in_vs_ss": self.are_in_vs_ss,
            "are_ss_vs_max": self.are_ss_vs_max,
            "mode": self.mode,
            "mc_stderr": self.mc_stderr,
        }
        ref = self.reference or (None, None, None)
        row.update(
            reference_in_vs_max=ref[0],
            reference_in_vs_ss=ref[1],
            reference_ss_vs_max=ref[2],
            flag="; ".join(self.discrepancies),
        )
        return row
