"""Monte Carlo experiments: sizes, power curves and the Bahadur and Gumbel diagnostics.

Every replication r draws its panel from the stream (seed, r), so results do
not depend on the worker count and every grid point of a power curve reuses
the same random numbers.
"""

# stdlib imports
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

# third party imports
import numpy as np
import pandas as pd
from scipy import stats

# local imports
from ._version import __version__
from .distributions import SETTINGS, SettingLike, make_covariance, resolve_setting, sample_panel
from .exceptions import HDLocError, InvalidConfigError, InvalidInputError
from .max_test import GUMBEL, gumbel_quantile, t_max_statistic
from .methods import NINE_METHODS, MethodContext, MethodSpec, parse_methods
from .models import CovarianceSpec, RadialLaw, ScaleMode, SignalSpec, SolverOptions, WeightExponent, check_alpha
from .parallel import map_replications
from .sign_core import row_signs, weighted_hr_estimate

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["method", "grid_value", "reject_rate", "stderr", "reps", "errors", "successes"]
ERROR_FLAG_SHARE = 0.01


def _reject_unknown(data: dict, allowed: Sequence[str], where: str) -> None:
    if not isinstance(data, dict):
        raise InvalidConfigError(f"{where} must be a JSON object, got {type(data).__name__}")
    unknown = set(data) - set(allowed)
    if unknown:
        raise InvalidConfigError(f"Unknown keys in {where}: {sorted(unknown)}")


@dataclass(frozen=True)
class SweepSpec:
    """Power-curve grid over delta (fixed s) or over s (fixed delta)."""

    over: str
    values: Tuple[float, ...]
    delta: float = 0.5
    s: int = 2

    def __post_init__(self):
        if self.over not in ("delta", "s"):
            raise InvalidConfigError(f"sweep.over must be 'delta' or 's', got {self.over!r}")
        if not self.values:
            raise InvalidConfigError("sweep.values must be a non-empty list")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        _reject_unknown(data, ("over", "values", "delta", "s"), "sweep")
        return cls(**data)

    def signals(self) -> List[SignalSpec]:
        if self.over == "delta":
            return [SignalSpec(delta=value, s=self.s) for value in self.values]
        return [SignalSpec(delta=self.delta, s=int(value)) for value in self.values]


@dataclass(frozen=True)
class SimConfig:
    """One experiment; field names match the keys of the JSON config document."""

    setting: Optional[str] = "i"
    law: Optional[RadialLaw] = None
    covariance: Optional[CovarianceSpec] = None
    n: int = 80
    p: int = 200
    reps: int = 1000
    alpha: float = 0.05
    methods: Tuple[str, ...] = tuple(NINE_METHODS)
    signal: SignalSpec = field(default_factory=SignalSpec)
    sweep: Optional[SweepSpec] = None
    seed: int = 0
    scale_mode: str = ScaleMode.SHARED.value
    parallelism: int = 1
    weight_m: Optional[float] = None
    n_grid: Tuple[int, ...] = (40, 80, 160)
    tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        try:
            self._validate()
        except InvalidConfigError:
            raise
        except InvalidInputError as e:
            raise InvalidConfigError(str(e))

    def _validate(self):
        for name in ("n", "p", "reps", "seed", "parallelism", "max_iter"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise InvalidConfigError(f"{name} must be an integer, got {value!r}")
        if self.reps < 1 or self.parallelism < 1 or self.seed < 0:
            raise InvalidConfigError("reps and parallelism must be >= 1 and seed >= 0")
        if self.n < 4 or self.p < 3:
            raise InvalidConfigError(f"need n >= 4 and p >= 3, got n={self.n}, p={self.p}")
        check_alpha(self.alpha)
        ScaleMode.coerce(self.scale_mode)
        if (self.law is None) != (self.covariance is None):
            raise InvalidConfigError("law and covariance must be given together")
        if self.law is not None:
            object.__setattr__(self, "setting", None)
            if self.covariance.p != self.p:
                raise InvalidConfigError(f"covariance dimension {self.covariance.p} does not match p={self.p}")
        elif self.setting not in SETTINGS:
            raise InvalidConfigError(f"setting must be one of {sorted(SETTINGS)}, got {self.setting!r}")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        parse_methods(self.methods)
        if not self.n_grid or min(self.n_grid) < 4:
            raise InvalidConfigError("n_grid must be a non-empty list of sample sizes >= 4")
        if self.weight_m is not None:
            WeightExponent(self.weight_m)
        SolverOptions(self.tol, self.max_iter)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        _reject_unknown(data, [f.name for f in cls.__dataclass_fields__.values()], "config")
        kwargs = dict(data)
        try:
            if kwargs.get("law") is not None:
                kwargs["law"] = RadialLaw.from_dict(kwargs["law"])
            if kwargs.get("covariance") is not None:
                cov = kwargs["covariance"]
                _reject_unknown(cov, ("kind", "rho", "matrix"), "covariance")
                matrix = cov.get("matrix")
                kwargs["covariance"] = CovarianceSpec(
                    cov.get("kind"),
                    int(data.get("p", cls.p)),
                    rho=cov.get("rho"),
                    matrix=None if matrix is None else np.asarray(matrix, dtype=float),
                )
            if "signal" in kwargs:
                _reject_unknown(kwargs["signal"], ("delta", "s", "placement"), "signal")
                kwargs["signal"] = SignalSpec(**kwargs["signal"])
            if kwargs.get("sweep") is not None:
                kwargs["sweep"] = SweepSpec.from_dict(kwargs["sweep"])
            return cls(**kwargs)
        except InvalidConfigError:
            raise
        except (InvalidInputError, TypeError, ValueError) as e:
            raise InvalidConfigError(f"Invalid config: {e}")

    @classmethod
    def load(cls, path) -> "SimConfig":
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except OSError as e:
            raise InvalidConfigError(f"Could not read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise InvalidConfigError(f"Config {path} is not valid JSON: {e}")
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {
            "setting": self.setting,
            "law": None if self.law is None else asdict(self.law),
            "covariance": None,
            "n": self.n,
            "p": self.p,
            "reps": self.reps,
            "alpha": float(self.alpha),
            "methods": list(self.methods),
            "signal": {"delta": float(self.signal.delta), "s": int(self.signal.s), "placement": self.signal.placement},
            "sweep": None if self.sweep is None else {**asdict(self.sweep), "values": list(self.sweep.values)},
            "seed": self.seed,
            "scale_mode": self.scale_mode,
            "parallelism": self.parallelism,
            "weight_m": None if self.weight_m is None else float(self.weight_m),
            "n_grid": list(self.n_grid),
            "tol": float(self.tol),
            "max_iter": self.max_iter,
        }
        if self.covariance is not None:
            cov = self.covariance
            out["covariance"] = {
                "kind": cov.kind,
                "rho": cov.rho,
                "matrix": None if cov.matrix is None else np.asarray(cov.matrix).tolist(),
            }
        return out

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON config; ``parallelism`` is left out."""
        data = self.to_dict()
        data.pop("parallelism")
        canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    @property
    def setting_like(self) -> SettingLike:
        if self.law is not None:
            return self.law, self.covariance
        return self.setting

    @property
    def method_specs(self) -> List[MethodSpec]:
        return parse_methods(self.methods)

    @property
    def solver_options(self) -> SolverOptions:
        return SolverOptions(self.tol, self.max_iter)

    @property
    def weight(self) -> WeightExponent:
        return WeightExponent.INVERSE_NORM if self.weight_m is None else WeightExponent(self.weight_m)


@dataclass
class SimReport:
    """Rejection rates per (method, grid value) with provenance."""

    rows: List[dict]
    config_hash: str
    seed: int
    scale_mode: str
    version: str = __version__
    runtimes: Dict[str, float] = field(default_factory=dict)
    flagged: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=REPORT_COLUMNS)

    @property
    def header(self) -> str:
        return (
            f"# config_hash={self.config_hash} seed={self.seed} "
            f"scale_mode={self.scale_mode} version={self.version}"
        )

    def to_csv_text(self) -> str:
        body = self.to_frame().to_csv(index=False, float_format="%.6f", lineterminator="\n")
        return f"{self.header}\n{body}"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv_text())

    def rate(self, method: str, grid_value: float = 0.0) -> float:
        for row in self.rows:
            if row["method"] == method and row["grid_value"] == grid_value:
                return row["reject_rate"]
        raise KeyError(f"no row for {method} at {grid_value}")


def timed_methods(sample, specs: Sequence[MethodSpec], alpha: float, scale_mode: str,
                   opts: SolverOptions) -> Dict[str, Tuple[Optional[bool], float]]:
    context = MethodContext(sample, alpha, scale_mode, opts)
    outcome = {}
    for spec in specs:
        start = time.perf_counter()
        try:
            reject = bool(context.run(spec).reject)
        except HDLocError as e:
            logger.debug("%s failed: %s", spec.tag, e)
            reject = None
        outcome[spec.tag] = (reject, time.perf_counter() - start)
    return outcome


def _grid_replication(index: int, config: SimConfig, signals: Sequence[SignalSpec]):
    """Run every method at every grid point on replication ``index``; all grid points share one stream."""
    specs = config.method_specs
    opts = config.solver_options
    results = []
    for signal in signals:
        sample = sample_panel(config.setting_like, config.n, config.p, signal, config.seed, (index,))
        results.append(timed_methods(sample, specs, config.alpha, config.scale_mode, opts))
    return results


def rejection_rows(outcomes: Sequence[Sequence[Dict[str, Tuple[Optional[bool], float]]]],
                   tags: Sequence[str], grid_values: Sequence[float], reps: int):
    """Aggregate replication outcomes into report rows, mean runtimes and flagged methods."""
    rows = []
    runtimes = {}
    flagged = []
    for g, grid_value in enumerate(grid_values):
        for tag in tags:
            decisions = [replication[g][tag][0] for replication in outcomes]
            runtimes.setdefault(tag, 0.0)
            runtimes[tag] += sum(replication[g][tag][1] for replication in outcomes)
            done = [d for d in decisions if d is not None]
            errors = len(decisions) - len(done)
            if done:
                rate = sum(done) / len(done)
                stderr = math.sqrt(rate * (1.0 - rate) / len(done))
            else:
                rate = stderr = float("nan")
            if errors > ERROR_FLAG_SHARE * reps and tag not in flagged:
                flagged.append(tag)
                logger.warning("%s failed in %d of %d replications at grid value %g", tag, errors, reps, grid_value)
            rows.append({
                "method": tag,
                "grid_value": float(grid_value),
                "reject_rate": rate,
                "stderr": stderr,
                "reps": reps,
                "errors": errors,
                "successes": len(done),
            })
    total = max(1, reps * len(grid_values))
    return rows, {tag: runtime / total for tag, runtime in runtimes.items()}, flagged


def _run_grid(config: SimConfig, signals: Sequence[SignalSpec], grid_values: Sequence[float]) -> SimReport:
    tags = [spec.tag for spec in config.method_specs]
    logger.info(
        "Running %d reps x %d grid points of %s (n=%d, p=%d, %s)",
        config.reps, len(signals), ",".join(tags), config.n, config.p, config.scale_mode,
    )
    work = partial(_grid_replication, config=config, signals=list(signals))
    outcomes = map_replications(work, range(config.reps), config.parallelism)
    rows, runtimes, flagged = rejection_rows(outcomes, tags, grid_values, config.reps)
    return SimReport(rows, config.config_hash, config.seed, config.scale_mode, __version__, runtimes, flagged)


def run_size_experiment(config: SimConfig) -> SimReport:
    """Empirical sizes at delta = 0; one row per method with grid_value 0."""
    if config.signal.delta != 0 or config.sweep is not None:
        raise InvalidConfigError("a size experiment needs signal.delta = 0 and no sweep")
    return _run_grid(config, [config.signal], [0.0])


def run_power_experiment(config: SimConfig) -> SimReport:
    """Rejection-rate curves over ``config.sweep``; grid_value is the swept delta or s."""
    if config.sweep is None:
        raise InvalidConfigError("a power experiment needs a sweep")
    return _run_grid(config, config.sweep.signals(), config.sweep.values)


def run_experiment(config: SimConfig) -> SimReport:
    return run_power_experiment(config) if config.sweep is not None else run_size_experiment(config)


def _true_scale(config: SimConfig) -> np.ndarray:
    _, covariance = resolve_setting(config.setting_like, config.p)
    return make_covariance(covariance).scales


def _bahadur_replication(index: int, config: SimConfig, n: int) -> Optional[float]:
    m = config.weight
    theta = config.signal.theta(config.p)
    try:
        sample = sample_panel(config.setting_like, n, config.p, config.signal, config.seed, (n, index))
        est = weighted_hr_estimate(sample, m, config.solver_options)
    except HDLocError as e:
        logger.debug("Bahadur replication %d at n=%d failed: %s", index, n, e)
        return None
    true_d = _true_scale(config)
    # the estimating equations fix D only up to a common factor
    true_d = true_d * math.exp(np.mean(np.log(est.d_hat)) - np.mean(np.log(true_d)))
    radii, signs = row_signs((sample.values - theta) / np.sqrt(true_d))
    positive = radii > 0
    if not np.all(positive) and m.m < 0:
        return None
    zeta = float(np.mean(radii[positive] ** (m.m - 1.0)))
    linear = (m.weights(radii)[:, None] * signs).sum(axis=0) / (math.sqrt(n) * zeta)
    remainder = math.sqrt(n) * (est.theta_hat - theta) / np.sqrt(est.d_hat) - linear
    return float(np.max(np.abs(remainder)))


def run_bahadur_diagnostic(config: SimConfig) -> pd.DataFrame:
    """
    Median and 90th percentile of ||C_n||_inf over replications for each n in ``config.n_grid``.

    C_n = n^1/2 D_hat^-1/2 (theta_hat - theta) - n^-1/2 zeta_{m-1}^-1 sum_i w(R_i) U_i,
    with R_i, U_i taken at the generating theta and the true scales.
    """
    rows = []
    for n in config.n_grid:
        work = partial(_bahadur_replication, config=config, n=n)
        values = [v for v in map_replications(work, range(config.reps), config.parallelism) if v is not None]
        errors = config.reps - len(values)
        if values:
            median, p90 = (float(q) for q in np.quantile(values, [0.5, 0.9]))
        else:
            median = p90 = float("nan")
        logger.info("Bahadur remainder at n=%d: median %.4f, p90 %.4f", n, median, p90)
        rows.append({"n": n, "median": median, "p90": p90, "reps": config.reps, "errors": errors})
    return pd.DataFrame(rows, columns=["n", "median", "p90", "reps", "errors"])


DEFAULT_QQ_LEVELS = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)


@dataclass
class GumbelQQReport:
    table: pd.DataFrame
    max_cdf_gap: float
    reps: int
    errors: int


def _t_max_replication(index: int, config: SimConfig) -> Optional[float]:
    try:
        sample = sample_panel(config.setting_like, config.n, config.p, config.signal, config.seed, (index,))
        est = weighted_hr_estimate(sample, config.weight, config.solver_options)
        return t_max_statistic(sample, config.weight, est)
    except HDLocError as e:
        logger.debug("T_MAX replication %d failed: %s", index, e)
        return None


def run_gumbel_qq(config: SimConfig, levels: Sequence[float] = DEFAULT_QQ_LEVELS) -> GumbelQQReport:
    """Null quantiles of T_MAX against the Gumbel limit F, plus the largest CDF gap."""
    if config.signal.delta != 0:
        raise InvalidConfigError("the Gumbel QQ diagnostic runs under the null (signal.delta = 0)")
    work = partial(_t_max_replication, config=config)
    values = np.array(
        [v for v in map_replications(work, range(config.reps), config.parallelism) if v is not None]
    )
    if values.size < 2:
        raise InvalidInputError("too few successful replications for a QQ table")
    levels = [float(level) for level in levels]
    table = pd.DataFrame({
        "level": levels,
        "empirical": np.quantile(values, levels),
        "theoretical": [gumbel_quantile(1.0 - level) for level in levels],
    })
    gap = float(stats.kstest(values, GUMBEL.cdf).statistic)
    return GumbelQQReport(table, gap, config.reps, config.reps - values.size)
