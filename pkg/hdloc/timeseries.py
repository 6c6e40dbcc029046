"""Return panels, Ljung-Box prefiltering and the subsampling experiment on real or synthetic data."""

# stdlib imports
import hashlib
import json
import logging
from dataclasses import dataclass, field
from functools import partial
from typing import List, Optional, Sequence, Tuple, Union

# third party imports
import numpy as np
import pandas as pd
from scipy import signal
from statsmodels.stats.diagnostic import acorr_ljungbox

# local imports
from ._version import __version__
from .distributions import rng_for
from .exceptions import DegenerateSeriesError, HDLocError, InvalidInputError
from .methods import NINE_METHODS, parse_methods
from .models import Sample, ScaleMode, SolverOptions, check_alpha
from .parallel import map_replications
from .simulation import SimReport, rejection_rows, timed_methods

logger = logging.getLogger(__name__)

MIN_PERIODS = 30
DEFAULT_LAGS = 10
SUBSAMPLE_BLOCK = 52


@dataclass(frozen=True, eq=False)
class SeriesPanel:
    """T x p matrix of returns; rows are periods, columns are assets."""

    values: np.ndarray
    labels: Optional[List[str]] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidInputError(f"panel must be a T x p matrix, got shape {values.shape}")
        if values.shape[0] < MIN_PERIODS or values.shape[1] < 1:
            raise InvalidInputError(f"panel needs T >= {MIN_PERIODS} periods and at least one column, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("panel entries must all be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        labels = [f"S{j + 1:04d}" for j in range(values.shape[1])] if self.labels is None else [str(c) for c in self.labels]
        if len(labels) != values.shape[1]:
            raise InvalidInputError(f"Expected {values.shape[1]} column labels, got {len(labels)}")
        object.__setattr__(self, "labels", labels)

    @property
    def periods(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def excess_returns(self, risk_free: Union[float, Sequence[float]]) -> "SeriesPanel":
        """X_tj = R_tj - rf_t for a constant or per-period risk-free rate."""
        rf = np.asarray(risk_free, dtype=float)
        if rf.ndim == 0:
            rf = np.full(self.periods, float(rf))
        if rf.shape != (self.periods,):
            raise InvalidInputError(f"risk-free series must have {self.periods} entries, got {rf.shape}")
        return SeriesPanel(self.values - rf[:, None], self.labels)

    def columns(self, keep: Sequence[int]) -> "SeriesPanel":
        keep = list(keep)
        return SeriesPanel(self.values[:, keep], [self.labels[j] for j in keep])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, columns=self.labels)

    def to_sample(self) -> Sample:
        return Sample(self.values, self.labels)

    def write_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.10g")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "SeriesPanel":
        sample = Sample.from_frame(frame)
        return cls(sample.values, sample.variable_names)

    @classmethod
    def read_csv(cls, path) -> "SeriesPanel":
        sample = Sample.read_csv(path)
        return cls(sample.values, sample.variable_names)


def ljung_box(series, lags: int = DEFAULT_LAGS) -> Tuple[float, float]:
    """
    Ljung-Box Q = T (T + 2) sum_{k<=h} rho_k^2 / (T - k) and its chi-square(h) upper-tail p-value.

    Raises:
        InvalidInputError: unless 1 <= lags < T.
        DegenerateSeriesError: for a constant series.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise InvalidInputError("ljung_box needs a finite one-dimensional series")
    if int(lags) != lags or not 1 <= lags < x.size:
        raise InvalidInputError(f"lags must be an integer in [1, T) with T={x.size}, got {lags}")
    if np.ptp(x) == 0:
        raise DegenerateSeriesError("constant series has no autocorrelation structure")
    result = acorr_ljungbox(x, lags=[int(lags)], return_df=True)
    return float(result["lb_stat"].iloc[-1]), float(result["lb_pvalue"].iloc[-1])


@dataclass
class PrefilterReport:
    lags: int
    alpha: float
    rows: List[dict] = field(default_factory=list)

    @property
    def dropped(self) -> List[str]:
        return [row["column"] for row in self.rows if not row["retained"]]

    @property
    def retained(self) -> List[str]:
        return [row["column"] for row in self.rows if row["retained"]]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=["column", "q_stat", "p_value", "retained", "note"])


def prefilter_panel(panel: SeriesPanel, lags: int = DEFAULT_LAGS,
                    alpha: float = 0.05) -> Tuple[SeriesPanel, PrefilterReport]:
    """Keep the columns whose Ljung-Box p-value is at least ``alpha``; constant columns are dropped with a note."""
    if not 0.0 <= alpha < 1.0:
        raise InvalidInputError(f"alpha must be in [0, 1), got {alpha}")
    report = PrefilterReport(lags=int(lags), alpha=float(alpha))
    keep = []
    for j, label in enumerate(panel.labels):
        try:
            q, p_value = ljung_box(panel.values[:, j], lags)
        except DegenerateSeriesError as e:
            report.rows.append({"column": label, "q_stat": np.nan, "p_value": np.nan, "retained": False, "note": str(e)})
            continue
        retained = p_value >= alpha
        report.rows.append({"column": label, "q_stat": q, "p_value": p_value, "retained": retained, "note": ""})
        if retained:
            keep.append(j)
    logger.info("Ljung-Box prefilter kept %d of %d columns", len(keep), panel.width)
    if not keep:
        raise DegenerateSeriesError("every column was removed by the Ljung-Box prefilter")
    return panel.columns(keep), report


def synthetic_return_panel(periods: int = 716, width: int = 424, autocorrelated_share: float = 0.05,
                           phi: float = 0.5, df: float = 4.0, market_loading: float = 0.5,
                           volatility: float = 0.02, seed: int = 0) -> SeriesPanel:
    """
    Heavy-tailed weekly-style return panel with a one-factor cross-section.

    Each period draws a common t(df) mixing scale, so rows are elliptical. The
    first ``autocorrelated_share`` of columns follow an AR(1) with coefficient
    ``phi`` and should be caught by the prefilter.
    """
    if not 0 <= autocorrelated_share < 1 or not -1 < phi < 1:
        raise InvalidInputError("autocorrelated_share must be in [0, 1) and phi in (-1, 1)")
    rng = rng_for(seed)
    mixing = np.sqrt(df / rng.chisquare(df, periods))
    market = rng.standard_normal(periods)
    idiosyncratic = rng.standard_normal((periods, width))
    shocks = volatility * mixing[:, None] * (market_loading * market[:, None] + idiosyncratic)
    ar_count = int(round(autocorrelated_share * width))
    if ar_count:
        shocks[:, :ar_count] = signal.lfilter([1.0], [1.0, -phi], shocks[:, :ar_count], axis=0)
    return SeriesPanel(shocks)


def subsample_indices(periods: int, n: int, seed: int, block: int, replication: int) -> np.ndarray:
    """Row indices for one replication, drawn without replacement."""
    if n > periods:
        raise InvalidInputError(f"cannot draw n={n} rows from T={periods} periods without replacement")
    return np.sort(rng_for(seed, block, replication).choice(periods, size=n, replace=False))


def _subsample_replication(index: int, values: np.ndarray, tags: Sequence[str], k_values: Sequence[int],
                           alpha: float, seed: int, scale_mode: str, opts: SolverOptions):
    specs = parse_methods(tags)
    outcome = []
    for k in k_values:
        n = SUBSAMPLE_BLOCK * k
        rows = subsample_indices(values.shape[0], n, seed, k, index)
        try:
            sample = Sample(values[rows])
        except HDLocError as e:
            logger.debug("subsample %d at K=%d is invalid: %s", index, k, e)
            outcome.append({tag: (None, 0.0) for tag in tags})
            continue
        outcome.append(timed_methods(sample, specs, alpha, scale_mode, opts))
    return outcome


def run_subsample_experiment(panel: SeriesPanel, methods: Sequence[str] = tuple(NINE_METHODS),
                             k_values: Sequence[int] = range(3, 9), reps: int = 100, alpha: float = 0.05,
                             seed: int = 0, scale_mode: Union[ScaleMode, str] = ScaleMode.SHARED,
                             parallelism: int = 1, opts: Optional[SolverOptions] = None) -> SimReport:
    """
    Rejection rates on subsamples of n = 52K rows for each K, in the SimReport layout with grid_value = n.
    """
    alpha = check_alpha(alpha)
    scale_mode = ScaleMode.coerce(scale_mode).value
    tags = [spec.tag for spec in parse_methods(methods)]
    k_values = [int(k) for k in k_values]
    if not k_values or min(k_values) < 1:
        raise InvalidInputError("k_values must be a non-empty list of positive integers")
    if int(reps) != reps or reps < 1:
        raise InvalidInputError(f"reps must be a positive integer, got {reps}")
    largest = SUBSAMPLE_BLOCK * max(k_values)
    if largest > panel.periods:
        raise InvalidInputError(f"K={max(k_values)} needs {largest} rows but the panel has {panel.periods}")
    opts = opts or SolverOptions()
    provenance = {
        "data": hashlib.sha256(panel.values.tobytes()).hexdigest(),
        "methods": tags,
        "k_values": k_values,
        "reps": int(reps),
        "alpha": alpha,
        "seed": int(seed),
        "scale_mode": scale_mode,
        "tol": opts.tol,
        "max_iter": opts.max_iter,
    }
    config_hash = hashlib.sha256(json.dumps(provenance, sort_keys=True).encode("utf-8")).hexdigest()
    work = partial(
        _subsample_replication,
        values=panel.values, tags=tags, k_values=k_values, alpha=alpha, seed=seed, scale_mode=scale_mode, opts=opts,
    )
    logger.info("Subsampling %d reps over K=%s on a %dx%d panel", reps, k_values, panel.periods, panel.width)
    outcomes = map_replications(work, range(int(reps)), parallelism)
    grid = [float(SUBSAMPLE_BLOCK * k) for k in k_values]
    rows, runtimes, flagged = rejection_rows(outcomes, tags, grid, int(reps))
    return SimReport(rows, config_hash, int(seed), scale_mode, __version__, runtimes, flagged)
