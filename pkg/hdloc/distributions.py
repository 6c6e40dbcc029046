"""Samplers for the elliptical location model X = theta + v * Gamma W and its four simulation settings."""

# stdlib imports
import logging
import math
from functools import lru_cache
from typing import Optional, Sequence, Tuple, Union

# third party imports
import numpy as np
from scipy import linalg
from scipy.special import gammaln

# local imports
from .exceptions import InvalidInputError, NonexistentMomentError
from .models import CovarianceModel, CovarianceSpec, MomentEstimates, RadialLaw, Sample, SignalSpec

logger = logging.getLogger(__name__)

SETTING_RHO = 0.5

SETTINGS = {
    "i": RadialLaw.normal(),
    "ii": RadialLaw.t(4),
    # read literally as gamma = 0.8: most rows come from the inflated component
    "iii": RadialLaw.mixture(0.8, 3),
    "iv": RadialLaw.mixture(0.2, 3),
}

SettingLike = Union[str, Tuple[RadialLaw, CovarianceSpec]]


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """
    Counter-based generator for (seed, stream...).

    Streams are keyed, not advanced, so replication r draws the same numbers
    whichever worker runs it.
    """
    if int(seed) != seed or seed < 0:
        raise InvalidInputError(f"seed must be a non-negative integer, got {seed}")
    key = tuple(int(s) for s in stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))


def ar1_trace_r_squared(rho: float, p: int) -> float:
    """tr(R^2) of the ar1 shape matrix: p + 2 sum_{k=1}^{p-1} (p - k) rho^(2k)."""
    k = np.arange(1, p)
    return float(p + 2.0 * np.sum((p - k) * rho ** (2.0 * k)))


def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.setflags(write=False)


@lru_cache(maxsize=32)
def _structured_covariance(kind: str, p: int, rho: Optional[float]) -> CovarianceModel:
    if kind == "identity":
        sigma = np.eye(p)
        model = CovarianceModel(sigma, np.eye(p), float(p))
    else:
        lags = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        sigma = rho ** lags
        model = CovarianceModel(sigma, linalg.cholesky(sigma, lower=True), ar1_trace_r_squared(rho, p))
    _freeze(model.sigma, model.factor)
    return model


def make_covariance(spec: CovarianceSpec) -> CovarianceModel:
    """Build Sigma with a Cholesky factor and tr(R^2) of its shape matrix R = D^-1/2 Sigma D^-1/2."""
    if spec.kind != "custom":
        return _structured_covariance(spec.kind, int(spec.p), spec.rho)
    sigma = np.array(spec.matrix, dtype=float)
    if not np.all(np.isfinite(sigma)) or not np.allclose(sigma, sigma.T):
        raise InvalidInputError("custom covariance must be a finite symmetric matrix")
    try:
        factor = linalg.cholesky(sigma, lower=True)
    except linalg.LinAlgError:
        raise InvalidInputError("custom covariance is not positive definite")
    scales = np.sqrt(np.diag(sigma))
    shape = sigma / np.outer(scales, scales)
    _freeze(sigma, factor)
    return CovarianceModel(sigma, factor, float(np.sum(shape ** 2)))


def resolve_setting(setting: SettingLike, p: int) -> Tuple[RadialLaw, CovarianceSpec]:
    if isinstance(setting, str):
        try:
            law = SETTINGS[setting.lower()]
        except KeyError:
            raise InvalidInputError(f"setting must be one of {sorted(SETTINGS)}, got {setting!r}")
        return law, CovarianceSpec.ar1(SETTING_RHO, p)
    try:
        law, covariance = setting
    except (TypeError, ValueError):
        raise InvalidInputError(f"setting must be a name or a (RadialLaw, CovarianceSpec) pair, got {setting!r}")
    if not isinstance(law, RadialLaw) or not isinstance(covariance, CovarianceSpec):
        raise InvalidInputError("explicit setting needs a RadialLaw and a CovarianceSpec")
    if covariance.p != p:
        raise InvalidInputError(f"covariance dimension {covariance.p} does not match p={p}")
    return law, covariance


def draw_mixing(law: RadialLaw, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw the mixing variable v."""
    if law.kind == "normal":
        return np.ones(size)
    if law.kind == "t":
        return np.sqrt(law.df / rng.chisquare(law.df, size))
    return np.where(rng.random(size) < law.gamma, law.sigma, 1.0)


def sample_panel(setting: SettingLike, n: int, p: int, signal: Optional[SignalSpec] = None,
                 seed: int = 0, stream: Sequence[int] = ()) -> Sample:
    """
    Draw n rows X_i = theta + v_i Gamma W_i with W_i ~ N(0, I_p).

    ``stream`` extends the seed key, e.g. ``(replication,)`` in experiments.
    """
    if int(n) != n or n < 1 or int(p) != p or p < 1:
        raise InvalidInputError(f"n and p must be positive integers, got n={n}, p={p}")
    law, covariance = resolve_setting(setting, p)
    model = make_covariance(covariance)
    theta = (signal or SignalSpec()).theta(p)
    rng = rng_for(seed, *stream)
    gaussian = rng.standard_normal((n, p)) @ model.factor.T
    mixing = draw_mixing(law, n, rng)
    return Sample(theta + mixing[:, None] * gaussian)


def _check_moment(law: RadialLaw, k: float) -> None:
    if not math.isfinite(k):
        raise InvalidInputError(f"moment exponent must be finite, got {k}")
    if law.kind == "t" and k >= law.df:
        raise NonexistentMomentError(f"E(v^{k:g}) is infinite for t({law.df:g}); need k < df")


def radial_moment(law: RadialLaw, k: float, mode: str = "closed-form",
                  n_samples: int = 1_000_000, seed: int = 0) -> float:
    """
    Moment E(v^k) of the mixing variable.

    Closed forms: 1 for the normal law, (df/2)^(k/2) Gamma((df-k)/2) / Gamma(df/2)
    for t(df), and (1 - gamma) + gamma sigma^k for the two-point mixture.
    ``mode="mc"`` averages ``n_samples`` direct draws of v instead.
    """
    k = float(k)
    _check_moment(law, k)
    if mode == "mc":
        if n_samples < 2:
            raise InvalidInputError(f"n_samples must be at least 2, got {n_samples}")
        return float(np.mean(draw_mixing(law, n_samples, rng_for(seed)) ** k))
    if mode != "closed-form":
        raise InvalidInputError(f"mode must be 'closed-form' or 'mc', got {mode!r}")
    if law.kind == "normal" or k == 0:
        return 1.0
    if law.kind == "t":
        df = law.df
        return float(math.exp(k / 2.0 * math.log(df / 2.0) + gammaln((df - k) / 2.0) - gammaln(df / 2.0)))
    return (1.0 - law.gamma) + law.gamma * law.sigma ** k


def zeta_moment(moments: Union[MomentEstimates, RadialLaw], k: float, p: int) -> float:
    """zeta_k from sample estimates, or p^(k/2) E(v^k) in the mixing limit of a radial law."""
    if isinstance(moments, RadialLaw):
        return p ** (k / 2.0) * radial_moment(moments, k)
    return moments[k]
