"""Asymptotic relative efficiencies of the weighted max-type tests in the mixing-variable limit."""

# stdlib imports
import logging
import math
from typing import Dict, Iterable, List, Optional, Tuple, Union

# third party imports
import numpy as np
import pandas as pd

# local imports
from .distributions import draw_mixing, radial_moment, rng_for
from .exceptions import InvalidInputError
from .models import AREReport, RadialLaw, WeightExponent

logger = logging.getLogger(__name__)

DISCREPANCY_TOLERANCE = 0.01

# published (IN-MAX vs MAX, IN-MAX vs SS-MAX, SS-MAX vs MAX) values keyed by law label
REFERENCE_ARE: Dict[str, Tuple[float, float, float]] = {
    "t(3)": (3.00, 1.18, 2.54),
    "t(4)": (2.00, 1.13, 1.76),
    "t(5)": (1.67, 1.11, 1.51),
    "t(6)": (1.50, 1.09, 1.38),
    "normal": (1.00, 1.00, 1.00),
    "MN(0.2,3)": (2.25, 1.09, 2.06),
    "MN(0.2,10)": (16.68, 1.19, 13.98),
    "MN(0.5,10)": (25.50, 1.67, 15.27),
}

DEFAULT_LAWS = [
    RadialLaw.t(3),
    RadialLaw.t(4),
    RadialLaw.t(5),
    RadialLaw.t(6),
    RadialLaw.normal(),
    RadialLaw.mixture(0.2, 3),
    RadialLaw.mixture(0.2, 10),
    RadialLaw.mixture(0.5, 10),
]

_COLUMNS = ("are_in_vs_max", "are_in_vs_ss", "are_ss_vs_max")


def are_weighted_pair(law: RadialLaw, m: Union[WeightExponent, float]) -> float:
    """ARE of the inverse-norm max test against the m-weighted one: E v^-2 E v^2m / (E v^(m-1))^2."""
    m = WeightExponent.coerce(m)
    if m.m == -1:
        return 1.0
    lower = radial_moment(law, m.m - 1.0)
    return radial_moment(law, -2.0) * radial_moment(law, 2.0 * m.m) / lower ** 2


def _closed_form(law: RadialLaw) -> Tuple[float, float, float]:
    inverse_sq = radial_moment(law, -2.0)
    inverse = radial_moment(law, -1.0)
    second = radial_moment(law, 2.0)
    return inverse_sq * second, inverse_sq / inverse ** 2, second * inverse ** 2


def _product_of_means(a: np.ndarray, b: np.ndarray) -> Tuple[Tuple[float, float, float], float]:
    """Return ((mean a * mean b, mean a, mean b), delta-method stderr of the product)."""
    n = a.size
    mean_a, mean_b = float(a.mean()), float(b.mean())
    var_a, var_b = float(a.var(ddof=1)), float(b.var(ddof=1))
    cov_ab = float(np.dot(a - mean_a, b - mean_b)) / (n - 1)
    variance = (mean_b ** 2 * var_a + mean_a ** 2 * var_b + 2.0 * mean_a * mean_b * cov_ab) / n
    return (mean_a * mean_b, mean_a, mean_b), math.sqrt(max(variance, 0.0))


def _monte_carlo(law: RadialLaw, draws: int, seed: int) -> Tuple[Tuple[float, float, float], float]:
    if draws < 2:
        raise InvalidInputError(f"mc draws must be at least 2, got {draws}")
    radial_moment(law, 2.0)  # raises when E v^2 does not exist
    v = draw_mixing(law, draws, rng_for(seed))
    inverse = float(np.mean(1.0 / v))
    (product, inverse_sq, second), stderr = _product_of_means(v ** -2.0, v ** 2.0)
    values = (product, inverse_sq / inverse ** 2, second * inverse ** 2)
    return values, stderr


def _discrepancies(values: Tuple[float, float, float], reference: Optional[Tuple[float, float, float]],
                   tolerance: float) -> List[str]:
    if reference is None:
        return []
    return [
        f"{name} {value:.4f} differs from published {ref:.2f}"
        for name, value, ref in zip(_COLUMNS, values, reference)
        if abs(value - ref) > tolerance
    ]


def are_report(law: RadialLaw, mode: str = "closed-form", mc_draws: int = 10_000_000, seed: int = 0,
               tolerance: float = DISCREPANCY_TOLERANCE) -> AREReport:
    """One row of the ARE table; disagreements with a published value are flagged, never hidden."""
    if mode == "closed-form":
        values, stderr = _closed_form(law), None
    elif mode == "mc":
        values, stderr = _monte_carlo(law, mc_draws, seed)
    else:
        raise InvalidInputError(f"mode must be 'closed-form' or 'mc', got {mode!r}")
    reference = REFERENCE_ARE.get(law.label)
    # an MC estimate is only flagged when the gap exceeds its own noise as well
    effective = tolerance if stderr is None else max(tolerance, 3.0 * stderr)
    report = AREReport(
        law=law,
        are_in_vs_max=values[0],
        are_in_vs_ss=values[1],
        are_ss_vs_max=values[2],
        mode=mode,
        mc_stderr=stderr,
        reference=reference,
        discrepancies=_discrepancies(values, reference, effective),
    )
    if report.flagged:
        logger.warning("ARE for %s disagrees with published values: %s", law.label, "; ".join(report.discrepancies))
    return report


def are_table(laws: Optional[Iterable[RadialLaw]] = None, mode: str = "closed-form",
              mc_draws: int = 10_000_000, seed: int = 0) -> List[AREReport]:
    laws = DEFAULT_LAWS if laws is None else list(laws)
    return [are_report(law, mode, mc_draws, seed) for law in laws]


def are_frame(reports: Iterable[AREReport]) -> pd.DataFrame:
    return pd.DataFrame([report.as_row() for report in reports])


def write_are_csv(reports: Iterable[AREReport], path) -> None:
    are_frame(reports).to_csv(path, index=False, float_format="%.6f")


def are_over_m(law: RadialLaw, m_grid: Iterable[float]) -> pd.DataFrame:
    """ARE(IN-MAX, m-weighted MAX) for each m in the grid."""
    rows = []
    for m in m_grid:
        weight = WeightExponent.coerce(m)
        rows.append({"law": law.label, "m": weight.m, "are": are_weighted_pair(law, weight)})
    return pd.DataFrame(rows, columns=["law", "m", "are"])


def finite_p_are(law: RadialLaw, p: int, draws: int = 20_000, seed: int = 0) -> Tuple[float, float]:
    """
    Finite-p estimate of E(R_p^-2) E(R_p^2) from full p-vectors v W, W ~ N(0, I_p).

    Returns the estimate and its delta-method standard error. As p grows the
    estimate approaches E v^-2 E v^2.
    """
    if int(p) != p or p < 3:
        raise InvalidInputError(f"p must be an integer >= 3, got {p}")
    if draws < 2:
        raise InvalidInputError(f"draws must be at least 2, got {draws}")
    rng = rng_for(seed, int(p))
    v = draw_mixing(law, draws, rng)
    # ||W||^2 of a standard normal p-vector is chi-square with p degrees of freedom
    radius_sq = v ** 2 * rng.chisquare(int(p), draws) / p
    (product, _, _), stderr = _product_of_means(1.0 / radius_sq, radius_sq)
    return product, stderr
