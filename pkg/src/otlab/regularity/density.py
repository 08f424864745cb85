"""Hessian density inside normalized sections."""

from dataclasses import dataclass

import numpy as np

from ..errors import InsufficientResolutionError
from ..geometry import john_normalize
from .hessian import hessian_field


@dataclass
class DensityEstimate:
    bad_fraction: float
    band_fraction: float
    norm_size: float
    N: float
    cells: int
    invalid_cells: int


def section_density_estimate(u, cost, section, N, hess=None, multiplier=1):
    """Fraction of a section where ``||D^2u|| >= N a(S)``, plus the band fraction.

    ``a(S)`` is the normalized size from the section's John normalization
    (computed here if missing). The band is ``a/N <= ||D^2u|| <= N a``.
    Both fractions are relative to the full section volume; cells whose
    Hessian is invalid count in neither numerator.
    """
    if section.count < 10:
        raise InsufficientResolutionError(
            f"section has {section.count} cells; at least 10 are needed")
    if section.sandwich is None:
        john_normalize(section)
    a = section.norm_size
    if hess is None:
        hess = hessian_field(u, multiplier)
    norm = hess.norm[section.cells]
    ok = hess.valid[section.cells] & np.isfinite(norm)
    total = section.count
    bad = np.count_nonzero(ok & (norm >= N * a))
    band = np.count_nonzero(ok & (norm >= a / N) & (norm <= N * a))
    return DensityEstimate(bad / total, band / total, a, float(N), total,
                           int(total - ok.sum()))
