"""Direct and layer-cake W^{2,p} integrals of a Hessian field."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameterError


@dataclass
class W2pResult:
    p: float
    direct: float
    bound: float
    region_measure: float
    levels: list
    dropped_cells: int

    def as_row(self):
        return {"p": self.p, "direct": self.direct, "layer_cake_bound": self.bound,
                "region_measure": self.region_measure, "dropped_cells": self.dropped_cells}


def w2p_norm(hess, region=None, p=2.0, exclude=None, M=4.0, table=None):
    """``sum ||D^2u||^p * cell volume`` over ``region`` and its layer-cake bound.

    The bound is ``|region| + p * sum_k M^{(k+1)p} |D_k cap region|`` with
    ``D_k = {||D^2u|| >= M^k}``, summed until the sets are empty; it
    dominates the direct value for any grid function. ``M`` is taken from
    ``table`` when one is given. Cells outside the valid mask or inside
    ``exclude`` are dropped from ``region`` and counted.
    """
    if p < 1:
        raise InvalidParameterError("p must be >= 1")
    if table is not None:
        M = table.M
    if M <= 1:
        raise InvalidParameterError("M must exceed 1")
    region = np.ones(hess.grid.shape, dtype=bool) if region is None else np.asarray(region, bool)
    use = region & hess.valid & np.isfinite(hess.norm)
    if exclude is not None:
        ex = exclude.cells if hasattr(exclude, "cells") else np.asarray(exclude, dtype=bool)
        use &= ~ex
    dropped = int(region.sum() - use.sum())
    vol = hess.grid.cell_volume
    norm = hess.norm[use]
    direct = float(np.sum(norm ** p) * vol)
    measure = float(use.sum() * vol)
    bound = measure
    levels = []
    k = 0
    while True:
        dk = float(np.count_nonzero(norm >= M ** k) * vol)
        if dk == 0:
            break
        levels.append(dk)
        bound += p * M ** ((k + 1) * p) * dk
        k += 1
    return W2pResult(float(p), direct, float(bound), measure, levels, dropped)
