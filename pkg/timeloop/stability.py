#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
安定性の十分条件の確認
ImEx: (θ-1/2)A^(1) - A^(2)/2 ≥ 0、(σ+(μ-1)/2)A^(1) - (μ/2)A^(2) ≥ 0
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from common.errors import NotConvergedError
from common.sparse import min_eigenvalue, symmetrize
from .schemes import SchemeSpec
from .splitting import SplitOperator

logger = logging.getLogger(__name__)

HOLDS = "sufficient-condition-holds"
VIOLATED = "violated"
NOT_APPLICABLE = "not-applicable"

STABILITY_TOL = 1e-10


@dataclass(frozen=True)
class StabilityVerdict:
    verdict: str
    lambda_min: Optional[float] = None
    heuristic: bool = False

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS


def check_stability(scheme: SchemeSpec, split: Optional[SplitOperator] = None, tol: float = STABILITY_TOL) -> StabilityVerdict:
    """
    安定性の十分条件を確認する。

    陰的スキームはパラメータ条件だけを見る。ImExスキームは S を組み立てて
    λ_min(S) ≥ -tol·max diag(A) を判定する。L/U分割では A^(1) の対称部分を
    使うので判定は目安（heuristic=True）。

    Raises:
        NotConvergedError: 固有値の計算が収束しない
    """
    if not scheme.is_imex:
        verdict = HOLDS if scheme.stable_parameters() else VIOLATED
        logger.debug(f"安定性（パラメータ条件）: {scheme.label} → {verdict}")
        return StabilityVerdict(verdict)
    if split is None:
        return StabilityVerdict(NOT_APPLICABLE)

    A1 = symmetrize(split.implicit.stiffness)
    A2 = symmetrize(split.explicit.stiffness)
    if scheme.levels == 2:
        S = (scheme.theta - 0.5) * A1 - 0.5 * A2
    else:
        S = (scheme.sigma + 0.5 * (scheme.mu - 1.0)) * A1 - 0.5 * scheme.mu * A2

    heuristic = split.mode != "D"
    scale = max(float(np.max(np.abs((A1 + A2).diagonal()))) if A1.shape[0] else 0.0, 1.0)
    try:
        lam = min_eigenvalue(S)
    except NotConvergedError:
        logger.error(f"安定性判定の固有値計算に失敗しました: {scheme.label}", exc_info=True)
        raise
    ok = lam >= -tol * scale
    if scheme.levels == 3 and scheme.mu < 0.5:
        ok = False
    verdict = HOLDS if ok else VIOLATED
    logger.info(
        f"安定性判定: {scheme.label} → {verdict} (λ_min={lam:.3e}{', 目安' if heuristic else ''})"
    )
    return StabilityVerdict(verdict, float(lam), heuristic)
