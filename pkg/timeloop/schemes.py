#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
時間スキームの定義
2層（θ）・3層（μ, σ）の陰的スキームとImExスキーム、名前付きプリセット
"""

import logging
import re
from dataclasses import dataclass
from typing import Dict, Optional

from common.errors import InvalidArgumentError

logger = logging.getLogger(__name__)

FAMILIES = ("Im1", "Im2", "ImEx1", "ImEx2")
SPLIT_MODES = ("D", "L", "U")


@dataclass(frozen=True)
class SchemeSpec:
    """
    時間スキーム。

    family: Im1 / Im2 / ImEx1 / ImEx2
    theta: 2層スキームの重み
    mu, sigma: 3層スキームのパラメータ
    split: ImExの分割モード（D / L / U）、陰的スキームでは None
    """
    family: str
    theta: float = 1.0
    mu: float = 1.5
    sigma: float = 0.0
    split: Optional[str] = None
    preset: Optional[str] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgumentError(f"未知のスキーム族です: {self.family} (候補: {FAMILIES})")
        if self.is_imex:
            if self.split not in SPLIT_MODES:
                raise InvalidArgumentError(f"ImExスキームには分割モード {SPLIT_MODES} が必要です: {self.split}")
        elif self.split is not None:
            raise InvalidArgumentError(f"陰的スキーム {self.family} に分割モードは指定できません")

    @property
    def levels(self) -> int:
        return 2 if self.family in ("Im1", "ImEx1") else 3

    @property
    def is_imex(self) -> bool:
        return self.family.startswith("ImEx")

    @property
    def name(self) -> str:
        """レポート用の名前（プリセット名があればそれ）"""
        if self.preset:
            return self.preset
        if self.levels == 2:
            return f"{self.family}(theta={self.theta:g})"
        return f"{self.family}(mu={self.mu:g},sigma={self.sigma:g})"

    @property
    def label(self) -> str:
        return f"{self.name}-{self.split}" if self.is_imex else self.name

    def stable_parameters(self) -> bool:
        """パラメータについての十分条件（θ ≥ 1/2、または μ ≥ 1/2 かつ σ ≥ (1-μ)/2）"""
        if self.levels == 2:
            return self.theta >= 0.5
        return self.mu >= 0.5 and self.sigma >= (1.0 - self.mu) / 2.0

    def implicit_weights(self):
        """(質量の係数, τ·A^(1) の係数)。τで割った形ではなく M u と τ A u の係数。"""
        if self.levels == 2:
            return 1.0, self.theta
        return self.mu, self.sigma + self.mu - 0.5


# 名前付きプリセット（family, パラメータ）
PRESETS: Dict[str, Dict] = {
    "Im1": dict(family="Im1", theta=1.0),
    "Im1-CN": dict(family="Im1", theta=0.5),
    "Im2-LF": dict(family="Im2", mu=0.5, sigma=0.0),
    "Im2-CN": dict(family="Im2", mu=1.0, sigma=0.0),
    "Im2-BDF": dict(family="Im2", mu=1.5, sigma=0.0),
    "ImEx1": dict(family="ImEx1", theta=1.0),
    "ImEx1-CN": dict(family="ImEx1", theta=0.5),
    "ImEx2-CNAB": dict(family="ImEx2", mu=1.0, sigma=0.0),
    "ImEx2-SBDF": dict(family="ImEx2", mu=1.5, sigma=0.0),
    "ImEx2-CNLF": dict(family="ImEx2", mu=0.5, sigma=0.5),
}

_GENERIC = re.compile(r"^(Im1|Im2|ImEx1|ImEx2)\((.*)\)$")


def _parse_params(text: str, source: str) -> Dict[str, float]:
    params: Dict[str, float] = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise InvalidArgumentError(f"スキームのパラメータは key=value 形式です: {source}")
        key, value = (s.strip() for s in part.split("=", 1))
        if key not in ("theta", "mu", "sigma"):
            raise InvalidArgumentError(f"未知のスキームパラメータです: {key} ({source})")
        try:
            params[key] = float(value)
        except ValueError as e:
            raise InvalidArgumentError(f"パラメータを数値に変換できません: {part} ({source})") from e
    return params


def parse_scheme(
    name: str,
    split: Optional[str] = None,
    theta: Optional[float] = None,
    mu: Optional[float] = None,
    sigma: Optional[float] = None,
) -> SchemeSpec:
    """
    スキーム名からSchemeSpecを作る。

    プリセット名（Im1, Im2-BDF, ImEx2-SBDF など）、または
    "Im1(theta=0.75)" や "ImEx2(mu=0.5,sigma=0.3)" の形式を受け付ける。
    family だけの名前（"Im2" など）は引数の theta / mu / sigma を使う。

    Raises:
        InvalidArgumentError: 未知の名前・パラメータ
    """
    name = name.strip()
    # "Im1" / "ImEx1" に θ ≠ 1 が与えられたら family 名として扱う
    if name in ("Im1", "ImEx1") and theta is not None and float(theta) != PRESETS[name]["theta"]:
        return SchemeSpec(family=name, theta=float(theta), split=split if name == "ImEx1" else None)
    if name in PRESETS:
        params = dict(PRESETS[name])
        # CNLFのσは外から変えられる（μ=1/2固定）
        if name == "ImEx2-CNLF" and sigma is not None:
            params["sigma"] = float(sigma)
        return SchemeSpec(split=split if params["family"].startswith("ImEx") else None, preset=name, **params)

    match = _GENERIC.match(name)
    if match:
        family, args = match.groups()
        params = _parse_params(args, name)
        return SchemeSpec(family=family, split=split if family.startswith("ImEx") else None, **params)

    if name in FAMILIES:
        params = {}
        if theta is not None:
            params["theta"] = float(theta)
        if mu is not None:
            params["mu"] = float(mu)
        if sigma is not None:
            params["sigma"] = float(sigma)
        return SchemeSpec(family=name, split=split if name.startswith("ImEx") else None, **params)

    raise InvalidArgumentError(f"未知のスキーム名です: {name} (プリセット: {', '.join(PRESETS)})")
