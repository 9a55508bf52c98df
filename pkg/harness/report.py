#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
CSVレポート
誤差表・収束率・時間・高速化率・安定性・オーバーサンプリングの各CSVを書き出す
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
import yaml

from common.errors import InvalidArgumentError
from timeloop.schemes import parse_scheme

logger = logging.getLogger(__name__)

ERROR_COLUMNS = [
    "scheme", "split", "Nt", "snapshot", "e_h1", "e_h2", "e_ms1", "e_H1",
    "time_total_s", "avg_iters_per_continuum",
]
METRICS = ("e_h1", "e_h2", "e_ms1", "e_H1")
FLOAT_FORMAT = "%.6g"


@dataclass(frozen=True)
class ErrorRow:
    """誤差表の1行（snapshot は時刻 t）"""
    scheme: str
    split: str
    Nt: int
    snapshot: float
    e_h1: Optional[float] = None
    e_h2: Optional[float] = None
    e_ms1: Optional[float] = None
    e_H1: Optional[float] = None
    time_total_s: Optional[float] = None
    avg_iters_per_continuum: str = ""


@dataclass(frozen=True)
class TimingRow:
    space: str
    scheme: str
    split: str
    Nt: int
    continuum: str
    time_s: float
    avg_iters: float


@dataclass(frozen=True)
class SpeedupRow:
    space: str
    Nt: int
    kind: str
    numerator: str
    denominator: str
    ratio: float


@dataclass(frozen=True)
class StabilityRow:
    scheme: str
    split: str
    verdict: str
    lambda_min: Optional[float]
    heuristic: bool


@dataclass(frozen=True)
class OversamplingRow:
    layers: int
    e_ms1: Optional[float]
    e_H1: Optional[float]
    basis_time_s: Optional[float]
    n_coarse: int


def format_iterations(averages: Dict[str, float]) -> str:
    """{'m': 3.1, 'f': 12.0} → 'm=3.1;f=12'"""
    return ";".join(f"{name}={value:.4g}" for name, value in averages.items())


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n", encoding="utf-8")
    logger.info(f"CSVを書き出しました: {path} ({len(frame)}行)")
    return path


def _frame(rows: Sequence, columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in rows], columns=list(columns))


def write_csv(report: Sequence[ErrorRow], path: Path) -> Path:
    """
    誤差表を書き出す（浮動小数は有効数字6桁、欠けた値は空欄）。

    Raises:
        InvalidArgumentError: 行が無い
        OSError: 書き込めない
    """
    if not report:
        raise InvalidArgumentError("書き出す行がありません")
    return _write_frame(_frame(report, ERROR_COLUMNS), path)


def _opt_float(value: str) -> Optional[float]:
    return None if value == "" else float(value)


def read_csv(path: Path) -> List[ErrorRow]:
    """write_csv の出力を読み戻す。"""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in ERROR_COLUMNS if c not in frame.columns]
    if missing:
        raise InvalidArgumentError(f"CSVの列が足りません: {missing}")
    rows = []
    for rec in frame.to_dict(orient="records"):
        rows.append(
            ErrorRow(
                scheme=rec["scheme"],
                split=rec["split"],
                Nt=int(rec["Nt"]),
                snapshot=float(rec["snapshot"]),
                e_h1=_opt_float(rec["e_h1"]),
                e_h2=_opt_float(rec["e_h2"]),
                e_ms1=_opt_float(rec["e_ms1"]),
                e_H1=_opt_float(rec["e_H1"]),
                time_total_s=_opt_float(rec["time_total_s"]),
                avg_iters_per_continuum=rec["avg_iters_per_continuum"],
            )
        )
    return rows


def observed_rate(coarse_error: float, fine_error: float) -> Optional[float]:
    """log2(e(N) / e(2N))"""
    if coarse_error is None or fine_error is None or coarse_error <= 0.0 or fine_error <= 0.0:
        return None
    return math.log2(coarse_error / fine_error)


def convergence_rates(report: Sequence[ErrorRow]) -> pd.DataFrame:
    """
    (scheme, split, snapshot) ごとに N_t と 2N_t の組から観測収束率を求める。

    Returns:
        列 scheme, split, snapshot, Nt, metric, rate の表
    """
    frame = _frame(report, ERROR_COLUMNS)
    out = []
    if frame.empty:
        return pd.DataFrame(columns=["scheme", "split", "snapshot", "Nt", "metric", "rate"])
    for (scheme, split, snapshot), group in frame.groupby(["scheme", "split", "snapshot"], sort=False):
        by_nt = {int(r["Nt"]): r for _, r in group.iterrows()}
        for nt in sorted(by_nt):
            if 2 * nt not in by_nt:
                continue
            for metric in METRICS:
                a, b = by_nt[nt][metric], by_nt[2 * nt][metric]
                if a is None or b is None or pd.isna(a) or pd.isna(b):
                    continue
                rate = observed_rate(float(a), float(b))
                if rate is not None:
                    out.append(dict(scheme=scheme, split=split, snapshot=snapshot, Nt=nt, metric=metric, rate=rate))
    return pd.DataFrame(out, columns=["scheme", "split", "snapshot", "Nt", "metric", "rate"])


def write_rates(report: Sequence[ErrorRow], path: Path) -> Path:
    return _write_frame(convergence_rates(report), path)


def write_timings(rows: Sequence[TimingRow], path: Path) -> Path:
    return _write_frame(_frame(rows, [f.name for f in fields(TimingRow)]), path)


def _coupled_key(scheme: str) -> Optional[tuple]:
    """ImEx とその陰的スキームを対応させるキー（family の次数と θ または μ）"""
    base = scheme[3:] if scheme.startswith("Ms-") else scheme
    try:
        spec = parse_scheme(base, split="D" if base.startswith("ImEx") else None)
    except InvalidArgumentError:
        return None
    order = spec.family.replace("ImEx", "Im")
    return (order, spec.theta) if spec.levels == 2 else (order, spec.mu)


def speedup_rows(timings: Iterable[TimingRow]) -> List[SpeedupRow]:
    """
    総時間から高速化率を求める。

    decoupled/coupled: 同じ空間・N_t で ImEx の時間 / 対応する陰的スキームの時間
    （ImEx1 ↔ Im1, ImEx2-SBDF ↔ Im2-BDF のように次数と θ・μ が同じもの）
    coarse/fine: 同じスキーム・N_t で粗格子の時間 / 細格子の時間
    """
    totals: Dict[tuple, float] = {}
    for t in timings:
        key = (t.space, t.scheme, t.split, t.Nt)
        totals[key] = totals.get(key, 0.0) + t.time_s

    def is_imex(scheme: str) -> bool:
        return (scheme[3:] if scheme.startswith("Ms-") else scheme).startswith("ImEx")

    rows: List[SpeedupRow] = []
    for (space, scheme, split, nt), total in totals.items():
        if not is_imex(scheme):
            continue
        key = _coupled_key(scheme)
        coupled = [
            (s, v) for (sp_, s, _, n), v in totals.items()
            if sp_ == space and n == nt and not is_imex(s) and key is not None and _coupled_key(s) == key
        ]
        if not coupled:
            logger.debug(f"{scheme} に対応する陰的スキームがありません（{space}, N_t={nt}）")
        for name, value in coupled[:1]:
            if value > 0.0:
                label = f"{scheme}-{split}" if split else scheme
                rows.append(SpeedupRow(space, nt, "decoupled/coupled", label, name, total / value))
    for (space, scheme, split, nt), total in totals.items():
        if space != "coarse":
            continue
        fine_scheme = scheme[3:] if scheme.startswith("Ms-") else scheme
        fine = totals.get(("fine", fine_scheme, split, nt))
        if fine:
            label = f"{fine_scheme}-{split}" if split else fine_scheme
            rows.append(SpeedupRow("coarse", nt, "coarse/fine", f"Ms-{label}", label, total / fine))
    return rows


def write_speedups(rows: Sequence[SpeedupRow], path: Path) -> Path:
    return _write_frame(_frame(rows, [f.name for f in fields(SpeedupRow)]), path)


def write_stability(rows: Sequence[StabilityRow], path: Path) -> Path:
    return _write_frame(_frame(rows, [f.name for f in fields(StabilityRow)]), path)


def write_oversampling(rows: Sequence[OversamplingRow], path: Path) -> Path:
    return _write_frame(_frame(rows, [f.name for f in fields(OversamplingRow)]), path)


def summarize(report: Sequence[ErrorRow]) -> pd.DataFrame:
    """ログ表示用に最終時刻の行だけを並べた表"""
    frame = _frame(report, ERROR_COLUMNS)
    if frame.empty:
        return frame
    last = frame.groupby(["scheme", "split", "Nt"], sort=False)["snapshot"].transform("max")
    return frame[np.isclose(frame["snapshot"].astype(float), last.astype(float))]


def write_run_info(info: Dict, path: Path) -> Path:
    """実行条件（DOF数・交換係数の既定値使用・参照解キーなど）を YAML で保存する。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(info, f, allow_unicode=True, sort_keys=False)
    logger.info(f"実行条件を保存しました: {path}")
    return path
