#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
参照解の計算とキャッシュ
細格子・Im1(θ=1)・N_t=1024 の解をスナップショットごとに保存して再利用する
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from common.errors import StepFailure
from timeloop.schemes import parse_scheme
from timeloop.transient import run_transient
from .problem import Problem

logger = logging.getLogger(__name__)

# スナップショットの時刻（T_max に対する割合）
SNAPSHOT_FRACTIONS = (0.25, 0.5, 1.0)

CACHE_ENV = "MCFLOW_CACHE_DIR"


@dataclass
class ReferenceTrajectory:
    n_steps: int
    tau: float
    snapshots: Dict[int, np.ndarray] = field(default_factory=dict)
    key: str = ""
    cached: bool = False

    def at_fraction(self, fraction: float) -> Optional[np.ndarray]:
        step = fraction * self.n_steps
        if step != int(step):
            return None
        return self.snapshots.get(int(step))


def fraction_steps(n_steps: int, fractions: Sequence[float] = SNAPSHOT_FRACTIONS) -> Dict[float, int]:
    """割合 → ステップ番号（整数にならない割合は除く）"""
    out = {}
    for frac in fractions:
        step = frac * n_steps
        if step >= 1 and step == int(step):
            out[frac] = int(step)
    return out


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


def reference_key(problem: Problem, n_steps: int) -> str:
    """ジオメトリ・格子・係数・N_t からキャッシュキー（SHA256）を作る。"""
    cfg = problem.config
    payload = {
        "fractures": hashlib.sha256(Path(cfg.geometry.fractures).read_bytes()).hexdigest(),
        "domain": [cfg.geometry.lx, cfg.geometry.ly],
        "fine": list(cfg.geometry.fine),
        "continua": [
            {"name": c.name, "kind": c.kind, "c": c.c, "k": c.k, "source": c.source} for c in cfg.continua
        ],
        "exchange": None if cfg.exchange is None else [vars(r) for r in cfg.exchange.rules],
        "well": None if cfg.well is None else vars(cfg.well),
        "t_max": cfg.time.t_max,
        "initial": cfg.time.initial,
        "n_steps": int(n_steps),
        "solver": vars(cfg.solver),
    }
    text = json.dumps(_jsonable(payload), sort_keys=True)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def cache_directory(out_dir: Path) -> Path:
    env = os.getenv(CACHE_ENV)
    return Path(env) if env else Path(out_dir) / "cache"


def _load_cached(path: Path, key: str) -> Optional[Dict[int, np.ndarray]]:
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=False) as data:
            if str(data["key"]) != key:
                logger.info(f"参照解キャッシュのキーが一致しないため再計算します: {path}")
                return None
            return {int(name.split("_", 1)[1]): data[name].copy() for name in data.files if name.startswith("step_")}
    except (OSError, KeyError, ValueError) as e:
        logger.warning(f"参照解キャッシュを読み込めませんでした: {path}: {e}")
        return None


def compute_reference(
    problem: Problem,
    n_steps: Optional[int] = None,
    cache_dir: Optional[Path] = None,
    progress: bool = False,
) -> ReferenceTrajectory:
    """
    参照解（細格子, Im1 θ=1）を計算する。キャッシュがあれば読み込む。

    Args:
        problem: 細格子の問題
        n_steps: ステップ数（省略時は設定の reference_nt）
        cache_dir: キャッシュの保存先（None なら保存しない）

    Raises:
        StepFailure: 参照解の時間発展に失敗
    """
    cfg = problem.config
    n_steps = cfg.time.reference_nt if n_steps is None else int(n_steps)
    tau = problem.tau(n_steps)
    key = reference_key(problem, n_steps)
    steps = sorted(set(fraction_steps(n_steps).values()))

    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"reference_{key[:16]}.npz"
        cached = _load_cached(path, key)
        if cached is not None and all(s in cached for s in steps):
            logger.info(f"参照解をキャッシュから読み込みました: {path}")
            return ReferenceTrajectory(n_steps=n_steps, tau=tau, snapshots=cached, key=key, cached=True)

    logger.info(f"参照解を計算中: Im1 (θ=1), N_t={n_steps}, τ={tau:.4e}")
    result = run_transient(
        problem.operator,
        parse_scheme("Im1"),
        tau,
        n_steps,
        problem.u0,
        options=cfg.solver,
        snapshot_steps=steps,
        progress=progress,
    )
    if not result.ok:
        raise StepFailure(f"参照解の計算に失敗しました: {result.failure}", step=result.failure.step, stats=result.failure.stats)

    reference = ReferenceTrajectory(n_steps=n_steps, tau=tau, snapshots=result.snapshots, key=key)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {f"step_{s}": u for s, u in result.snapshots.items()}
        np.savez(path, key=np.array(key), **arrays)
        logger.info(f"参照解をキャッシュに保存しました: {path}")
    return reference
