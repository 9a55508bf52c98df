#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
非定常計算のドライバ
ステップを進めながら反復回数・時間を記録し、指定ステップのスナップショットを保存する
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np
from tqdm import tqdm

from assembly.block_operator import BlockOperator
from common.errors import InvalidArgumentError, StepFailure
from common.matrix_io import dump_vector
from .schemes import SchemeSpec
from .steppers import SchemeStepper, SimulationState, SolverOptions, StepReport

logger = logging.getLogger(__name__)


def default_snapshot_steps(n_steps: int) -> List[int]:
    """N_t/4, N_t/2, N_t"""
    return sorted({max(1, n_steps // 4), max(1, n_steps // 2), n_steps})


@dataclass
class TransientResult:
    """スナップショット・ステップごとの記録・最終状態（失敗時は途中まで）"""
    scheme: SchemeSpec
    tau: float
    n_steps: int
    snapshots: Dict[int, np.ndarray] = field(default_factory=dict)
    reports: List[StepReport] = field(default_factory=list)
    final: Optional[SimulationState] = None
    failure: Optional[StepFailure] = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    @property
    def total_time(self) -> float:
        return float(sum(r.total_time for r in self.reports))

    def iterations_by_key(self) -> Dict[str, List[int]]:
        out: Dict[str, List[int]] = {}
        for r in self.reports:
            for key, value in r.iterations.items():
                out.setdefault(key, []).append(value)
        return out

    def time_by_key(self) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for r in self.reports:
            for key, value in r.wall_time.items():
                out[key] = out.get(key, 0.0) + value
        return out

    def average_iterations(self) -> Dict[str, float]:
        return {k: float(np.mean(v)) for k, v in self.iterations_by_key().items()}

    def energies(self) -> List[float]:
        return [r.energy for r in self.reports if r.energy is not None]


def dump_snapshot(op: BlockOperator, u: np.ndarray, step: int, directory: Path) -> List[Path]:
    """連続体ごとに u_{連続体}_{ステップ}.mtx を書き出す。"""
    paths = []
    for name, part in zip(op.names, op.split(u)):
        paths.append(dump_vector(part, Path(directory) / f"u_{name}_{step}.mtx", comment=f"step={step}"))
    return paths


def run_transient(
    op: BlockOperator,
    scheme: SchemeSpec,
    tau: float,
    n_steps: int,
    u0: np.ndarray,
    F: Optional[np.ndarray] = None,
    options: Optional[SolverOptions] = None,
    snapshot_steps: Optional[Iterable[int]] = None,
    startup_substeps: int = 1,
    monitor_energy: bool = False,
    energy_operator: Optional[BlockOperator] = None,
    dump_dir: Optional[Path] = None,
    progress: bool = False,
) -> TransientResult:
    """
    N_t ステップの時間発展を行う。

    Args:
        op: ブロック演算子（坑井込み）
        scheme: 時間スキーム
        tau: 時間刻み
        n_steps: ステップ数 N_t（1以上）
        u0: 初期値
        F: 右辺（省略時は op の右辺）
        snapshot_steps: 保存するステップ番号（省略時は N_t/4, N_t/2, N_t）
        startup_substeps: 3層スキームの立ち上げに使う後退Eulerの回数
        monitor_energy: ステップごとに ||u||_A^2 を記録するか
        energy_operator: エネルギー計算に使う演算子（省略時は op）
        dump_dir: 指定するとスナップショットをMatrixMarketで保存
        progress: tqdmで進捗を表示するか

    Returns:
        TransientResult。ステップが失敗した場合は failure に例外が入り、
        それまでのスナップショットと記録が残る。
    """
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidArgumentError(f"ステップ数は1以上の整数です: {n_steps}")
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (op.n_dofs,):
        raise InvalidArgumentError(f"初期値の次元が一致しません: {u0.shape} != ({op.n_dofs},)")
    wanted = set(default_snapshot_steps(n_steps) if snapshot_steps is None else snapshot_steps)

    stepper = SchemeStepper(op, scheme, tau, options, F, monitor_energy, energy_operator)
    result = TransientResult(scheme=scheme, tau=float(tau), n_steps=int(n_steps))
    state = SimulationState(u=u0.copy())
    if 0 in wanted:
        result.snapshots[0] = state.u.copy()

    logger.debug(f"時間発展を開始します: {scheme.label}, N_t={n_steps}, τ={tau:.4e}")
    with tqdm(total=n_steps, desc=scheme.label, disable=not progress) as bar:
        try:
            while state.step < n_steps:
                if scheme.levels == 3 and state.step == 0:
                    state, report = stepper.bootstrap(state, startup_substeps)
                else:
                    state, report = stepper.step(state)
                result.reports.append(report)
                if state.step in wanted:
                    result.snapshots[state.step] = state.u.copy()
                    if dump_dir is not None:
                        dump_snapshot(op, state.u, state.step, dump_dir)
                bar.update(1)
        except StepFailure as e:
            logger.error(f"時間発展が途中で失敗しました: {scheme.label}, step={e.step}: {e}", exc_info=True)
            result.failure = e
    result.final = state
    return result
