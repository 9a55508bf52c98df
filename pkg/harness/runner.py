#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
スイープの実行
(空間, スキーム, 分割, N_t) の組ごとに時間発展を行い、参照解との誤差・反復回数・時間を集めてCSVに書き出す
"""

import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from tqdm import tqdm

from common.errors import McflowError, NotConvergedError
from timeloop.schemes import SchemeSpec, parse_scheme
from timeloop.splitting import split_operator
from timeloop.stability import NOT_APPLICABLE, check_stability
from timeloop.transient import TransientResult, run_transient
from .config import RunConfig
from .errors import compute_errors
from .problem import MultiscaleProblem, Problem, build_multiscale, build_problem
from .reference import ReferenceTrajectory, cache_directory, compute_reference, fraction_steps
from .report import (
    ErrorRow,
    OversamplingRow,
    StabilityRow,
    TimingRow,
    format_iterations,
    speedup_rows,
    write_csv,
    write_oversampling,
    write_rates,
    write_run_info,
    write_speedups,
    write_stability,
    write_timings,
)

logger = logging.getLogger(__name__)

COARSE_PREFIX = "Ms-"


@dataclass
class CellResult:
    """スイープの1セル分の結果"""
    rows: List[ErrorRow] = field(default_factory=list)
    timings: List[TimingRow] = field(default_factory=list)
    failed: bool = False


@dataclass
class CaseReport:
    rows: List[ErrorRow] = field(default_factory=list)
    timings: List[TimingRow] = field(default_factory=list)
    stability: List[StabilityRow] = field(default_factory=list)
    oversampling: List[OversamplingRow] = field(default_factory=list)
    paths: Dict[str, Path] = field(default_factory=dict)
    n_failures: int = 0

    @property
    def ok(self) -> bool:
        return self.n_failures == 0


def scheme_label(spec: SchemeSpec, space: str) -> str:
    return f"{COARSE_PREFIX}{spec.name}" if space == "coarse" else spec.name


def _timed_runs(
    op, u0, spec: SchemeSpec, tau: float, nt: int, config: RunConfig, steps: List[int], dump_dir: Optional[Path]
) -> Tuple[TransientResult, float]:
    """repetitions 回実行し、時間の中央値に当たる結果と中央値を返す。"""
    runs: List[Tuple[float, TransientResult]] = []
    for rep in range(config.output.repetitions):
        start = time.perf_counter()
        result = run_transient(
            op,
            spec,
            tau,
            nt,
            u0,
            options=config.solver,
            snapshot_steps=steps,
            startup_substeps=config.time.startup_substeps,
            monitor_energy=config.output.monitor_energy,
            dump_dir=dump_dir if rep == 0 else None,
        )
        runs.append((time.perf_counter() - start, result))
        if not result.ok:
            return result, runs[-1][0]
    runs.sort(key=lambda r: r[0])
    median = statistics.median(t for t, _ in runs)
    return runs[len(runs) // 2][1], median


def _failure_rows(label: str, split: str, nt: int, t_max: float, message: str) -> List[ErrorRow]:
    return [
        ErrorRow(scheme=label, split=split, Nt=nt, snapshot=frac * t_max, avg_iters_per_continuum=message)
        for frac in fraction_steps(nt)
    ]


def run_cell(
    problem: Problem,
    ms: Optional[MultiscaleProblem],
    reference: ReferenceTrajectory,
    space: str,
    spec: SchemeSpec,
    nt: int,
) -> CellResult:
    """
    1つの (空間, スキーム, 分割, N_t) を実行して誤差と時間を集める。

    失敗しても例外は投げず、空欄の誤差と失敗内容を持つ行を返す。
    """
    config = problem.config
    label = scheme_label(spec, space)
    split = spec.split or ""
    by_fraction = fraction_steps(nt)
    cell = CellResult()
    try:
        if space == "coarse":
            op, u0, mspace = ms.operator, ms.u0, ms.space
        else:
            op, u0, mspace = problem.operator, problem.u0, None
        dump_dir = None
        if config.output.dump_snapshots:
            tag = f"{label}-{split}" if split else label
            dump_dir = config.output.directory / "snapshots" / f"{tag}_{nt}"

        result, elapsed = _timed_runs(op, u0, spec, problem.tau(nt), nt, config, sorted(by_fraction.values()), dump_dir)
        if not result.ok:
            cell.failed = True
            cell.rows = _failure_rows(label, split, nt, config.time.t_max, f"failed at step {result.failure.step}")
            return cell

        averages = result.average_iterations()
        iters_text = format_iterations(averages)
        maps = problem.coarse_map.for_continua(problem.kinds)
        for frac, step in by_fraction.items():
            u_ref = reference.at_fraction(frac)
            if u_ref is None:
                logger.warning(f"参照解に t={frac}·T_max のスナップショットがありません: {label} N_t={nt}")
                continue
            norms = compute_errors(u_ref, result.snapshots[step], problem.base_operator, maps, mspace)
            cell.rows.append(
                ErrorRow(
                    scheme=label,
                    split=split,
                    Nt=nt,
                    snapshot=frac * config.time.t_max,
                    e_h1=norms.e_h1,
                    e_h2=norms.e_h2,
                    e_ms1=norms.e_ms1,
                    e_H1=norms.e_H1,
                    time_total_s=elapsed,
                    avg_iters_per_continuum=iters_text,
                )
            )
        for key, seconds in result.time_by_key().items():
            cell.timings.append(TimingRow(space, label, split, nt, key, seconds, averages.get(key, 0.0)))
        logger.info(f"{label}{'-' + split if split else ''} N_t={nt}: {elapsed:.3f}秒, 反復 {iters_text}")
    except Exception as e:
        logger.error(f"スイープのセルが失敗しました: {label} {split} N_t={nt}: {e}", exc_info=True)
        cell.failed = True
        cell.rows = _failure_rows(label, split, nt, config.time.t_max, f"failed: {type(e).__name__}")
    return cell


def _stability_rows(problem: Problem, specs: List[SchemeSpec]) -> List[StabilityRow]:
    rows = []
    for spec in specs:
        if not spec.is_imex:
            continue
        try:
            verdict = check_stability(spec, split_operator(problem.operator, spec.split))
            rows.append(StabilityRow(spec.name, spec.split, verdict.verdict, verdict.lambda_min, verdict.heuristic))
        except NotConvergedError:
            rows.append(StabilityRow(spec.name, spec.split, NOT_APPLICABLE, None, spec.split != "D"))
    return rows


def _oversampling_rows(
    problem: Problem, reference: ReferenceTrajectory, jobs: int, progress: bool
) -> Tuple[List[OversamplingRow], int]:
    """層数を変えて Ms-Im1 を study_nt ステップ実行し、T_max での誤差を比べる。"""
    config = problem.config
    nt = config.nlmc.study_nt
    spec = parse_scheme("Im1")
    u_ref = reference.at_fraction(1.0)
    rows, failures = [], 0
    for layers in config.nlmc.study_layers:
        logger.info(f"オーバーサンプリングの検証: layers={layers}")
        try:
            ms = build_multiscale(problem, layers=layers, jobs=jobs, progress=progress)
            result = run_transient(ms.operator, spec, problem.tau(nt), nt, ms.u0, options=config.solver, snapshot_steps=[nt])
            if not result.ok:
                raise result.failure
            maps = problem.coarse_map.for_continua(problem.kinds)
            norms = compute_errors(u_ref, result.snapshots[nt], problem.base_operator, maps, ms.space)
            rows.append(OversamplingRow(layers, norms.e_ms1, norms.e_H1, ms.basis_time, ms.space.n_coarse))
        except McflowError as e:
            logger.error(f"オーバーサンプリングの検証に失敗しました: layers={layers}: {e}", exc_info=True)
            failures += 1
            rows.append(OversamplingRow(layers, None, None, None, 0))
    return rows, failures


def run_case(config: RunConfig, progress: bool = False) -> CaseReport:
    """
    設定に書かれたスイープをすべて実行し、CSVを書き出す。

    個々のセルの失敗は失敗行として記録し、スイープは続ける。

    Returns:
        CaseReport（n_failures が0でなければ部分的な失敗）

    Raises:
        McflowError: 問題の準備・参照解の計算に失敗
    """
    out = Path(config.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    jobs = config.output.jobs
    problem = build_problem(config)
    reference = compute_reference(problem, cache_dir=cache_directory(out), progress=progress)

    ms: Optional[MultiscaleProblem] = None
    if "coarse" in config.schemes.spaces:
        ms = build_multiscale(problem, jobs=jobs, progress=progress)

    specs = config.scheme_specs()
    cells = [(space, spec, nt) for space in config.schemes.spaces for spec in specs for nt in config.time.nt]
    logger.info(f"スイープを開始します: {len(cells)}件 (並列数 {jobs})")

    # スレッドから同時に組み立てないよう先に行列を作っておく
    problem.operator.stiffness
    problem.base_operator.stiffness
    if ms is not None:
        ms.operator.stiffness

    report = CaseReport()
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        futures = [executor.submit(run_cell, problem, ms, reference, *cell) for cell in cells]
        for future in tqdm(futures, desc="sweep", disable=not progress):
            result = future.result()
            report.rows.extend(result.rows)
            report.timings.extend(result.timings)
            report.n_failures += int(result.failed)

    if config.check_stability:
        report.stability = _stability_rows(problem, specs)
    if config.nlmc.study_layers:
        report.oversampling, failures = _oversampling_rows(problem, reference, jobs, progress)
        report.n_failures += failures

    if report.rows:
        report.paths["errors"] = write_csv(report.rows, out / "errors.csv")
        report.paths["rates"] = write_rates(report.rows, out / "rates.csv")
    if report.timings:
        report.paths["timings"] = write_timings(report.timings, out / "timings.csv")
        report.paths["speedups"] = write_speedups(speedup_rows(report.timings), out / "speedups.csv")
    if report.stability:
        report.paths["stability"] = write_stability(report.stability, out / "stability.csv")
    if report.oversampling:
        report.paths["oversampling"] = write_oversampling(report.oversampling, out / "oversampling.csv")

    info = {
        "config": str(config.source) if config.source else None,
        "continua": list(config.names),
        "dof_fine": int(problem.operator.n_dofs),
        "dof_coarse": int(ms.space.n_coarse) if ms is not None else None,
        "layers": config.nlmc.layers if ms is not None else None,
        "basis_time_s": float(ms.basis_time) if ms is not None else None,
        "projected_mass_deviation": float(ms.coarse.projected_mass_deviation) if ms is not None else None,
        "exchange_defaulted": problem.exchange_defaulted,
        "well_cells": len(problem.well.cells) if problem.well is not None else 0,
        "reference": {"nt": reference.n_steps, "key": reference.key, "cached": reference.cached},
        "n_cells": len(cells),
        "n_failures": report.n_failures,
    }
    report.paths["run_info"] = write_run_info(info, out / "run_info.yaml")
    return report
