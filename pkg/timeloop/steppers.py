#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
時間ステップの実行
2層・3層スキームの1ステップ、3層スキームの立ち上げ、エネルギー汎関数
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from tenacity import RetryCallState, Retrying, retry_if_exception_type, stop_after_attempt

from assembly.block_operator import BlockOperator
from common.errors import FactorizationError, InvalidArgumentError, NotConvergedError, StateError, StepFailure
from common.krylov import DEFAULT_RTOL, SolveStats, cg_solve, make_preconditioner
from common.sparse import as_csr
from .schemes import SchemeSpec
from .splitting import split_operator

logger = logging.getLogger(__name__)

COUPLED_KEY = "all"

# L分割は前進（小さい k から）、U分割は後退の順で連続体を解く
SWEEP_ORDER = {"D": "diagonal", "L": "forward", "U": "backward"}


@dataclass(frozen=True)
class SolverOptions:
    rtol: float = DEFAULT_RTOL
    max_iter: int = 10000
    preconditioner: str = "ilu0"


@dataclass
class SimulationState:
    """u^n, u^{n-1}, ステップ番号 n, 時刻 t_n"""
    u: np.ndarray
    u_prev: Optional[np.ndarray] = None
    step: int = 0
    time: float = 0.0

    def check(self, n_dofs: int) -> None:
        if self.u.shape != (n_dofs,):
            raise InvalidArgumentError(f"状態ベクトルの次元が一致しません: {self.u.shape} != ({n_dofs},)")
        if self.u_prev is not None and self.u_prev.shape != (n_dofs,):
            raise InvalidArgumentError(f"u^(n-1) の次元が一致しません: {self.u_prev.shape} != ({n_dofs},)")


@dataclass
class StepReport:
    """1ステップの連続体ごとの反復回数・時間とエネルギー診断値"""
    step: int
    time: float
    iterations: Dict[str, int] = field(default_factory=dict)
    wall_time: Dict[str, float] = field(default_factory=dict)
    energy: Optional[float] = None

    @property
    def total_time(self) -> float:
        return float(sum(self.wall_time.values()))


def _log_fallback(retry_state: RetryCallState) -> None:
    exc = retry_state.outcome.exception() if retry_state.outcome else None
    logger.warning(f"前処理を切り替えて再試行します (attempt={retry_state.attempt_number}): {exc}")


class ImplicitSystem:
    """
    陰的部分 (a M + b A^(1)) u = rhs の解法。

    連続体間の結合が無ければブロックごと、結合スキームなら全体を一度に、
    L/U分割なら三角ブロックを連続体ごとに代入しながら解く。
    行列と前処理は作成後キャッシュする。
    """

    def __init__(
        self,
        implicit: BlockOperator,
        mass_coef: float,
        stiff_coef: float,
        options: SolverOptions,
        sweep: str = "coupled",
    ):
        if sweep not in ("coupled", "diagonal", "forward", "backward"):
            raise InvalidArgumentError(f"未知の解法順序です: {sweep}")
        self.implicit = implicit
        self.mass_coef = float(mass_coef)
        self.stiff_coef = float(stiff_coef)
        self.options = options
        self.sweep = sweep if implicit.has_coupling() else "diagonal"
        self._matrices: Dict[str, sp.csr_matrix] = {}
        self._preconditioners: Dict[Tuple[str, str], object] = {}
        self._working: Dict[str, str] = {}

    def _matrix(self, key: str) -> sp.csr_matrix:
        if key not in self._matrices:
            if key == COUPLED_KEY:
                mass, A = self.implicit.mass_diagonal(), self.implicit.stiffness
            else:
                a = self.implicit.index_of(key)
                mass, A = self.implicit.mass[a], self.implicit.blocks[a][a]
            self._matrices[key] = as_csr(sp.diags(self.mass_coef * mass) + self.stiff_coef * A)
        return self._matrices[key]

    def _preconditioner(self, key: str, name: str):
        if (key, name) not in self._preconditioners:
            self._preconditioners[(key, name)] = make_preconditioner(self._matrix(key), name)
        return self._preconditioners[(key, name)]

    def _solve_one(self, key: str, b: np.ndarray, x0: np.ndarray) -> Tuple[np.ndarray, SolveStats]:
        """ILU(0)で失敗・未収束ならJacobiに切り替えて解き直す。"""
        first = self._working.get(key, self.options.preconditioner)
        chain = [first] + (["jacobi"] if first != "jacobi" else [])
        matrix = self._matrix(key)
        result: List = []
        retrying = Retrying(
            stop=stop_after_attempt(len(chain)),
            retry=retry_if_exception_type((FactorizationError, NotConvergedError)),
            before_sleep=_log_fallback,
            reraise=True,
        )
        for attempt in retrying:
            with attempt:
                name = chain[attempt.retry_state.attempt_number - 1]
                pre = self._preconditioner(key, name)
                x, stats = cg_solve(
                    matrix, b, rtol=self.options.rtol, max_iter=self.options.max_iter, x0=x0, preconditioner=pre
                )
                if not stats.converged:
                    raise NotConvergedError(f"CGが収束しませんでした ({key}, precond={name})", stats)
                self._working[key] = name
                result = [x, stats]
        return result[0], result[1]

    def solve(self, rhs: np.ndarray, x0: np.ndarray) -> Tuple[np.ndarray, Dict[str, int], Dict[str, float]]:
        """
        Returns:
            (解, 連続体ごとの反復回数, 連続体ごとの時間[s])
        """
        iterations: Dict[str, int] = {}
        times: Dict[str, float] = {}
        if self.sweep == "coupled":
            start = time.perf_counter()
            x, stats = self._solve_one(COUPLED_KEY, rhs, x0)
            iterations[COUPLED_KEY] = stats.iterations
            times[COUPLED_KEY] = time.perf_counter() - start
            return x, iterations, times

        op = self.implicit
        rhs_blocks = op.split(rhs)
        x0_blocks = op.split(x0)
        out: List[Optional[np.ndarray]] = [None] * op.n_continua
        order = list(range(op.n_continua))
        if self.sweep == "backward":
            order.reverse()
        for a in order:
            start = time.perf_counter()
            b = rhs_blocks[a]
            for c in range(op.n_continua):
                block = op.blocks[a][c]
                if c != a and block.nnz and out[c] is not None:
                    b = b - self.stiff_coef * (block @ out[c])
            name = op.names[a]
            out[a], stats = self._solve_one(name, b, x0_blocks[a])
            iterations[name] = stats.iterations
            times[name] = time.perf_counter() - start
        return op.join(out), iterations, times


class SchemeStepper:
    """
    1つのスキーム・時間刻みについての時間発展。

    陰的スキームは A^(1) = A（陽的部分なし）として ImEx と同じ経路で扱う。
    """

    def __init__(
        self,
        op: BlockOperator,
        scheme: SchemeSpec,
        tau: float,
        options: Optional[SolverOptions] = None,
        F: Optional[np.ndarray] = None,
        monitor_energy: bool = False,
        energy_operator: Optional[BlockOperator] = None,
    ):
        if tau <= 0.0:
            raise InvalidArgumentError(f"時間刻みは正である必要があります: {tau}")
        self.op = op
        self.scheme = scheme
        self.tau = float(tau)
        self.options = options or SolverOptions()
        self.F = op.rhs_vector() if F is None else np.asarray(F, dtype=float)
        if self.F.shape != (op.n_dofs,):
            raise InvalidArgumentError(f"右辺の次元が一致しません: {self.F.shape} != ({op.n_dofs},)")
        self.mass = op.mass_diagonal()
        self.monitor_energy = monitor_energy
        self.energy_operator = energy_operator or op

        if scheme.is_imex:
            split = split_operator(op, scheme.split)
            self.implicit = split.implicit
            self.explicit = None if split.explicit_is_zero else split.explicit
            sweep = SWEEP_ORDER[scheme.split]
        else:
            self.implicit = op
            self.explicit = None
            sweep = "coupled"
        mass_coef, stiff_coef = scheme.implicit_weights()
        self.system = ImplicitSystem(self.implicit, mass_coef, stiff_coef * self.tau, self.options, sweep)
        self._bootstrap: Optional["SchemeStepper"] = None

    def _rhs_two_level(self, u: np.ndarray) -> np.ndarray:
        theta = self.scheme.theta
        rhs = self.mass * u - self.tau * (1.0 - theta) * self.implicit.matvec(u) + self.tau * self.F
        if self.explicit is not None:
            rhs = rhs - self.tau * self.explicit.matvec(u)
        return rhs

    def _rhs_three_level(self, u: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
        mu, sigma = self.scheme.mu, self.scheme.sigma
        rhs = self.mass * (mu * u - (1.0 - mu) * (u - u_prev))
        rhs = rhs + self.tau * self.implicit.matvec((2.0 * sigma + mu - 1.5) * u - sigma * u_prev)
        if self.explicit is not None:
            rhs = rhs - self.tau * self.explicit.matvec((mu + 0.5) * u - (mu - 0.5) * u_prev)
        return rhs + self.tau * self.F

    def _advance(self, state: SimulationState, rhs: np.ndarray) -> Tuple[SimulationState, StepReport]:
        n = state.step + 1
        try:
            u_new, iterations, times = self.system.solve(rhs, state.u)
        except (FactorizationError, NotConvergedError) as e:
            stats = getattr(e, "stats", None)
            raise StepFailure(f"ステップ {n} の線形解法に失敗しました ({self.scheme.label}): {e}", step=n, stats=stats) from e
        report = StepReport(step=n, time=state.time + self.tau, iterations=iterations, wall_time=times)
        if self.monitor_energy:
            report.energy = self.energy_operator.energy(u_new)
        logger.debug(f"{self.scheme.label} ステップ {n}: 反復 {iterations}")
        return SimulationState(u=u_new, u_prev=state.u, step=n, time=state.time + self.tau), report

    def step(self, state: SimulationState) -> Tuple[SimulationState, StepReport]:
        state.check(self.op.n_dofs)
        if self.scheme.levels == 2:
            return self._advance(state, self._rhs_two_level(state.u))
        if state.u_prev is None:
            raise StateError(f"3層スキーム {self.scheme.label} には u^(n-1) が必要です (step={state.step})")
        return self._advance(state, self._rhs_three_level(state.u, state.u_prev))

    def bootstrap(self, state: SimulationState, substeps: int = 1) -> Tuple[SimulationState, StepReport]:
        """
        u^0 から後退Euler（Im1, θ=1）で u^1 を作る。

        substeps > 1 なら τ/m で m 回進める。返す状態は n=1, t=τ。
        """
        if substeps < 1:
            raise InvalidArgumentError(f"立ち上げのサブステップ数は1以上です: {substeps}")
        state.check(self.op.n_dofs)
        if self._bootstrap is None:
            self._bootstrap = SchemeStepper(
                self.op,
                SchemeSpec(family="Im1", theta=1.0, preset="Im1"),
                self.tau / substeps,
                self.options,
                self.F,
                self.monitor_energy,
                self.energy_operator,
            )
        sub = SimulationState(u=state.u, step=0, time=state.time)
        total = StepReport(step=state.step + 1, time=state.time + self.tau)
        for _ in range(substeps):
            sub, report = self._bootstrap._advance(sub, self._bootstrap._rhs_two_level(sub.u))
            for key, value in report.iterations.items():
                total.iterations[key] = total.iterations.get(key, 0) + value
            for key, value in report.wall_time.items():
                total.wall_time[key] = total.wall_time.get(key, 0.0) + value
            total.energy = report.energy
        logger.debug(f"3層スキームの立ち上げ: 後退Euler {substeps}回 (τ/m={self.tau / substeps:.3e})")
        return SimulationState(u=sub.u, u_prev=state.u, step=state.step + 1, time=state.time + self.tau), total


def step_two_level(
    state: SimulationState,
    op: BlockOperator,
    scheme: SchemeSpec,
    tau: float,
    F: Optional[np.ndarray] = None,
    options: Optional[SolverOptions] = None,
) -> Tuple[SimulationState, StepReport]:
    """Im1 / ImEx1 の1ステップ"""
    if scheme.levels != 2:
        raise InvalidArgumentError(f"2層スキームではありません: {scheme.label}")
    return SchemeStepper(op, scheme, tau, options, F).step(state)


def step_three_level(
    state: SimulationState,
    op: BlockOperator,
    scheme: SchemeSpec,
    tau: float,
    F: Optional[np.ndarray] = None,
    options: Optional[SolverOptions] = None,
) -> Tuple[SimulationState, StepReport]:
    """
    Im2 / ImEx2 の1ステップ

    Raises:
        StateError: u^(n-1) が無い
    """
    if scheme.levels != 3:
        raise InvalidArgumentError(f"3層スキームではありません: {scheme.label}")
    return SchemeStepper(op, scheme, tau, options, F).step(state)


def bootstrap_first_step(
    state: SimulationState,
    op: BlockOperator,
    scheme: SchemeSpec,
    tau: float,
    F: Optional[np.ndarray] = None,
    options: Optional[SolverOptions] = None,
    substeps: int = 1,
) -> Tuple[SimulationState, StepReport]:
    """3層スキーム用に u^1 を後退Eulerで作る。"""
    return SchemeStepper(op, scheme, tau, options, F).bootstrap(state, substeps)


def three_level_energy(
    op: BlockOperator,
    u_new: np.ndarray,
    u: np.ndarray,
    tau: float,
    mu: float,
    sigma: float,
    implicit: Optional[BlockOperator] = None,
    explicit: Optional[BlockOperator] = None,
) -> float:
    """
    (1/4)||u^{n+1} + u^n||_A^2 + ||u^{n+1} - u^n||_S^2

    S = (μ - 1/2) M/τ + (σ + (μ-1)/2) A^(1) - (μ/2) A^(2)。
    implicit / explicit を省略すると A^(1) = A, A^(2) = 0。
    """
    implicit = implicit or op
    s = u_new + u
    d = u_new - u
    value = 0.25 * op.energy(s) + (mu - 0.5) / tau * float(d @ (op.mass_diagonal() * d))
    value += (sigma + 0.5 * (mu - 1.0)) * float(d @ implicit.matvec(d))
    if explicit is not None:
        value -= 0.5 * mu * float(d @ explicit.matvec(d))
    return value
