#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
例外クラス
ソルバー全体で使う例外を一か所にまとめる
"""

from typing import Any, Optional, Tuple


class McflowError(Exception):
    """mcflow の例外の基底クラス"""


class InvalidArgumentError(McflowError, ValueError):
    """引数・入力データが不正"""


class FactorizationError(McflowError, ArithmeticError):
    """不完全LU分解でゼロピボットが出た"""

    def __init__(self, row: int, message: Optional[str] = None):
        self.row = row
        super().__init__(message or f"ILU(0)分解でゼロピボットが発生しました (row={row})")


class SingularMatrixError(McflowError, ArithmeticError):
    """密行列が数値的に特異"""


class NotConvergedError(McflowError, RuntimeError):
    """反復法が収束しなかった"""

    def __init__(self, message: str, stats: Any = None):
        self.stats = stats
        super().__init__(message)


class AssemblyError(McflowError, RuntimeError):
    """組み立てた演算子が対称性などの条件を満たさない"""


class BasisError(McflowError, RuntimeError):
    """マルチスケール基底の計算に失敗"""

    def __init__(self, target: Tuple[int, int], message: str):
        self.target = target
        super().__init__(f"基底 (coarse={target[0]}, continuum={target[1]}) の計算に失敗しました: {message}")


class StepFailure(McflowError, RuntimeError):
    """時間ステップの線形解法に失敗"""

    def __init__(self, message: str, step: Optional[int] = None, stats: Any = None):
        self.step = step
        self.stats = stats
        super().__init__(message)


class StateError(McflowError, RuntimeError):
    """時間積分の状態が不足している"""


class ConfigError(McflowError, ValueError):
    """設定ファイルのエラー（キーと行番号を保持）"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = ""
        if key:
            where += f" key={key}"
        if line:
            where += f" line={line}"
        super().__init__(f"{message}{' (' + where.strip() + ')' if where else ''}")


class UndefinedErrorNorm(McflowError, ZeroDivisionError):
    """参照解のノルムがゼロで相対誤差が定義できない"""
