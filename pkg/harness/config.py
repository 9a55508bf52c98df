#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
実行設定の読み込み
TOML / YAML の設定ファイルを検証し、既定値を補った RunConfig を作る
"""

import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from assembly.block_operator import ContinuumSpec, ExchangeRule, ExchangeSpec
from assembly.well import DEFAULT_WELL_BOX
from common.errors import ConfigError, InvalidArgumentError
from geometry.coarse_map import BACKGROUND, FRACTURE
from geometry.fractures import CANONICAL_FRACTURES_PATH, load_fracture_network
from nlmc.local_domain import MAX_LAYERS
from timeloop.schemes import SPLIT_MODES, SchemeSpec, parse_scheme
from timeloop.steppers import SolverOptions

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ("geometry.fine", "continua")
SPACES = ("fine", "coarse")
PRECONDITIONERS = ("ilu0", "jacobi", "none")


@dataclass(frozen=True)
class GeometryConfig:
    fractures: Path = CANONICAL_FRACTURES_PATH
    lx: float = 2.0
    ly: float = 1.0
    fine: Tuple[int, int] = (400, 200)
    coarse: Tuple[int, int] = (40, 20)


@dataclass(frozen=True)
class WellConfig:
    continuum: str
    u_w: float = 1.2
    q_w: float = 1e5
    box: Tuple[float, float, float, float] = DEFAULT_WELL_BOX


@dataclass(frozen=True)
class TimeConfig:
    t_max: float = 0.005
    nt: Tuple[int, ...] = (4, 8, 16, 32, 64, 128)
    reference_nt: int = 1024
    initial: Union[float, Dict[str, float]] = 1.0
    startup_substeps: int = 1


@dataclass(frozen=True)
class SchemeConfig:
    names: Tuple[str, ...] = ("Im1",)
    splits: Tuple[str, ...] = ("U",)
    theta: float = 1.0
    mu: float = 1.5
    sigma: Optional[float] = None
    spaces: Tuple[str, ...] = ("fine",)


@dataclass(frozen=True)
class NlmcConfig:
    layers: int = 3
    study_layers: Tuple[int, ...] = ()
    study_nt: int = 128


@dataclass(frozen=True)
class OutputConfig:
    directory: Path = Path("results")
    repetitions: int = 3
    jobs: int = 1
    monitor_energy: bool = False
    dump_snapshots: bool = False


@dataclass(frozen=True)
class RunConfig:
    """検証済みの実行設定（連続体は k の昇順）"""
    source: Optional[Path]
    geometry: GeometryConfig
    continua: Tuple[ContinuumSpec, ...]
    exchange: Optional[ExchangeSpec] = None
    well: Optional[WellConfig] = None
    time: TimeConfig = field(default_factory=TimeConfig)
    schemes: SchemeConfig = field(default_factory=SchemeConfig)
    nlmc: NlmcConfig = field(default_factory=NlmcConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    output: OutputConfig = field(default_factory=OutputConfig)
    check_stability: bool = False

    @property
    def kinds(self) -> Tuple[str, ...]:
        return tuple(c.kind for c in self.continua)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(c.name for c in self.continua)

    def scheme_specs(self) -> List[SchemeSpec]:
        """スキーム名 × 分割モードの組（陰的スキームは分割なしで1つ）"""
        s = self.schemes
        specs: List[SchemeSpec] = []
        for name in s.names:
            # schemes.sigma が無ければ CNLF はプリセットの σ=0.5
            first = parse_scheme(name, split=s.splits[0], theta=s.theta, mu=s.mu, sigma=s.sigma)
            splits = s.splits if first.is_imex else (None,)
            for split in splits:
                specs.append(parse_scheme(name, split=split, theta=s.theta, mu=s.mu, sigma=s.sigma))
        return specs

    def with_overrides(
        self,
        out: Optional[Path] = None,
        ref_nt: Optional[int] = None,
        jobs: Optional[int] = None,
        dump_snapshots: Optional[bool] = None,
        check_stability: Optional[bool] = None,
    ) -> "RunConfig":
        """CLIの指定で上書きする。"""
        output, time_cfg = self.output, self.time
        if out is not None:
            output = replace(output, directory=Path(out))
        if jobs is not None:
            if jobs < 1:
                raise ConfigError("jobs は1以上です", key="output.jobs")
            output = replace(output, jobs=int(jobs))
        if dump_snapshots is not None:
            output = replace(output, dump_snapshots=bool(dump_snapshots))
        if ref_nt is not None:
            if ref_nt < 1:
                raise ConfigError("reference_nt は1以上です", key="time.reference_nt")
            time_cfg = replace(time_cfg, reference_nt=int(ref_nt))
        return replace(
            self,
            output=output,
            time=time_cfg,
            check_stability=self.check_stability if check_stability is None else bool(check_stability),
        )

    def initial_vector_values(self) -> Tuple[float, ...]:
        """連続体ごとの初期値"""
        init = self.time.initial
        if isinstance(init, dict):
            return tuple(float(init.get(c.name, 1.0)) for c in self.continua)
        return tuple(float(init) for _ in self.continua)


class _Reader:
    """キーのパスと行番号を付けてエラーを出すための読み取り補助"""

    def __init__(self, text: str):
        self.lines = text.splitlines()

    def line_of(self, key: str) -> Optional[int]:
        last = key.split(".")[-1]
        last = re.sub(r"\[\d+\]$", "", last)
        pattern = re.compile(rf"^\s*(\[+\s*)?{re.escape(last)}\s*(\]+|=|:)")
        for lineno, line in enumerate(self.lines, start=1):
            if pattern.search(line):
                return lineno
        return None

    def error(self, message: str, key: str) -> ConfigError:
        return ConfigError(message, key=key, line=self.line_of(key))

    def table(self, data: Mapping, key: str, required: bool = False) -> Dict[str, Any]:
        value = data.get(key.split(".")[-1])
        if value is None:
            if required:
                raise self.error("必須のセクションがありません", key)
            return {}
        if not isinstance(value, dict):
            raise self.error("セクションはテーブルである必要があります", key)
        return value

    def number(self, data: Mapping, key: str, default: Any = None, positive: bool = False,
               nonnegative: bool = False, integer: bool = False) -> Any:
        name = key.split(".")[-1]
        if name not in data:
            if default is None:
                raise self.error("必須のキーがありません", key)
            return default
        value = data[name]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"数値である必要があります: {value!r}", key)
        if integer and int(value) != value:
            raise self.error(f"整数である必要があります: {value!r}", key)
        if positive and value <= 0:
            raise self.error(f"正の値である必要があります: {value!r}", key)
        if nonnegative and value < 0:
            raise self.error(f"非負の値である必要があります: {value!r}", key)
        return int(value) if integer else float(value)

    def coefficient(self, data: Mapping, key: str, default: Any = None) -> Union[float, np.ndarray]:
        name = key.split(".")[-1]
        value = data.get(name, default)
        if value is None:
            raise self.error("必須のキーがありません", key)
        if isinstance(value, list):
            try:
                return np.asarray(value, dtype=float)
            except (TypeError, ValueError) as e:
                raise self.error("数値の配列である必要があります", key) from e
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise self.error(f"数値である必要があります: {value!r}", key)
        return float(value)

    def int_list(self, data: Mapping, key: str, default: Sequence[int], length: Optional[int] = None) -> Tuple[int, ...]:
        name = key.split(".")[-1]
        value = data.get(name, list(default) if default is not None else None)
        if value is None:
            raise self.error("必須のキーがありません", key)
        if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 1 for v in value
        ):
            raise self.error(f"1以上の整数のリストである必要があります: {value!r}", key)
        if length is not None and len(value) != length:
            raise self.error(f"要素数は {length} である必要があります: {value!r}", key)
        return tuple(int(v) for v in value)

    def str_list(self, data: Mapping, key: str, default: Sequence[str], allowed: Optional[Sequence[str]] = None) -> Tuple[str, ...]:
        name = key.split(".")[-1]
        value = data.get(name, list(default))
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not value or not all(isinstance(v, str) for v in value):
            raise self.error(f"文字列のリストである必要があります: {value!r}", key)
        if allowed is not None:
            for v in value:
                if v not in allowed:
                    raise self.error(f"{v!r} は {tuple(allowed)} のいずれかである必要があります", key)
        return tuple(value)

    def boolean(self, data: Mapping, key: str, default: bool) -> bool:
        value = data.get(key.split(".")[-1], default)
        if not isinstance(value, bool):
            raise self.error(f"真偽値である必要があります: {value!r}", key)
        return value


def _load_raw(path: Path, text: str) -> Dict[str, Any]:
    suffix = path.suffix.lower()
    try:
        if suffix in (".yaml", ".yml"):
            data = yaml.safe_load(text)
        else:
            data = tomllib.loads(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"YAMLの構文エラー: {e}", line=mark.line + 1 if mark else None) from e
    except tomllib.TOMLDecodeError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ConfigError(f"TOMLの構文エラー: {e}", line=int(match.group(1)) if match else None) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("設定ファイルの最上位はテーブルである必要があります", line=1)
    return data


def _parse_geometry(r: _Reader, data: Mapping, base: Path) -> GeometryConfig:
    g = r.table(data, "geometry", required=True)
    fine = r.int_list(g, "geometry.fine", None, length=2)
    coarse_default = (max(1, fine[0] // 10), max(1, fine[1] // 10))
    coarse = r.int_list(g, "geometry.coarse", coarse_default, length=2)
    if fine[0] % coarse[0] or fine[1] % coarse[1]:
        raise r.error(f"粗格子 {coarse} が細格子 {fine} を割り切りません", "geometry.coarse")
    fractures = g.get("fractures")
    if fractures is None:
        path = CANONICAL_FRACTURES_PATH
    elif isinstance(fractures, str):
        path = Path(fractures)
        if not path.is_absolute():
            path = base / path
    else:
        raise r.error("パス文字列である必要があります", "geometry.fractures")
    lx = r.number(g, "geometry.lx", 2.0, positive=True)
    ly = r.number(g, "geometry.ly", 1.0, positive=True)
    # ジオメトリファイルの不備は設定エラーとして扱う
    try:
        load_fracture_network(path).validate(lx, ly)
    except OSError as e:
        raise r.error(f"ジオメトリファイルを読み込めません: {path} ({e.strerror or e})", "geometry.fractures") from e
    except InvalidArgumentError as e:
        raise r.error(f"ジオメトリファイルが不正です: {e}", "geometry.fractures") from e
    return GeometryConfig(fractures=path, lx=lx, ly=ly, fine=fine, coarse=coarse)


def _parse_continua(r: _Reader, data: Mapping) -> Tuple[ContinuumSpec, ...]:
    items = data.get("continua")
    if not items:
        raise r.error("連続体が1つ以上必要です", "continua")
    if not isinstance(items, list):
        raise r.error("連続体はテーブルの配列である必要があります", "continua")
    specs = []
    for idx, item in enumerate(items):
        key = f"continua[{idx}]"
        if not isinstance(item, dict):
            raise r.error("テーブルである必要があります", key)
        name = item.get("name")
        if not isinstance(name, str) or not name:
            raise r.error("name がありません", f"{key}.name")
        kind = item.get("kind", BACKGROUND)
        if kind not in (BACKGROUND, FRACTURE):
            raise r.error(f"kind は background / fracture のいずれかです: {kind!r}", f"{key}.kind")
        try:
            specs.append(
                ContinuumSpec(
                    name=name,
                    kind=kind,
                    c=r.coefficient(item, f"{key}.c"),
                    k=r.coefficient(item, f"{key}.k"),
                    source=r.coefficient(item, f"{key}.source", 0.0),
                )
            )
        except InvalidArgumentError as e:
            raise r.error(str(e), key) from e
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise r.error(f"連続体名が重複しています: {names}", "continua")
    # 分割の前提: k の昇順（同じ値なら記述順）
    return tuple(sorted(specs, key=lambda s: s.k_scalar))


def _parse_exchange(r: _Reader, data: Mapping, names: Sequence[str]) -> Optional[ExchangeSpec]:
    items = data.get("exchange")
    if items is None:
        return None
    if not isinstance(items, list):
        raise r.error("exchange はテーブルの配列である必要があります", "exchange")
    rules = []
    for idx, item in enumerate(items):
        key = f"exchange[{idx}]"
        pair = item.get("pair") if isinstance(item, dict) else None
        if not isinstance(pair, list) or len(pair) != 2 or not all(isinstance(p, str) for p in pair):
            raise r.error("pair は連続体名2つのリストです", f"{key}.pair")
        for p in pair:
            if p not in names:
                raise r.error(f"未知の連続体です: {p}", f"{key}.pair")
        sigma = item.get("sigma")
        distance = item.get("distance")
        try:
            rules.append(
                ExchangeRule(
                    first=pair[0],
                    second=pair[1],
                    rule=item.get("rule", "efm"),
                    sigma=None if sigma is None else r.number(item, f"{key}.sigma", nonnegative=True),
                    distance=None if distance is None else r.number(item, f"{key}.distance", positive=True),
                )
            )
        except InvalidArgumentError as e:
            raise r.error(str(e), key) from e
    return ExchangeSpec(tuple(rules))


def _parse_well(r: _Reader, data: Mapping, continua: Sequence[ContinuumSpec]) -> Optional[WellConfig]:
    w = r.table(data, "well")
    if not w:
        return None
    fracture_names = [c.name for c in continua if c.kind == FRACTURE]
    continuum = w.get("continuum", fracture_names[0] if fracture_names else None)
    if continuum is None:
        raise r.error("坑井の対象連続体がありません（フラクチャー連続体が必要）", "well.continuum")
    target = next((c for c in continua if c.name == continuum), None)
    if target is None or target.kind != FRACTURE:
        raise r.error(f"坑井の対象はフラクチャー連続体である必要があります: {continuum!r}", "well.continuum")
    box = w.get("box", list(DEFAULT_WELL_BOX))
    if not isinstance(box, list) or len(box) != 4 or not all(isinstance(v, (int, float)) for v in box):
        raise r.error("box は [x0, x1, y0, y1] です", "well.box")
    return WellConfig(
        continuum=continuum,
        u_w=r.number(w, "well.u_w", 1.2),
        q_w=r.number(w, "well.q_w", 1e5, nonnegative=True),
        box=tuple(float(v) for v in box),
    )


def _parse_time(r: _Reader, data: Mapping, names: Sequence[str]) -> TimeConfig:
    t = r.table(data, "time")
    initial = t.get("initial", 1.0)
    if isinstance(initial, dict):
        for name, value in initial.items():
            if name not in names or isinstance(value, bool) or not isinstance(value, (int, float)):
                raise r.error(f"初期値の指定が不正です: {name}={value!r}", "time.initial")
        initial = {k: float(v) for k, v in initial.items()}
    elif isinstance(initial, bool) or not isinstance(initial, (int, float)):
        raise r.error(f"数値または連続体名→数値のテーブルです: {initial!r}", "time.initial")
    else:
        initial = float(initial)
    return TimeConfig(
        t_max=r.number(t, "time.t_max", 0.005, positive=True),
        nt=r.int_list(t, "time.nt", (4, 8, 16, 32, 64, 128)),
        reference_nt=r.number(t, "time.reference_nt", 1024, positive=True, integer=True),
        initial=initial,
        startup_substeps=r.number(t, "time.startup_substeps", 1, positive=True, integer=True),
    )


def _parse_schemes(r: _Reader, data: Mapping) -> SchemeConfig:
    s = r.table(data, "schemes")
    cfg = SchemeConfig(
        names=r.str_list(s, "schemes.names", ("Im1",)),
        splits=r.str_list(s, "schemes.splits", ("U",), allowed=SPLIT_MODES),
        theta=r.number(s, "schemes.theta", 1.0),
        mu=r.number(s, "schemes.mu", 1.5),
        sigma=r.number(s, "schemes.sigma", 0.0) if "sigma" in s else None,
        spaces=r.str_list(s, "schemes.spaces", ("fine",), allowed=SPACES),
    )
    for name in cfg.names:
        try:
            parse_scheme(name, split=cfg.splits[0], theta=cfg.theta, mu=cfg.mu, sigma=cfg.sigma)
        except InvalidArgumentError as e:
            raise r.error(str(e), "schemes.names") from e
    return cfg


def _parse_nlmc(r: _Reader, data: Mapping) -> NlmcConfig:
    n = r.table(data, "nlmc")
    layers = r.number(n, "nlmc.layers", 3, positive=True, integer=True)
    if layers > MAX_LAYERS:
        raise r.error(f"layers は 1〜{MAX_LAYERS} です: {layers}", "nlmc.layers")
    study = r.int_list(n, "nlmc.study_layers", ())
    if any(n > MAX_LAYERS for n in study):
        raise r.error(f"study_layers は 1〜{MAX_LAYERS} です: {study}", "nlmc.study_layers")
    return NlmcConfig(
        layers=layers,
        study_layers=study,
        study_nt=r.number(n, "nlmc.study_nt", 128, positive=True, integer=True),
    )


def _parse_solver(r: _Reader, data: Mapping) -> SolverOptions:
    s = r.table(data, "solver")
    precond = s.get("preconditioner", "ilu0")
    if precond not in PRECONDITIONERS:
        raise r.error(f"preconditioner は {PRECONDITIONERS} のいずれかです: {precond!r}", "solver.preconditioner")
    return SolverOptions(
        rtol=r.number(s, "solver.rtol", 1e-8, positive=True),
        max_iter=r.number(s, "solver.max_iter", 10000, positive=True, integer=True),
        preconditioner=precond,
    )


def _parse_output(r: _Reader, data: Mapping, base: Path) -> OutputConfig:
    o = r.table(data, "output")
    directory = o.get("directory", "results")
    if not isinstance(directory, str):
        raise r.error("パス文字列である必要があります", "output.directory")
    path = Path(directory)
    if not path.is_absolute():
        path = base / path
    return OutputConfig(
        directory=path,
        repetitions=r.number(o, "output.repetitions", 3, positive=True, integer=True),
        jobs=r.number(o, "output.jobs", 1, positive=True, integer=True),
        monitor_energy=r.boolean(o, "output.monitor_energy", False),
        dump_snapshots=r.boolean(o, "output.dump_snapshots", False),
    )


def config_from_dict(data: Mapping[str, Any], text: str = "", base: Path = Path("."), source: Optional[Path] = None) -> RunConfig:
    """読み込み済みの辞書から RunConfig を作る。"""
    r = _Reader(text)
    missing = []
    if not isinstance(data.get("geometry"), dict) or "fine" not in data.get("geometry", {}):
        missing.append("geometry.fine")
    if not data.get("continua"):
        missing.append("continua")
    if len(missing) == len(REQUIRED_KEYS):
        raise ConfigError(f"必須のキーがありません: {', '.join(REQUIRED_KEYS)}", key=missing[0])

    geometry = _parse_geometry(r, data, base)
    continua = _parse_continua(r, data)
    names = [c.name for c in continua]
    return RunConfig(
        source=source,
        geometry=geometry,
        continua=continua,
        exchange=_parse_exchange(r, data, names),
        well=_parse_well(r, data, continua),
        time=_parse_time(r, data, names),
        schemes=_parse_schemes(r, data),
        nlmc=_parse_nlmc(r, data),
        solver=_parse_solver(r, data),
        output=_parse_output(r, data, base),
    )


def parse_config(path: Path) -> RunConfig:
    """
    設定ファイル（.toml / .yaml / .yml）を読み込んで検証する。

    Args:
        path: 設定ファイルのパス

    Returns:
        既定値を補った RunConfig（連続体は k の昇順）

    Raises:
        ConfigError: ファイルが無い・構文エラー・キーの欠落や不正（キー名と行番号付き）
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"設定ファイルが見つかりません: {path}")
    text = path.read_text(encoding="utf-8")
    data = _load_raw(path, text)
    config = config_from_dict(data, text=text, base=path.parent, source=path)
    logger.info(
        f"設定を読み込みました: {path} (連続体 {', '.join(config.names)}, "
        f"細格子 {config.geometry.fine[0]}x{config.geometry.fine[1]}, 粗格子 {config.geometry.coarse[0]}x{config.geometry.coarse[1]})"
    )
    return config
