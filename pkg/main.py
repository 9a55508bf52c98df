#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
メインエントリーポイント
設定読み込み→問題の準備→参照解→スキームのスイープ→CSV出力の一連の流れを実行
"""

import os
import sys
import argparse
import logging
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

# パスを追加
sys.path.insert(0, str(Path(__file__).parent))

# ログ設定
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    datefmt='%Y-%m-%d %H:%M:%S'
)
logger = logging.getLogger(__name__)

from common.errors import ConfigError, McflowError
from harness.config import parse_config
from harness.report import summarize
from harness.runner import run_case

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_PARTIAL_FAILURE = 2

THREADS_ENV = "MCFLOW_THREADS"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcflow", description="多連続体の放物型流れ: 細格子・NLMC粗格子の時間スキーム比較")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="設定ファイルのスイープを実行")
    run.add_argument("config", type=Path, help="設定ファイル（.toml / .yaml）")
    run.add_argument("--out", type=Path, default=None, help="出力ディレクトリ（未指定なら設定の output.directory）")
    run.add_argument("--ref-nt", type=int, default=None, help="参照解のステップ数（既定 1024）")
    run.add_argument("--jobs", type=int, default=None, help=f"並列数（環境変数 {THREADS_ENV} が優先）")
    run.add_argument("--dump-snapshots", action="store_true", help="スナップショットをMatrixMarketで保存")
    run.add_argument("--check-stability", action="store_true", help="ImExスキームの安定性条件を確認して stability.csv を出力")
    run.add_argument("--progress", action="store_true", help="tqdmで進捗を表示")
    run.add_argument("--verbose", action="store_true", help="DEBUGログを表示")
    return parser


def resolve_jobs(cli_jobs: Optional[int]) -> Optional[int]:
    """環境変数 MCFLOW_THREADS を --jobs より優先する。"""
    env = os.getenv(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError as e:
            raise ConfigError(f"{THREADS_ENV} は整数である必要があります: {env!r}", key=THREADS_ENV) from e
    return cli_jobs


def command_run(args: argparse.Namespace) -> int:
    logger.info(f"設定ファイル: {args.config}")
    try:
        config = parse_config(args.config).with_overrides(
            out=args.out,
            ref_nt=args.ref_nt,
            jobs=resolve_jobs(args.jobs),
            dump_snapshots=True if args.dump_snapshots else None,
            check_stability=True if args.check_stability else None,
        )
    except ConfigError as e:
        logger.error(f"設定エラー: {e}")
        return EXIT_CONFIG_ERROR

    logger.info(f"出力ディレクトリ: {config.output.directory}")
    logger.info(f"スキーム: {', '.join(s.label for s in config.scheme_specs())}")
    logger.info(f"N_t: {list(config.time.nt)}, 参照解 N_t={config.time.reference_nt}")
    logger.info(f"空間: {', '.join(config.schemes.spaces)}, 並列数: {config.output.jobs}")

    try:
        report = run_case(config, progress=args.progress)
    except McflowError as e:
        logger.error(f"実行に失敗しました: {e}", exc_info=True)
        return EXIT_PARTIAL_FAILURE

    if report.rows:
        logger.info("最終時刻の誤差[%]:\n" + summarize(report.rows).to_string(index=False))
    for name, path in report.paths.items():
        logger.info(f"{name}: {path}")
    if not report.ok:
        logger.error(f"{report.n_failures}件の実行が失敗しました")
        return EXIT_PARTIAL_FAILURE
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    if getattr(args, "verbose", False):
        logging.getLogger().setLevel(logging.DEBUG)

    logger.info("=" * 60)
    logger.info("mcflow を開始します")
    logger.info("=" * 60)

    code = command_run(args)

    logger.info("=" * 60)
    if code == EXIT_OK:
        logger.info("すべての処理が正常に完了しました")
    else:
        logger.error("一部の処理でエラーが発生しました")
    logger.info("=" * 60)
    return code


if __name__ == "__main__":
    sys.exit(main())
