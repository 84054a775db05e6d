"""区分アフィン同相写像による近似 - コマンドラインドライバ"""

import argparse
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from loguru import logger

from .config.settings import ConstantsConfig, LoggingConfig, RunConfig, parse_value
from .core.errors import EXIT_STAGE, PaHomeoError, ValidationError, exit_code_for
from .extend.bench import run_bench
from .extend.io import write_report_csv
from .geom.predicates import set_tau_geom
from .grid.admissibility import check_admissible
from .grid.grids import NonStraightGrid
from .grid.io import read_grid
from .mapcat.catalogue import TestMap, describe_catalogue, make_catalogue_map
from .pipeline.sequence import ConvergenceReport, run_sequence
from .rep.arrival import refine_arrival
from .rep.providers import provider_for
from .rep.representative import build_geom_rep
from .rep.transfer import transfer_nonstraight_to_straight
from .report.render import render_outputs
from .utils.logger import setup_logging
from .utils.sampling import derive_rng


class PaHomeoApp:
    """設定を読み、パイプラインを回して結果を書き出す"""

    def __init__(self, config_path: str = "config.yaml"):
        self.config: Optional[RunConfig] = None
        self.config_path = config_path

    def initialize(self, log_level: str = "") -> RunConfig:
        """設定ファイル読み込みとログ設定"""
        self.config = RunConfig.load_from_file(self.config_path)
        setup_logging(self.config.logging, log_level)
        set_tau_geom(self.config.constants.tau_geom)
        logger.info(f"Loaded configuration from {self.config_path}")
        self._log_configuration()
        return self.config

    def _log_configuration(self) -> None:
        assert self.config is not None
        cfg = self.config
        logger.info(f"Map: {cfg.map.map} {dict(cfg.map.params)}")
        logger.info(f"eps: {cfg.run.eps}, seed: {cfg.run.seed}, K in [{cfg.run.k_min}, {cfg.run.k_max}]")
        logger.info(f"Constants: C={cfg.constants.C}, beta={cfg.constants.beta}, workers={cfg.run.workers}")

    def run(self) -> ConvergenceReport:
        """収束表を作って出力物を書く"""
        if self.config is None:
            raise RuntimeError("Application not initialized")
        f = self.config.map.build()
        report = run_sequence(f, self.config.run.eps, self.config)
        render_outputs(report, self.config)
        return report


def _parse_map_args(pairs: Sequence[str]) -> Dict[str, object]:
    params: Dict[str, object] = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key.strip():
            raise ValidationError(f"expected key=value, got: {pair}")
        try:
            params[key.strip()] = parse_value(raw)
        except ValueError as e:
            raise ValidationError(f"malformed value for '{key.strip()}': {e}") from e
    return params


def cmd_run(args: argparse.Namespace) -> int:
    app = PaHomeoApp(args.config)
    app.initialize(args.log_level or "")
    report = app.run()
    for row in report.rows:
        print(",".join(row.cells()))
    if not report.accepted:
        logger.error(f"Convergence checks failed: {report.acceptance()}")
        return EXIT_STAGE
    return 0


def cmd_catalogue(args: argparse.Namespace) -> int:
    for line in describe_catalogue():
        print(line)
    return 0


def cmd_extend_bench(args: argparse.Namespace) -> int:
    if args.n < 1:
        raise ValidationError("bench size must be positive", {"n": args.n})
    reports = run_bench(args.n, args.seed, args.workers)
    if args.out:
        write_report_csv(reports, Path(args.out))
    failed = [k for k, r in enumerate(reports) if math.isnan(r.ratio)]
    print(f"certified {len(reports) - len(failed)}/{len(reports)}")
    if failed:
        logger.error(f"Extension bench cases failed: {failed}")
        return EXIT_STAGE
    return 0


def _check_grid(f: TestMap, args: argparse.Namespace) -> None:
    constants = RunConfig.load_from_file(args.config).constants if args.config else ConstantsConfig()
    set_tau_geom(constants.tau_geom)
    xi = constants.xi if args.xi is None else args.xi
    grid = read_grid(args.grid_file)
    report = check_admissible(grid, f, tau_cont=constants.tau_cont, tau_density=constants.tau_density)
    print(f"admissible: {report.ok} (failed conditions: {report.failed_conditions})")
    if not report.ok:
        cond, message, _ = report.failures[0]
        raise ValidationError(f"grid is not admissible (condition {cond}): {message}")
    if isinstance(grid, NonStraightGrid):
        transfer = transfer_nonstraight_to_straight(
            f,
            grid,
            args.sigma,
            rng=derive_rng(args.seed, 1),
            jump_threshold_factor=constants.jump_threshold_factor,
            transfer_factor=constants.transfer_factor,
            tau_rep=constants.tau_rep,
            tau_density=constants.tau_density,
        )
        print(
            f"transfer: {transfer.grid.n_lines} straight lines, {len(transfer.spirals)} spirals, "
            f"{len(transfer.bypasses)} bypasses, error {transfer.guarantee_error():.6g}"
        )
        grid = transfer.grid
    rep = build_geom_rep(
        f, grid, tau_rep=constants.tau_rep, tau_cont=constants.tau_cont, tau_density=constants.tau_density
    )
    print(f"representative: {len(rep.arcs)} arcs, {len(rep.jump_table())} jumps")
    H = provider_for(f.kind)(rep, args.sigma)
    approx = refine_arrival(
        rep, args.kappa, args.sigma, xi, H, rng=derive_rng(args.seed, 0), min_kappa=args.min_kappa
    )
    arrival = approx.arrival
    print(
        f"arrival grid: {len(arrival.w)}x{len(arrival.z)} lines, kappa {arrival.kappa:.6g}, "
        f"{len(arrival.preimages)} crossings"
    )
    print(f"injective approximation: error bound {approx.error_bound:.6g}")


def cmd_check_grid(args: argparse.Namespace) -> int:
    f = make_catalogue_map(args.map, _parse_map_args(args.params))
    _check_grid(f, args)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pa-homeo", description="区分アフィン同相写像による BV 写像の近似")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="設定ファイルに従って収束表を作る")
    run.add_argument("config", help="設定ファイルパス (.conf / .yaml)")
    run.add_argument("--log-level", default="", help="ログレベル (設定より優先)")
    run.set_defaults(handler=cmd_run)

    cat = sub.add_parser("catalogue", help="テスト写像カタログ")
    cat.add_argument("action", choices=["list"])
    cat.set_defaults(handler=cmd_catalogue)

    bench = sub.add_parser("extend-bench", help="HP 拡張のベンチマーク")
    bench.add_argument("n", type=int)
    bench.add_argument("seed", type=int)
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--out", default="", help="レポート CSV の出力先")
    bench.set_defaults(handler=cmd_extend_bench)

    grid = sub.add_parser("check-grid", help="グリッドの許容性判定と単射近似の構成")
    grid.add_argument("grid_file")
    grid.add_argument("map")
    grid.add_argument("params", nargs="*", help="写像の引数 key=value")
    grid.add_argument("--sigma", type=float, default=1e-3)
    grid.add_argument("--kappa", type=float, default=0.25)
    grid.add_argument("--min-kappa", type=float, default=None, help="κ を半分にしていく下限 (既定は κ·2^-12)")
    grid.add_argument("--xi", type=float, default=None, help="一般化線分の ξ (既定は設定の値、なければ 0.25)")
    grid.add_argument("--seed", type=int, default=0)
    grid.add_argument("--config", default="", help="判定と構成の定数を読む設定ファイル ([constants] のみ使う)")
    grid.set_defaults(handler=cmd_check_grid)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """メイン関数 (終了コード 0 / 2 / 3 を返す)"""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command != "run":
        setup_logging(LoggingConfig(file=""), "WARNING")
    try:
        return int(args.handler(args))
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(ValidationError(str(e)))
    except PaHomeoError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
