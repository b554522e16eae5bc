"""
コマンドラインインターフェース
trim / mfcc / corr / report / synth / baseline / serve
"""
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple
import argparse
import asyncio
import sys

from dotenv import load_dotenv

from app.config import settings
from app.core.exceptions import CepstraError, ConfigurationError
from app.core.logging import get_logger, setup_logging
from app.models.audio import Cohort, SoundKind
from app.models.batch import CommandResult
from app.models.similarity import FeatureMode
from app.services.batch_service import BatchService, load_run_config

logger = get_logger(__name__)

def parse_pair(raw: str) -> Tuple[Cohort, Cohort]:
    """「healthy,covid」→ (HEALTHY, COVID)"""
    parts = [p for p in raw.split(",") if p.strip()]
    if len(parts) != 2:
        raise ConfigurationError(f"--pair は 'A,B' 形式で指定してください: {raw!r}", details={"pair": raw})
    return Cohort.parse(parts[0]), Cohort.parse(parts[1])

def parse_pairs(raw: str) -> List[Tuple[Cohort, Cohort]]:
    """「healthy,covid;covid,covid」→ グループ対のリスト"""
    pairs = [parse_pair(chunk) for chunk in raw.split(";") if chunk.strip()]
    if not pairs:
        raise ConfigurationError(f"--pairs が空です: {raw!r}")
    return pairs

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cepstra",
        description="咳・呼吸・発声録音の MFCC 抽出とピアソン相関分析"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="DEBUG ログを出力（CEPSTRA_LOG より優先）")
    subparsers = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="RunConfig の JSON ファイル")
    common.add_argument("--out", type=Path, help="出力ディレクトリ（output_dir を上書き）")
    common.add_argument("--jobs", type=int, help="並列ワーカー数")
    common.add_argument("--mode", choices=[m.value for m in FeatureMode], help="特徴ベクトルの作り方")
    common.add_argument("--keep", type=int, help="使用する先頭係数の数（mfcc では出力行数も絞る）")

    with_manifest = argparse.ArgumentParser(add_help=False, parents=[common])
    with_manifest.add_argument("--manifest", type=Path, required=True, help="マニフェスト（CSV / xlsx）")

    subparsers.add_parser("trim", parents=[with_manifest], help="前後の無音を除去")
    subparsers.add_parser("mfcc", parents=[with_manifest], help="MFCC 特徴ファイルを出力")

    for name, help_text in (("corr", "1組の相関行列・ヒートマップ・サマリー"), ("baseline", "波形・スペクトル・MFCC の相関比較")):
        sub = subparsers.add_parser(name, parents=[with_manifest], help=help_text)
        sub.add_argument("--pair", required=True, help="グループ対（例: healthy,covid）")
        sub.add_argument("--kind", required=True, help="cough / breath / voice")

    report = subparsers.add_parser("report", parents=[with_manifest], help="全組のサマリー表とレポート")
    report.add_argument("--pairs", help="グループ対のリスト（例: healthy,covid;covid,covid）")

    synth = subparsers.add_parser("synth", parents=[common], help="合成コーパスを生成")
    synth.add_argument("--seed", type=int, help="乱数シード")

    serve = subparsers.add_parser("serve", help="HTTP API サーバーを起動")
    serve.add_argument("--host", default=settings.host)
    serve.add_argument("--port", type=int, default=settings.port)
    return parser

def config_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """CLIフラグを RunConfig のフィールドへ1対1で対応付ける"""
    overrides: Dict[str, Any] = {}
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = str(args.out)
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "keep", None) is not None:
        overrides["mfcc"] = {"keep_coeffs": args.keep}
        overrides["write_kept_only"] = True
    if getattr(args, "pairs", None):
        overrides["pairs"] = [[a.value, b.value] for a, b in parse_pairs(args.pairs)]
    return overrides

async def run_command(args: argparse.Namespace) -> CommandResult:
    """サブコマンドを実行"""
    config = load_run_config(args.config, config_overrides(args))
    service = BatchService(config)

    if args.command == "trim":
        return await service.trim(args.manifest)
    if args.command == "mfcc":
        return await service.mfcc(args.manifest)
    if args.command == "corr":
        return await service.corr(args.manifest, parse_pair(args.pair), SoundKind.parse(args.kind))
    if args.command == "baseline":
        return await service.baseline(args.manifest, parse_pair(args.pair), SoundKind.parse(args.kind))
    if args.command == "report":
        result = await service.report(args.manifest)
        table = Path(config.output_dir) / "report" / "table.txt"
        sys.stdout.write(table.read_text(encoding="utf-8"))
        return result
    if args.command == "synth":
        return await service.synth()
    raise ConfigurationError(f"不明なコマンドです: {args.command}")

def serve(host: str, port: int) -> int:
    import uvicorn

    logger.info(f"{settings.app_name} API を起動中... ({host}:{port})")
    uvicorn.run("main:app", host=host, port=port, log_level=settings.log.lower())
    return 0

def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    エントリーポイント

    Returns:
        int: 終了コード（1ファイルでも失敗があれば 1）
    """
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging("DEBUG" if args.verbose else None)

    if args.command == "serve":
        return serve(args.host, args.port)

    try:
        result = asyncio.run(run_command(args))
    except CepstraError as e:
        logger.error(f"{e.error_code}: {e.message}")
        print(f"error: {e.error_code}: {e.message}", file=sys.stderr)
        return 1

    for failure in result.failures:
        print(f"failed: {failure.label}: {failure.error_code}: {failure.message}", file=sys.stderr)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return result.exit_code

if __name__ == "__main__":
    sys.exit(main())
