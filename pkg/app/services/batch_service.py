"""
バッチ処理サービス
マニフェスト単位の trim / mfcc / corr / report / synth / baseline を並列ワーカーで実行する
"""
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar, Union
import asyncio
import json

from pydantic import ValidationError

from app.config import settings
from app.core.exceptions import CepstraError, ConfigurationError, EmptyGroupError, EmptyReportError, NoEntriesError
from app.core.logging import get_logger
from app.models.audio import AudioClip, Cohort, RecordingEntry, SoundKind
from app.models.batch import CommandResult, FileResult
from app.models.mfcc import MfccConfig, MfccMatrix
from app.models.run_config import RunConfig
from app.models.similarity import AnalysisSelection, CorrelationMatrix, SimilaritySummary
from app.services.audio_service import encode_wav, load_manifest, load_wav, trim_silence, trim_span
from app.services.mfcc_service import MfccService, mfcc_from_json, mfcc_to_csv, mfcc_to_json, select_coeffs
from app.services.report_service import (
    build_report,
    canonical_json,
    render_heatmap_svg,
    render_table,
    report_to_json,
)
from app.services.similarity_service import (
    SimilarityService,
    correlate_pair,
    correlation_matrix_to_csv,
    mean_power_spectrum,
    spectrum_correlation,
    summary_to_dict,
    waveform_correlation,
)
from app.services.synth_service import manifest_csv, plan_corpus, synthesize_clip
from app.utils.atomic_io import Payload, write_atomic_async

logger = get_logger(__name__)

T = TypeVar("T")

# 出力ファイルと付帯情報（ワーカーが返す）
WorkOutput = Tuple[Dict[Path, Payload], Dict[str, Any]]

def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged

def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    設定ファイル（JSON）を読み込み、CLIフラグで上書きした RunConfig を返す

    Raises:
        ConfigurationError: ファイルが読めない、または値が不正
    """
    document: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"設定ファイルを読み込めません: {path}: {e}", details={"path": str(path)})
        if not isinstance(document, dict):
            raise ConfigurationError(f"設定ファイルのトップレベルはオブジェクトである必要があります: {path}")

    merged = _deep_merge(document, overrides or {})
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigurationError(
            "設定値が不正です",
            details={"errors": e.errors(include_url=False)}
        )

def _same_pipeline(stored: MfccConfig, current: MfccConfig) -> bool:
    """先頭係数の値に影響する設定が同じか（係数の数は無関係）"""
    ignored = {"keep_coeffs", "num_coeffs"}
    return stored.model_dump(exclude=ignored) == current.model_dump(exclude=ignored)

def _relabel(clip: AudioClip, label: str) -> AudioClip:
    return AudioClip(samples=clip.samples, sample_rate_hz=clip.sample_rate_hz, source=label)

def _waveform_csv(clip: AudioClip) -> str:
    lines = ["time_s,amplitude"]
    sr = clip.sample_rate_hz
    lines.extend(f"{i / sr!r},{float(x)!r}" for i, x in enumerate(clip.samples))
    return "\n".join(lines) + "\n"

def _spectrum_csv(clip: AudioClip, fft_size: int) -> str:
    lines = ["freq_hz,power"]
    spectrum = mean_power_spectrum(clip, fft_size)
    sr = clip.sample_rate_hz
    lines.extend(f"{k * sr / fft_size!r},{float(p)!r}" for k, p in enumerate(spectrum))
    return "\n".join(lines) + "\n"

class BatchService:
    """RunConfig 1つに対するバッチ処理（出力は output_dir 配下）"""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.output_dir)
        self.jobs = settings.resolve_jobs(config.jobs)
        self.mfcc_service = MfccService(config.mfcc)
        self.similarity_service = SimilarityService(config.mode)

    # パス

    def trimmed_path(self, entry: RecordingEntry) -> Path:
        return self.out / "trimmed" / f"{entry.label}.wav"

    def feature_path(self, entry: RecordingEntry) -> Path:
        return self.out / "features" / f"{entry.label}.json"

    # 入力の解決

    def load_clip(self, entry: RecordingEntry) -> AudioClip:
        """トリミング済みWAVがあればそれを、なければ元ファイルをメモリ上でトリミング"""
        trimmed = self.trimmed_path(entry)
        if trimmed.is_file():
            return _relabel(load_wav(trimmed), entry.label)
        return _relabel(trim_silence(load_wav(entry.path), self.config.trim), entry.label)

    def load_features(self, entry: RecordingEntry) -> MfccMatrix:
        """
        相関分析用の特徴量（先頭 keep_coeffs 行）

        特徴ファイル → トリミング済みWAV → 元ファイルの順に探す。
        """
        keep = self.config.mfcc.keep_coeffs
        path = self.feature_path(entry)
        if path.is_file():
            stored = mfcc_from_json(path.read_text(encoding="utf-8"))
            if _same_pipeline(stored.config, self.config.mfcc) and stored.num_coeffs >= keep:
                matrix = MfccMatrix(coeffs=stored.coeffs, config=stored.config, source=entry.label)
                return select_coeffs(matrix, keep)
            logger.warning(f"特徴ファイルの設定が現在の設定と異なるため再計算します: {path}")
        return self.mfcc_service.extract_kept(self.load_clip(entry))

    # 並列実行

    async def _map(self, items: Sequence[Any], fn: Callable[[Any], T]) -> List[Union[T, BaseException]]:
        """上限 jobs の並列数で fn を実行（結果は入力順）"""
        semaphore = asyncio.Semaphore(self.jobs)

        async def run(item):
            async with semaphore:
                return await asyncio.to_thread(fn, item)

        return await asyncio.gather(*(run(item) for item in items), return_exceptions=True)

    async def _process(
        self,
        entries: Sequence[RecordingEntry],
        work: Callable[[RecordingEntry], WorkOutput],
        command: str
    ) -> List[FileResult]:
        """エントリごとに work を実行し、出力をアトミックに書き出す"""
        semaphore = asyncio.Semaphore(self.jobs)

        async def run(entry: RecordingEntry) -> FileResult:
            async with semaphore:
                outputs, info = await asyncio.to_thread(work, entry)
                written = []
                for path, payload in outputs.items():
                    await write_atomic_async(path, payload)
                    written.append(str(path))
                return FileResult(label=entry.label, outputs=written, info=info)

        results = await asyncio.gather(*(run(entry) for entry in entries), return_exceptions=True)
        return [self._file_result(entry.label, result, command) for entry, result in zip(entries, results)]

    def _file_result(self, label: str, result: Union[FileResult, BaseException], command: str) -> FileResult:
        if isinstance(result, FileResult):
            return result
        if isinstance(result, CepstraError):
            logger.error(f"[{command}] {label}: {result.error_code} - {result.message}")
            return FileResult(label=label, ok=False, error_code=result.error_code, message=result.message)
        logger.error(f"[{command}] {label}: 予期しないエラー {type(result).__name__} - {result}", exc_info=result)
        return FileResult(label=label, ok=False, error_code="INTERNAL_ERROR", message=str(result))

    async def _load_feature_set(
        self,
        entries: Sequence[RecordingEntry],
        command: str
    ) -> Tuple[Dict[str, MfccMatrix], List[FileResult]]:
        results = await self._map(entries, self.load_features)
        features: Dict[str, MfccMatrix] = {}
        files: List[FileResult] = []
        for entry, result in zip(entries, results):
            if isinstance(result, MfccMatrix):
                features[entry.label] = result
                files.append(FileResult(label=entry.label, info={"shape": list(result.shape)}))
            else:
                files.append(self._file_result(entry.label, result, command))
        return features, files

    async def _finish(self, result: CommandResult) -> CommandResult:
        """実行設定とコマンドログを書き出す"""
        run_config = self.config.model_dump(mode="json", exclude={"jobs"})
        await write_atomic_async(self.out / "run_config.json", canonical_json(run_config))
        await write_atomic_async(self.out / "logs" / f"{result.command}.json", canonical_json(result.model_dump(mode="json")))
        failed = len(result.failures)
        logger.info(f"[{result.command}] 完了: 成功 {len(result.files) - failed}件 / 失敗 {failed}件")
        return result

    # コマンド

    async def trim(self, manifest: Union[str, Path]) -> CommandResult:
        """前後の無音を除去して <out>/trimmed/<label>.wav に書き出す"""
        entries = load_manifest(manifest)

        def work(entry: RecordingEntry) -> WorkOutput:
            clip = load_wav(entry.path)
            start, end = trim_span(clip, self.config.trim)
            trimmed = clip if (start, end) == (0, len(clip)) else clip.with_samples(clip.samples[start:end])
            info = {"leading_removed": start, "trailing_removed": len(clip) - end, "samples": len(trimmed)}
            logger.info(f"トリミング: {entry.label} 先頭 {start} / 末尾 {len(clip) - end} サンプル除去")
            return {self.trimmed_path(entry): encode_wav(trimmed)}, info

        files = await self._process(entries, work, "trim")
        return await self._finish(CommandResult(command="trim", files=files))

    async def mfcc(self, manifest: Union[str, Path]) -> CommandResult:
        """<out>/features/<label>.json / .csv を書き出す（既定は全係数）"""
        entries = load_manifest(manifest)

        def work(entry: RecordingEntry) -> WorkOutput:
            matrix = self.mfcc_service.extract(self.load_clip(entry))
            if self.config.write_kept_only:
                matrix = select_coeffs(matrix, self.config.mfcc.keep_coeffs)
            json_path = self.feature_path(entry)
            outputs = {json_path: mfcc_to_json(matrix), json_path.with_suffix(".csv"): mfcc_to_csv(matrix)}
            return outputs, {"shape": list(matrix.shape)}

        files = await self._process(entries, work, "mfcc")
        return await self._finish(CommandResult(command="mfcc", files=files))

    async def corr(self, manifest: Union[str, Path], pair: Tuple[Cohort, Cohort], kind: SoundKind) -> CommandResult:
        """
        1つのグループ対 × 音の種類の相関行列・ヒートマップ・サマリーを書き出す

        集計対象がなくサマリーを作れない場合は、行列とヒートマップのみ書き出して警告する。

        Raises:
            EmptyGroupError: 選択に一致する録音がない
        """
        entries = load_manifest(manifest)
        selection = AnalysisSelection(pair=pair, kind=kind)
        group_a = [e for e in entries if e.cohort == pair[0] and e.kind == kind]
        group_b = group_a if pair[0] == pair[1] else [e for e in entries if e.cohort == pair[1] and e.kind == kind]
        if not group_a or not group_b:
            raise EmptyGroupError(
                f"選択に一致する録音がありません: {selection.slug}",
                details={"size_a": len(group_a), "size_b": len(group_b)}
            )

        needed = group_a if group_b is group_a else group_a + group_b
        features, files = await self._load_feature_set(needed, "corr")
        matrix = self.similarity_service.build_matrix(
            [features[e.label] for e in group_a if e.label in features],
            [features[e.label] for e in group_b if e.label in features],
            pair,
            kind
        )

        # 行列とヒートマップはサマリーが作れなくても書き出す
        base = self.out / "corr" / selection.slug
        outputs: Dict[Path, Payload] = {
            base.with_suffix(".csv"): correlation_matrix_to_csv(matrix),
            base.with_suffix(".svg"): render_heatmap_svg(matrix),
        }
        warnings: List[str] = []
        try:
            summary = self.similarity_service.summarize(matrix, pair, kind)
        except NoEntriesError as e:
            message = f"{selection.slug} のサマリーを作成できません: {e.message}"
            logger.warning(message)
            warnings.append(message)
        else:
            outputs[base.with_suffix(".json")] = canonical_json(summary_to_dict(summary))

        for path, payload in outputs.items():
            await write_atomic_async(path, payload)
        result = CommandResult(command="corr", files=files, outputs=[str(p) for p in outputs], warnings=warnings)
        return await self._finish(result)

    async def report(self, manifest: Union[str, Path]) -> CommandResult:
        """
        全グループ対 × 全種類の分析を行い、表・JSON・行列を書き出す

        データのない組み合わせは警告してスキップする。

        Raises:
            EmptyReportError: 1件も分析できなかった
        """
        manifest = Path(manifest)
        entries = load_manifest(manifest)
        cohorts = {c for pair in self.config.pairs for c in pair}
        needed = [e for e in entries if e.cohort in cohorts]
        features, files = await self._load_feature_set(needed, "report")

        warnings: List[str] = []
        summaries: List[SimilaritySummary] = []
        matrices: Dict[str, CorrelationMatrix] = {}
        for pair in self.config.pairs:
            for kind in SoundKind:
                selection = AnalysisSelection(pair=pair, kind=kind)
                group_a = [features[e.label] for e in needed if e.cohort == pair[0] and e.kind == kind and e.label in features]
                group_b = [features[e.label] for e in needed if e.cohort == pair[1] and e.kind == kind and e.label in features]
                try:
                    matrix, summary = self.similarity_service.analyze(group_a, group_b, pair, kind)
                except (EmptyGroupError, NoEntriesError) as e:
                    message = f"{selection.slug} をスキップしました: {e.message}"
                    logger.warning(message)
                    warnings.append(message)
                    continue
                summaries.append(summary)
                matrices[selection.slug] = matrix

        if not summaries:
            raise EmptyReportError("分析できるグループ対がありませんでした", details={"warnings": warnings})

        report = build_report(summaries, matrices, self.config, manifest)
        report_dir = self.out / "report"
        outputs: Dict[Path, Payload] = {
            report_dir / "report.json": report_to_json(report),
            report_dir / "table.txt": render_table(report),
        }
        for slug, matrix in sorted(matrices.items()):
            outputs[report_dir / "matrices" / f"{slug}.csv"] = correlation_matrix_to_csv(matrix)
            outputs[report_dir / "matrices" / f"{slug}.svg"] = render_heatmap_svg(matrix)
        for path, payload in outputs.items():
            await write_atomic_async(path, payload)

        result = CommandResult(command="report", files=files, outputs=[str(p) for p in outputs], warnings=warnings)
        return await self._finish(result)

    async def synth(self) -> CommandResult:
        """<out>/synth/ に合成コーパスとマニフェストを書き出す"""
        root = self.out / "synth"
        plan = plan_corpus(self.config.synth, root)
        speakers = {entry.label: speaker for entry, speaker in plan}
        entries = [entry for entry, _ in plan]

        def work(entry: RecordingEntry) -> WorkOutput:
            clip = synthesize_clip(
                entry.cohort, speakers[entry.label], entry.session, entry.kind,
                self.config.synth, self.config.seed
            )
            return {entry.path: encode_wav(clip)}, {"samples": len(clip)}

        files = await self._process(entries, work, "synth")
        manifest_path = root / "manifest.csv"
        await write_atomic_async(manifest_path, manifest_csv(entries, root))
        logger.info(f"合成マニフェスト出力: {manifest_path}")
        return await self._finish(CommandResult(command="synth", files=files, outputs=[str(manifest_path)]))

    async def baseline(self, manifest: Union[str, Path], pair: Tuple[Cohort, Cohort], kind: SoundKind) -> CommandResult:
        """
        時間波形・平均スペクトル・MFCC の相関を2録音で比較する

        各グループの先頭録音（同一グループなら先頭2件）を使う。
        """
        entries = load_manifest(manifest)
        selection = AnalysisSelection(pair=pair, kind=kind)
        first = [e for e in entries if e.cohort == pair[0] and e.kind == kind]
        second = [e for e in entries if e.cohort == pair[1] and e.kind == kind]
        picked = first[:2] if pair[0] == pair[1] else first[:1] + second[:1]
        if len(picked) < 2:
            raise EmptyGroupError(
                f"ベースライン比較に必要な録音が足りません: {selection.slug}",
                details={"found": [e.label for e in picked]}
            )

        clips = await asyncio.gather(*(asyncio.to_thread(self.load_clip, e) for e in picked))
        a, b = clips
        fft_size = self.config.mfcc.fft_size
        payload = {
            "labels": [e.label for e in picked],
            "fft_size": fft_size,
            "mode": self.config.mode.value,
            "waveform_r": waveform_correlation(a, b),
            "spectrum_r": spectrum_correlation(a, b, fft_size),
            "mfcc_r": correlate_pair(
                self.mfcc_service.extract_kept(a),
                self.mfcc_service.extract_kept(b),
                self.config.mode
            ),
        }
        logger.info(
            f"ベースライン {selection.slug}: 波形 {payload['waveform_r']:.3f}, "
            f"スペクトル {payload['spectrum_r']:.3f}, MFCC {payload['mfcc_r']:.3f}"
        )

        base = self.out / "baseline" / selection.slug
        outputs: Dict[Path, Payload] = {base / "baseline.json": canonical_json(payload)}
        for clip in clips:
            outputs[base / f"waveform_{clip.source}.csv"] = _waveform_csv(clip)
            outputs[base / f"spectrum_{clip.source}.csv"] = _spectrum_csv(clip, fft_size)
        for path, data in outputs.items():
            await write_atomic_async(path, data)

        files = [FileResult(label=e.label) for e in picked]
        return await self._finish(CommandResult(command="baseline", files=files, outputs=[str(p) for p in outputs]))
