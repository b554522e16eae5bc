"""
レポート出力サービス
サマリー表（テキスト）、相関行列ヒートマップ（SVG）、正規化JSON
"""
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import hashlib
import json
import math

from app.config import settings
from app.core.exceptions import EmptyReportError
from app.core.logging import get_logger
from app.models.audio import Cohort
from app.models.report import AnalysisReport, Provenance
from app.models.run_config import RunConfig
from app.models.similarity import CorrelationMatrix, SimilaritySummary
from app.services.similarity_service import summary_to_dict
from app.utils.atomic_io import write_atomic
from app.utils.svg_builder import SvgBuilder

logger = get_logger(__name__)

TABLE_COLUMNS = ("Test", "Samples", "Average", "Variance", "Strength")

# 表の行順（グループ対）。ここにない組はこの後ろに値の順で並ぶ
PAIR_ORDER: List[Tuple[Cohort, Cohort]] = [
    (Cohort.HEALTHY, Cohort.COVID),
    (Cohort.COVID, Cohort.COVID),
    (Cohort.HEALTHY, Cohort.HEALTHY),
    (Cohort.COVID, Cohort.HEALTHY),
]

# ヒートマップの色（R = 1 の最も濃い色, R = 0 は白）
POSITIVE_RGB = (8, 48, 107)
# 2126·ΔR + 7152·ΔG + 722·ΔB = 0 となる赤方向のずらし（輝度は変わらない）
NEGATIVE_SHIFT = (65, -17, -23)
NEGATIVE_SHIFT_MAX_STEPS = 2
LUMINANCE_WEIGHTS = (2126, 7152, 722)
CELL_SIZE = 40
LABEL_CHAR_WIDTH = 7
LEGEND_STEPS = 21

# プロビナンスから除く設定（出力先・並列数は結果に影響しない）
PROVENANCE_EXCLUDE = {"output_dir", "jobs"}

def _pair_rank(pair: Tuple[Cohort, Cohort]) -> Tuple[int, str]:
    if pair in PAIR_ORDER:
        return PAIR_ORDER.index(pair), ""
    return len(PAIR_ORDER), f"{pair[0].value}/{pair[1].value}"

def sort_summaries(summaries: Sequence[SimilaritySummary]) -> List[SimilaritySummary]:
    """グループ対 → 音の種類（COUGH, BREATH, VOICE）の順に並べる"""
    return sorted(summaries, key=lambda s: (_pair_rank(s.pair), s.kind.order))

def format_2dp(value: float) -> str:
    """小数2桁（四捨五入, 0.5 は絶対値の大きい方へ）"""
    rounded = Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    if rounded == 0:
        rounded = abs(rounded)
    return f"{rounded:.2f}"

def render_table(report: AnalysisReport) -> str:
    """
    サマリー表を作成

    Returns:
        str: ヘッダー行 + 1行/(pair, kind)。列は " | " 区切り

    Raises:
        EmptyReportError: サマリーがない
    """
    if not report.summaries:
        raise EmptyReportError()
    lines = [" | ".join(TABLE_COLUMNS)]
    for summary in sort_summaries(report.summaries):
        lines.append(" | ".join([
            summary.test_name,
            summary.kind.display_name,
            format_2dp(summary.average),
            format_2dp(summary.variance),
            summary.strength.label,
        ]))
    return "\n".join(lines) + "\n"

# ヒートマップ

def cell_color(r: Optional[float]) -> str:
    """
    |R| に線形な色（0 → 白, 1 → 最も濃い色）。負は別の色相

    負の色は正の色に NEGATIVE_SHIFT を加えたもので、輝度（Rec.709 の整数重み）は同じ |R| の正の色と一致する。
    """
    if r is None or math.isnan(r):
        return "url(#missing)"
    t = min(1.0, abs(r))
    channels = [round(255 + (c - 255) * t) for c in POSITIVE_RGB]
    if r < 0:
        steps = min(
            [NEGATIVE_SHIFT_MAX_STEPS]
            + [(255 - c) // d if d > 0 else c // -d for c, d in zip(channels, NEGATIVE_SHIFT)]
        )
        channels = [c + steps * d for c, d in zip(channels, NEGATIVE_SHIFT)]
    return "#{:02x}{:02x}{:02x}".format(*channels)

def color_luminance(fill: str) -> int:
    """#rrggbb の輝度（Rec.709 重み × 10000 の整数）"""
    channels = (int(fill[i:i + 2], 16) for i in (1, 3, 5))
    return sum(w * c for w, c in zip(LUMINANCE_WEIGHTS, channels))

def _text_color(r: float) -> str:
    return "#ffffff" if color_luminance(cell_color(r)) < 128 * 10000 else "#000000"

def render_heatmap_svg(matrix: CorrelationMatrix) -> str:
    """相関行列をSVGヒートマップにする（同じ入力なら同じ文字列）"""
    rows, cols = matrix.shape
    left = 10 + LABEL_CHAR_WIDTH * max(len(label) for label in matrix.row_labels)
    top = 10 + LABEL_CHAR_WIDTH * max(len(label) for label in matrix.col_labels)
    legend_x = left + cols * CELL_SIZE + 30
    legend_height = max(rows * CELL_SIZE, 200)
    width = legend_x + 70
    height = top + legend_height + 20

    svg = SvgBuilder(width, height)
    svg.defs(
        '<pattern id="missing" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">'
        '<rect width="6" height="6" fill="#ffffff"/>'
        '<line x1="0" y1="0" x2="0" y2="6" stroke="#999999" stroke-width="2"/>'
        "</pattern>\n"
    )

    svg.group_start({"class": "labels", "font-family": "sans-serif", "font-size": 11})
    for i, label in enumerate(matrix.row_labels):
        svg.text(left - 6, top + i * CELL_SIZE + CELL_SIZE / 2 + 4, label, {"text-anchor": "end"})
    for j, label in enumerate(matrix.col_labels):
        x = left + j * CELL_SIZE + CELL_SIZE / 2
        svg.text(x, top - 6, label, {"transform": f"rotate(-90 {x:.1f} {top - 6:.1f})"})
    svg.group_end()

    svg.group_start({"class": "grid", "font-family": "sans-serif", "font-size": 10})
    for i in range(rows):
        for j in range(cols):
            r = float(matrix.entries[i, j])
            missing = math.isnan(r)
            x = left + j * CELL_SIZE
            y = top + i * CELL_SIZE
            svg.rect(
                x, y, CELL_SIZE, CELL_SIZE, cell_color(r),
                attrs={
                    "class": "cell",
                    "data-row": i,
                    "data-col": j,
                    "data-r": "" if missing else f"{r:.12g}",
                    "stroke": "#cccccc",
                },
                title=f"{matrix.row_labels[i]} × {matrix.col_labels[j]}: {'missing' if missing else f'{r:.2f}'}"
            )
            if not missing:
                svg.text(
                    x + CELL_SIZE / 2, y + CELL_SIZE / 2 + 3, f"{r:.2f}",
                    {"text-anchor": "middle", "fill": _text_color(r)}
                )
    svg.group_end()

    # 凡例（上端 R = 1, 下端 R = -1）
    step_height = legend_height / LEGEND_STEPS
    svg.group_start({"class": "legend", "font-family": "sans-serif", "font-size": 10})
    for k in range(LEGEND_STEPS):
        value = 1.0 - 2.0 * k / (LEGEND_STEPS - 1)
        svg.rect(legend_x, top + k * step_height, 20, step_height, cell_color(value), {"class": "legend-step"})
    for value, y in ((1.0, top), (0.0, top + legend_height / 2), (-1.0, top + legend_height)):
        svg.text(legend_x + 26, y + 4, f"{value:+.1f}" if value else "0.0")
    svg.group_end()

    return svg.to_string()

def render_heatmap(matrix: CorrelationMatrix, path: Union[str, Path]) -> Path:
    """ヒートマップSVGを書き出す"""
    written = write_atomic(path, render_heatmap_svg(matrix))
    logger.debug(f"ヒートマップ出力: {written}")
    return written

# JSON

def _canonical_float(value: Any) -> Any:
    """有効数字12桁に丸める（NaN は null）"""
    if isinstance(value, float):
        if math.isnan(value):
            return None
        return float(f"{value:.12g}")
    if isinstance(value, dict):
        return {key: _canonical_float(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical_float(item) for item in value]
    return value

def matrix_to_dict(matrix: CorrelationMatrix) -> Dict[str, Any]:
    return {
        "row_labels": list(matrix.row_labels),
        "col_labels": list(matrix.col_labels),
        "symmetric": matrix.symmetric,
        "entries": matrix.entries.tolist(),
    }

def report_to_dict(report: AnalysisReport) -> Dict[str, Any]:
    return {
        "provenance": report.provenance.model_dump(mode="json"),
        "summaries": [summary_to_dict(s) for s in sort_summaries(report.summaries)],
        "matrices": {name: matrix_to_dict(m) for name, m in sorted(report.matrices.items())},
    }

def canonical_json(payload: Any) -> str:
    """キー順固定・浮動小数は有効数字12桁のJSON（再実行でバイト一致）"""
    return json.dumps(_canonical_float(payload), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"

def report_to_json(report: AnalysisReport) -> str:
    """
    レポートの正規化JSON

    Raises:
        EmptyReportError: サマリーがない
    """
    if not report.summaries:
        raise EmptyReportError()
    return canonical_json(report_to_dict(report))

def write_report_json(report: AnalysisReport, path: Union[str, Path]) -> Path:
    """正規化JSONを書き出す"""
    return write_atomic(path, report_to_json(report))

def manifest_digest(path: Union[str, Path]) -> str:
    """マニフェストの SHA-256（16進）"""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()

def build_report(
    summaries: Sequence[SimilaritySummary],
    matrices: Dict[str, CorrelationMatrix],
    config: RunConfig,
    manifest_path: Union[str, Path]
) -> AnalysisReport:
    """サマリー・行列・来歴情報から AnalysisReport を組み立てる"""
    provenance = Provenance(
        config=config.model_dump(mode="json", exclude=PROVENANCE_EXCLUDE),
        manifest_digest=manifest_digest(manifest_path),
        tool_version=settings.app_version
    )
    return AnalysisReport(
        summaries=sort_summaries(summaries),
        matrices=dict(matrices),
        provenance=provenance
    )
