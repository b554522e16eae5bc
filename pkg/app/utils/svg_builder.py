"""
SVG文字列ビルダー（外部描画ライブラリなし）
"""
from typing import Dict, List, Optional

def escape_xml(text: str) -> str:
    """テキスト・属性値のXMLエスケープ"""
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
        .replace("'", "&apos;")
    )

def _attrs(attrs: Optional[Dict[str, object]]) -> str:
    if not attrs:
        return ""
    return " " + " ".join(f'{key}="{escape_xml(value)}"' for key, value in attrs.items())

class SvgBuilder:
    """要素を順に追記して1枚のSVG文書を組み立てる"""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self._parts: List[str] = []

    def defs(self, content: str) -> None:
        self._parts.append(f"<defs>\n{content}</defs>\n")

    def group_start(self, attrs: Optional[Dict[str, object]] = None) -> None:
        self._parts.append(f"<g{_attrs(attrs)}>\n")

    def group_end(self) -> None:
        self._parts.append("</g>\n")

    def rect(
        self,
        x: float,
        y: float,
        width: float,
        height: float,
        fill: str,
        attrs: Optional[Dict[str, object]] = None,
        title: Optional[str] = None
    ) -> None:
        head = f'<rect x="{x:.1f}" y="{y:.1f}" width="{width:.1f}" height="{height:.1f}" fill="{fill}"{_attrs(attrs)}'
        if title is None:
            self._parts.append(head + "/>\n")
        else:
            self._parts.append(f"{head}><title>{escape_xml(title)}</title></rect>\n")

    def text(self, x: float, y: float, content: str, attrs: Optional[Dict[str, object]] = None) -> None:
        self._parts.append(f'<text x="{x:.1f}" y="{y:.1f}"{_attrs(attrs)}>{escape_xml(content)}</text>\n')

    def to_string(self) -> str:
        header = (
            '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
            f'<svg version="1.1" xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
        )
        return header + "".join(self._parts) + "</svg>\n"
