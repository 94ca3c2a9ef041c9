"""
Utility functions: CSV and JSON writers, checksums and SVG line plots
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

SVG_WIDTH = 640
SVG_HEIGHT = 400
SVG_MARGIN = 50
SVG_COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b']


def format_number(value: Any) -> str:
    """Shortest round-trip text for floats, plain text for everything else"""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write a comma-separated file with a fixed header and LF line endings"""
    path = Path(path)
    lines = [','.join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row {row!r} does not match header {header!r}")
        lines.append(','.join(format_number(value) for value in row))
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\n'.join(lines) + '\n')
    return path


def _clean_for_json(obj):
    """Clean object for JSON serialization"""
    if isinstance(obj, dict):
        return {str(k): _clean_for_json(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [_clean_for_json(item) for item in obj]
    elif isinstance(obj, np.ndarray):
        return _clean_for_json(obj.tolist())
    elif isinstance(obj, (np.integer, np.floating, np.bool_)):
        return obj.item()
    elif isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    else:
        return str(obj)


def canonical_json(data: Dict[str, Any]) -> str:
    return json.dumps(_clean_for_json(data), sort_keys=True, separators=(',', ':'))


def digest_text(text: str) -> str:
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def config_digest(data: Dict[str, Any]) -> str:
    """sha256 of the canonical JSON form of a configuration"""
    return digest_text(canonical_json(data))


def sha256_file(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            h.update(block)
    return h.hexdigest()


def write_json(path: Union[str, Path], data: Dict[str, Any]) -> Path:
    path = Path(path)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(_clean_for_json(data), f, indent=2, sort_keys=True, ensure_ascii=False)
        f.write('\n')
    return path


def ensure_dir(path: Union[str, Path]) -> Path:
    """Ensure an output directory exists"""
    path = Path(path).expanduser()
    path.mkdir(parents=True, exist_ok=True)
    return path


def _scale(values: np.ndarray, lo: float, hi: float, out_lo: float, out_hi: float) -> np.ndarray:
    span = hi - lo if hi > lo else 1.0
    return out_lo + (values - lo) / span * (out_hi - out_lo)


def svg_polyline(path: Union[str, Path], series: Dict[str, Tuple[Sequence[float], Sequence[float]]],
                 title: str = '', xlabel: str = '', ylabel: str = '') -> Path:
    """Render named (x, y) series as polylines on shared axes"""
    path = Path(path)
    finite = [(np.asarray(x, dtype=float), np.asarray(y, dtype=float)) for x, y in series.values()]
    xs = np.concatenate([x for x, _ in finite]) if finite else np.zeros(1)
    ys = np.concatenate([y for _, y in finite]) if finite else np.zeros(1)
    ys = ys[np.isfinite(ys)] if np.any(np.isfinite(ys)) else np.zeros(1)
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = min(0.0, float(ys.min())), float(ys.max())
    left, right = SVG_MARGIN, SVG_WIDTH - SVG_MARGIN
    top, bottom = SVG_MARGIN, SVG_HEIGHT - SVG_MARGIN

    parts: List[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">',
        f'<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>',
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>',
        f'<text x="{SVG_WIDTH / 2}" y="{top / 2}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{SVG_WIDTH / 2}" y="{SVG_HEIGHT - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="15" y="{SVG_HEIGHT / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 15 {SVG_HEIGHT / 2})">{ylabel}</text>',
        f'<text x="{left}" y="{bottom + 15}" font-size="10">{x_lo:.3g}</text>',
        f'<text x="{right}" y="{bottom + 15}" text-anchor="end" font-size="10">{x_hi:.3g}</text>',
        f'<text x="{left - 5}" y="{bottom}" text-anchor="end" font-size="10">{y_lo:.3g}</text>',
        f'<text x="{left - 5}" y="{top + 5}" text-anchor="end" font-size="10">{y_hi:.3g}</text>',
    ]
    for i, (name, (x, y)) in enumerate(zip(series, finite)):
        color = SVG_COLORS[i % len(SVG_COLORS)]
        keep = np.isfinite(y)
        px = _scale(x[keep], x_lo, x_hi, left, right)
        py = _scale(y[keep], y_lo, y_hi, bottom, top)
        points = ' '.join(f'{a:.2f},{b:.2f}' for a, b in zip(px, py))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        parts.append(f'<text x="{right - 5}" y="{top + 15 * (i + 1)}" text-anchor="end" '
                     f'font-size="11" fill="{color}">{name}</text>')
    parts.append('</svg>')
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write('\n'.join(parts) + '\n')
    return path
