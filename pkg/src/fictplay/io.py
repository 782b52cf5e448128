"""Output files: iteration CSV, density CSV, summary JSON and SVG plots.

Numbers are written with ``repr(float)`` (shortest round-trip form), so
identical runs give byte-identical files.  Plots are hand-written SVG; the
density heatmap is a PNG (encoded here with zlib) embedded as a data URI,
one pixel per (time node, cell).
"""

from __future__ import annotations

import base64
import json
import math
import struct
import zlib
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, PlayReport
from .errors import DivergenceError, ValidationError

MAX_DENSITY_SLICES = 257


def _num(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise DivergenceError(f"refusing to serialize non-finite value {x}")
    return repr(x)


def write_iterations_csv(report: PlayReport, path) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for r in report.records:
        lines.append(",".join([str(r.n)] + [_num(v) for v in r.as_row()[1:]]))
    Path(path).write_text("\n".join(lines) + "\n")


def density_stride(K: int, stride="auto") -> int:
    if stride == "auto":
        return max(1, math.ceil(K / (MAX_DENSITY_SLICES - 1)))
    return int(stride)


def saved_slices(K: int, stride) -> np.ndarray:
    """Time indices written to ``density_final.csv``; the last slice is always included."""
    idx = list(range(0, K + 1, density_stride(K, stride)))
    if idx[-1] != K:
        idx.append(K)
    return np.array(idx)


def write_density_csv(flow, grid, time, path, stride="auto") -> None:
    """Rows ``t,x,m`` (1D) or ``t,x,y,m`` (2D) for the saved time slices, cells in flat order."""
    flow = np.asarray(flow, dtype=float)
    header = "t,x,m" if grid.dim == 1 else "t,x,y,m"
    coords = [",".join(_num(c) for c in row) for row in grid.coords]
    lines = [header]
    for k in saved_slices(time.K, stride):
        t = _num(time.times[k])
        lines.extend(f"{t},{c},{_num(v)}" for c, v in zip(coords, flow[k]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_density_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(times, coords, flow)`` from a ``density_final.csv``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    n_cells = int(np.sum(data[:, 0] == times[0]))
    if n_cells * len(times) != data.shape[0]:
        raise ValidationError(f"{path}: ragged density file")
    coords = data[:n_cells, 1:-1]
    flow = data[:, -1].reshape(len(times), n_cells)
    return times, coords, flow


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise DivergenceError(f"refusing to serialize non-finite value {x}")
        return x
    return obj


def write_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


# -------------------------------------------------------------------- plots

_W, _H, _PAD = 640, 400, 60


def svg_line_chart(y, title: str, ylabel: str, log_y: bool = False) -> str:
    """Polyline of ``y`` against ``n = 1..len(y)``; nonpositive values are dropped on a log axis."""
    y = np.asarray(y, dtype=float)
    n = np.arange(1, len(y) + 1)
    keep = np.isfinite(y) & ((y > 0) if log_y else True)
    n, y = n[keep], y[keep]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{_W / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{title}</text>',
    ]
    x0, x1, y0, y1 = _PAD, _W - 20, _H - _PAD, 40
    parts.append(f'<polyline points="{x0},{y1} {x0},{y0} {x1},{y0}" fill="none" stroke="black"/>')
    parts.append(f'<text x="{(x0 + x1) / 2}" y="{_H - 15}" text-anchor="middle" font-family="sans-serif" font-size="12">n</text>')
    parts.append(f'<text x="15" y="{(y0 + y1) / 2}" font-family="sans-serif" font-size="12" transform="rotate(-90 15 {(y0 + y1) / 2})" text-anchor="middle">{ylabel}</text>')
    if len(y):
        v = np.log10(y) if log_y else y
        lo, hi = float(v.min()), float(v.max())
        if hi - lo < 1e-300:
            lo, hi = lo - 0.5, hi + 0.5
        nmax = max(int(n.max()), 2)
        px = x0 + (n - 1) / (nmax - 1) * (x1 - x0)
        py = y0 - (v - lo) / (hi - lo) * (y0 - y1)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>')
        fmt = (lambda t: f"1e{t:.1f}") if log_y else (lambda t: f"{t:.6g}")
        for val, ypix in ((hi, y1), (lo, y0)):
            parts.append(f'<text x="{x0 - 5}" y="{ypix + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="10">{fmt(val)}</text>')
        parts.append(f'<text x="{x1}" y="{y0 + 15}" text-anchor="end" font-family="sans-serif" font-size="10">{nmax}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


_ANCHORS = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], dtype=float)


def _colormap(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    t = np.zeros_like(values) if hi - lo <= 0 else (values - lo) / (hi - lo)
    pos = t * (len(_ANCHORS) - 1)
    i = np.minimum(pos.astype(int), len(_ANCHORS) - 2)
    frac = (pos - i)[..., None]
    rgb = _ANCHORS[i] * (1 - frac) + _ANCHORS[i + 1] * frac
    return np.rint(rgb).astype(np.uint8)


def encode_png(rgb: np.ndarray) -> bytes:
    """Minimal truecolor PNG writer (8-bit RGB, no interlace)."""
    h, w, _ = rgb.shape
    raw = b"".join(b"\x00" + rgb[r].tobytes() for r in range(h))

    def chunk(tag: bytes, data: bytes) -> bytes:
        return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data) & 0xFFFFFFFF)

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", ihdr) + chunk(b"IDAT", zlib.compress(raw, 6)) + chunk(b"IEND", b"")


def svg_heatmap(flow, title: str = "density") -> str:
    """Time (rows, downward) by cell (columns) colour map of a density flow."""
    flow = np.asarray(flow, dtype=float)
    png = encode_png(_colormap(flow))
    uri = base64.b64encode(png).decode("ascii")
    rows, cols = flow.shape
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">\n'
        '<rect width="100%" height="100%" fill="white"/>\n'
        f'<text x="{_W / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{title} ({rows} x {cols})</text>\n'
        f'<image x="{_PAD}" y="40" width="{_W - _PAD - 20}" height="{_H - _PAD - 40}" preserveAspectRatio="none" '
        f'style="image-rendering:pixelated" data-rows="{rows}" data-cols="{cols}" href="data:image/png;base64,{uri}"/>\n'
        f'<text x="{_PAD - 5}" y="52" text-anchor="end" font-family="sans-serif" font-size="10">t=0</text>\n'
        f'<text x="{_PAD - 5}" y="{_H - _PAD}" text-anchor="end" font-family="sans-serif" font-size="10">t=T</text>\n'
        "</svg>\n"
    )


def decode_png_size(svg_text: str) -> tuple[int, int]:
    """Width and height of the PNG embedded in a heatmap SVG."""
    start = svg_text.index("base64,") + len("base64,")
    data = base64.b64decode(svg_text[start : svg_text.index('"', start)])
    w, h = struct.unpack(">II", data[16:24])
    return w, h


def emit_outputs(report: PlayReport, directory, summary: dict, emit_plots: bool = True, stride="auto") -> None:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {directory}: {exc}") from exc
    write_iterations_csv(report, directory / "iterations.csv")
    write_density_csv(report.belief, report.grid, report.time, directory / "density_final.csv", stride)
    write_json(summary, directory / "report.json")
    if emit_plots:
        (directory / "phi.svg").write_text(svg_line_chart(report.phi, "potential per iteration", "phi"))
        (directory / "a_n.svg").write_text(svg_line_chart(report.a, "decrease certificate a_n", "a_n (log10)", log_y=True))
        (directory / "density_heatmap.svg").write_text(svg_heatmap(report.belief, "final belief"))
