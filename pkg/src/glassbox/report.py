"""JSON, SVG and plain-text renderings of analysis products."""
from __future__ import annotations

import dataclasses
import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

JSON_VERSION = 1

_REGISTRY: dict[str, type] = {}


class ReportError(ValueError):
    pass


def register(*classes: type) -> None:
    """Make dataclasses reconstructible by ``parse_json``."""
    for cls in classes:
        _REGISTRY[cls.__name__] = cls


def _to_plain(obj: Any, path: str = "$"):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        out = {"__type__": type(obj).__name__}
        for f in dataclasses.fields(obj):
            out[f.name] = _to_plain(getattr(obj, f.name), f"{path}.{f.name}")
        for name in getattr(type(obj), "__json_extra__", ()):
            out[name] = _to_plain(getattr(obj, name), f"{path}.{name}")
        return out
    if isinstance(obj, dict):
        return {str(k): _to_plain(v, f"{path}.{k}") for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v, f"{path}[{i}]") for i, v in enumerate(obj)]
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist(), path)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise ReportError(f"non-finite value at {path}")
        return v
    if obj is None or isinstance(obj, str):
        return obj
    raise ReportError(f"cannot serialise {type(obj).__name__} at {path}")


def emit_json(product: Any) -> bytes:
    """Versioned, type-tagged JSON. Floats use shortest round-trip repr."""
    if dataclasses.is_dataclass(product):
        body = _to_plain(product)
        kind = body.pop("__type__")
    else:
        body, kind = _to_plain(product), type(product).__name__
    doc = {"type": kind, "version": JSON_VERSION, "data": body}
    return (json.dumps(doc, indent=2, allow_nan=False) + "\n").encode("utf-8")


def _from_plain(value):
    if isinstance(value, dict):
        name = value.get("__type__")
        if name is None:
            return {k: _from_plain(v) for k, v in value.items()}
        return _build(name, value)
    if isinstance(value, list):
        return tuple(_from_plain(v) for v in value)
    return value


def _build(name: str, fields: dict):
    cls = _REGISTRY.get(name)
    if cls is None:
        raise ReportError(f"unknown product type {name!r}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in fields:
            continue
        v = fields[f.name]
        kwargs[f.name] = np.asarray(v) if "ndarray" in str(f.type) else _from_plain(v)
    return cls(**kwargs)


def parse_json(raw: bytes | str):
    from . import pipeline  # noqa: F401  (registers RunManifest; imported late to avoid a cycle)

    doc = json.loads(raw)
    if doc.get("version") != JSON_VERSION:
        raise ReportError(f"unsupported document version {doc.get('version')!r}")
    data = doc["data"]
    if doc["type"] in _REGISTRY and isinstance(data, dict):
        return _build(doc["type"], data)
    return _from_plain(data)


def write_json(product: Any, path) -> Path:
    path = Path(path)
    path.write_bytes(emit_json(product))
    return path


# ---------------------------------------------------------------- tables


def _cell(v, precision: int) -> tuple[str, bool]:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)), False
    if isinstance(v, (int, np.integer)):
        return str(int(v)), True
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{precision}f}", True
    return str(v), False


def emit_text_table(rows: Sequence[Sequence], headers: Sequence[str] | None = None, precision: int = 2) -> str:
    """Aligned monospace table; numbers right-aligned at ``precision`` decimals."""
    rows = [list(r) for r in rows]
    width = len(headers) if headers is not None else (len(rows[0]) if rows else 0)
    if width == 0:
        raise ReportError("table has no columns")
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ReportError(f"row {i} has {len(r)} cells, expected {width}")
    cells = [[_cell(v, precision) for v in r] for r in rows]
    head = [str(h) for h in headers] if headers is not None else None
    widths = [
        max([len(c[k][0]) for c in cells] + ([len(head[k])] if head else []))
        for k in range(width)
    ]

    def line(items):
        parts = [(s.rjust(w) if num else s.ljust(w)) for (s, num), w in zip(items, widths)]
        return "| " + " | ".join(parts) + " |"

    out = []
    if head:
        out.append(line([(h, False) for h in head]))
        out.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    out.extend(line(c) for c in cells)
    return "\n".join(out) + "\n"


def metrics_table(named_reports: Sequence[tuple[str, Any]]) -> str:
    headers = ["", "accuracy", "precision", "recall", "f1", "auc"]
    return emit_text_table([[name, *r.as_row()] for name, r in named_reports], headers)


# ---------------------------------------------------------------- charts

CHART_KINDS = ("hbar", "scatter", "beeswarm-lite", "path")
POSITIVE = "#1f3b73"
NEGATIVE = "#9ecae1"
NEUTRAL = "#555555"
WIDTH = 800
MARGIN_LEFT = 220
MARGIN_RIGHT = 40
MARGIN_TOP = 50
MARGIN_BOTTOM = 50
ROW = 22


@dataclass(frozen=True)
class Series:
    name: str
    x: tuple[float, ...]
    y: tuple[float, ...] = ()
    color: tuple[float, ...] = ()


@dataclass(frozen=True)
class ChartSpec:
    """Chart description.

    hbar: one series, one bar per ``labels`` entry, values in ``x``.
    scatter: one series of (x, y) points, optional ``color`` in [0, 1].
    beeswarm-lite: one series per feature row, ``x`` the attributions and
        ``color`` the normalised feature values.
    path: one series per instance, ``x`` the cumulative value after each
        step in ``labels``; ``baseline`` draws the reference line.
    """

    kind: str
    title: str
    series: tuple[Series, ...]
    labels: tuple[str, ...] = ()
    x_label: str = ""
    y_label: str = ""
    baseline: float | None = None
    color_rule: str = "sign"  # "sign" | "value" | "single"

    def __post_init__(self):
        if self.kind not in CHART_KINDS:
            raise ReportError(f"unknown chart kind {self.kind!r}")
        if not self.series or any(len(s.x) == 0 for s in self.series):
            raise ReportError("chart needs at least one non-empty series")
        for s in self.series:
            for arr in (s.x, s.y, s.color):
                if not all(math.isfinite(v) for v in arr):
                    raise ReportError(f"series {s.name!r} holds non-finite values")
            if s.y and len(s.y) != len(s.x):
                raise ReportError(f"series {s.name!r}: x and y lengths differ")
            if s.color and len(s.color) != len(s.x):
                raise ReportError(f"series {s.name!r}: color length differs from x")
        if self.baseline is not None and not math.isfinite(self.baseline):
            raise ReportError("baseline must be finite")
        if self.kind == "hbar" and len(self.labels) != len(self.series[0].x):
            raise ReportError("hbar needs one label per bar")
        if self.kind == "path" and any(len(s.x) != len(self.labels) for s in self.series):
            raise ReportError("path series must have one value per step label")


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _sign_color(v: float) -> str:
    return POSITIVE if v > 0 else NEGATIVE


def _value_color(t: float) -> str:
    # light blue (low) to dark red (high)
    t = min(max(t, 0.0), 1.0)
    lo, hi = (0x9e, 0xca, 0xe1), (0xb2, 0x18, 0x2b)
    return "#" + "".join(f"{round(a + (b - a) * t):02x}" for a, b in zip(lo, hi))


class _Scale:
    def __init__(self, lo: float, hi: float, a: float, b: float):
        if hi <= lo:
            hi = lo + 1.0
        self.lo, self.hi, self.a, self.b = lo, hi, a, b

    def __call__(self, v: float) -> float:
        return self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)


def _f(v: float) -> str:
    return f"{v:.2f}"


def render_svg(spec: ChartSpec) -> str:
    """Deterministic standalone SVG text for ``spec``."""
    n_rows = {
        "hbar": len(spec.labels),
        "beeswarm-lite": len(spec.series),
        "path": len(spec.labels),
        "scatter": 16,
    }[spec.kind]
    height = MARGIN_TOP + MARGIN_BOTTOM + ROW * max(n_rows, 1)
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = MARGIN_TOP, height - MARGIN_BOTTOM
    body: list[str] = []

    if spec.kind == "hbar":
        vals = spec.series[0].x
        sx = _Scale(min(0.0, min(vals)), max(0.0, max(vals)), x0, x1)
        zero = sx(0.0)
        for i, (lab, v) in enumerate(zip(spec.labels, vals)):
            top = y0 + i * ROW + 3
            left, right = sorted((zero, sx(v)))
            fill = _sign_color(v) if spec.color_rule == "sign" else NEUTRAL
            body.append(
                f'<rect class="bar" data-label="{_esc(lab)}" x="{_f(left)}" y="{_f(top)}" '
                f'width="{_f(right - left)}" height="{ROW - 6}" fill="{fill}"/>'
            )
            body.append(f'<text x="{x0 - 6}" y="{_f(top + ROW / 2)}" text-anchor="end">{_esc(lab)}</text>')
        body.append(f'<line x1="{_f(zero)}" y1="{y0}" x2="{_f(zero)}" y2="{y1}" stroke="#000"/>')
    elif spec.kind == "scatter":
        s = spec.series[0]
        ys = s.y or tuple(0.0 for _ in s.x)
        sx = _Scale(min(s.x), max(s.x), x0, x1)
        sy = _Scale(min(ys), max(ys), y1, y0)
        for i, (a, b) in enumerate(zip(s.x, ys)):
            fill = _value_color(s.color[i]) if s.color else (_sign_color(b) if spec.color_rule == "sign" else NEUTRAL)
            body.append(f'<circle class="point" cx="{_f(sx(a))}" cy="{_f(sy(b))}" r="3" fill="{fill}"/>')
    elif spec.kind == "beeswarm-lite":
        allx = [v for s in spec.series for v in s.x]
        sx = _Scale(min(min(allx), 0.0), max(max(allx), 0.0), x0, x1)
        for i, s in enumerate(spec.series):
            mid = y0 + i * ROW + ROW / 2
            body.append(f'<text x="{x0 - 6}" y="{_f(mid)}" text-anchor="end">{_esc(s.name)}</text>')
            for k, v in enumerate(s.x):
                # deterministic jitter from a hash of the point itself
                u = zlib.crc32(f"{i}:{k}:{v!r}".encode()) / 2**32
                fill = _value_color(s.color[k]) if s.color else NEUTRAL
                body.append(
                    f'<circle class="point" cx="{_f(sx(v))}" cy="{_f(mid + (u - 0.5) * (ROW - 8))}" r="2" fill="{fill}"/>'
                )
        body.append(f'<line x1="{_f(sx(0.0))}" y1="{y0}" x2="{_f(sx(0.0))}" y2="{y1}" stroke="#000"/>')
    else:  # path
        allx = [v for s in spec.series for v in s.x] + ([spec.baseline] if spec.baseline is not None else [])
        sx = _Scale(min(allx), max(allx), x0, x1)
        for i, lab in enumerate(spec.labels):
            body.append(f'<text x="{x0 - 6}" y="{_f(y1 - i * ROW - ROW / 2)}" text-anchor="end">{_esc(lab)}</text>')
        start = spec.baseline if spec.baseline is not None else spec.series[0].x[0]
        for s in spec.series:
            pts = [(sx(start), y1)] + [(sx(v), y1 - (i + 1) * ROW) for i, v in enumerate(s.x)]
            d = " ".join(f"{_f(a)},{_f(b)}" for a, b in pts)
            end = s.x[-1]
            stroke = _sign_color(end - start) if spec.color_rule == "sign" else NEUTRAL
            body.append(f'<polyline class="path" data-label="{_esc(s.name)}" points="{d}" fill="none" stroke="{stroke}"/>')
        if spec.baseline is not None:
            bx = _f(sx(spec.baseline))
            body.append(f'<line class="baseline" x1="{bx}" y1="{y0}" x2="{bx}" y2="{y1}" stroke="#999"/>')

    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {height}" width="{WIDTH}" height="{height}" '
        'font-family="monospace" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="#fff"/>',
        f'<text x="{WIDTH // 2}" y="24" text-anchor="middle" font-size="14">{_esc(spec.title)}</text>',
    ]
    tail = [
        f'<text x="{(x0 + x1) // 2}" y="{height - 14}" text-anchor="middle">{_esc(spec.x_label)}</text>',
        f'<text x="14" y="{(y0 + y1) // 2}" transform="rotate(-90 14 {(y0 + y1) // 2})" text-anchor="middle">'
        f"{_esc(spec.y_label)}</text>",
        "</svg>",
    ]
    return "\n".join(head + body + tail) + "\n"


def emit_svg(spec: ChartSpec, path) -> Path:
    path = Path(path)
    path.write_text(render_svg(spec), encoding="utf-8")
    return path


def hbar(title: str, ranked: Sequence[tuple[str, float]], x_label: str = "", color_rule: str = "sign") -> ChartSpec:
    labels = tuple(n for n, _ in ranked)
    return ChartSpec("hbar", title, (Series(title, tuple(float(v) for _, v in ranked)),), labels, x_label, color_rule=color_rule)


def _register_products():
    from . import fairness, global_explain, lime, shap
    from .models import MetricReport

    register(
        MetricReport,
        shap.Attribution,
        shap.AttributionMatrix,
        shap.SummaryRow,
        shap.DependencyPoints,
        shap.ForceData,
        shap.DecisionData,
        lime.LimeExplanation,
        lime.StabilityReport,
        global_explain.PermutationReport,
        global_explain.SurrogateReport,
        global_explain.PickResult,
        fairness.DependenceReport,
        fairness.DivergenceSummary,
        ChartSpec,
        Series,
    )


_register_products()
