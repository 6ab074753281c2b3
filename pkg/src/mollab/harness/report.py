"""Convergence reports: rate fitting and deterministic emission.

Reports render to CSV (fixed leading columns delta,norm_q,oracle_absdiff),
JSON (the full report, verdicts and environment metadata included) and a
hand-written SVG log-log plot.  Identical reports produce byte-identical
CSV and JSON; no timestamps or library version strings enter those
files.  Floats are serialized with repr, which round-trips exactly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

__all__ = ["RateFit", "fit_rate", "ConvergenceReport", "emit_report"]


@dataclass(frozen=True)
class RateFit:
    """Least-squares slope on (log delta, log value)."""

    slope: float | None
    stderr: float | None
    r_squared: float | None
    n: int
    outcome: str  # "ok" or "no-rate"

    def as_dict(self):
        return {
            "slope": self.slope,
            "stderr": self.stderr,
            "r_squared": self.r_squared,
            "n": self.n,
            "outcome": self.outcome,
        }


def fit_rate(points) -> RateFit:
    """Fit value ~ C * delta^slope by least squares in log-log space.

    Nonpositive values yield the "no-rate" outcome instead of raising;
    fewer than three points are rejected.
    """
    pts = [(float(d), float(v)) for d, v in points]
    if len(pts) < 3:
        raise ValueError("rate fit needs at least 3 points")
    if any(v <= 0.0 for _, v in pts):
        return RateFit(None, None, None, len(pts), "no-rate")
    xs = [math.log(d) for d, _ in pts]
    ys = [math.log(v) for _, v in pts]
    n = len(pts)
    xbar = sum(xs) / n
    ybar = sum(ys) / n
    sxx = sum((x - xbar) ** 2 for x in xs)
    if sxx == 0.0:
        return RateFit(None, None, None, n, "no-rate")
    sxy = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    resid2 = sum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    syy = sum((y - ybar) ** 2 for y in ys)
    r2 = 1.0 if syy == 0.0 else 1.0 - resid2 / syy
    stderr = math.sqrt(resid2 / (n - 2) / sxx) if n > 2 else 0.0
    return RateFit(slope, stderr, r2, n, "ok")


@dataclass
class ConvergenceReport:
    """Experiment output: ladder rows, fits, metadata and verdicts.

    Rows are dicts sharing `columns` as their key order, sorted by delta
    descending when a delta column is present.
    """

    kind: str
    columns: list
    rows: list
    fits: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v in ("pass", "degenerate-pass") for v in self.verdicts.values())

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "columns": list(self.columns),
            "rows": [dict(r) for r in self.rows],
            "fits": {k: v.as_dict() if isinstance(v, RateFit) else v for k, v in self.fits.items()},
            "metadata": self.metadata,
            "verdicts": self.verdicts,
        }


def report_from_json_dict(data: dict) -> ConvergenceReport:
    fits = {}
    for k, v in data.get("fits", {}).items():
        if isinstance(v, dict) and "slope" in v:
            fits[k] = RateFit(v["slope"], v["stderr"], v["r_squared"], v["n"], v["outcome"])
        else:
            fits[k] = v
    return ConvergenceReport(
        kind=data["kind"],
        columns=list(data["columns"]),
        rows=[dict(r) for r in data["rows"]],
        fits=fits,
        metadata=data.get("metadata", {}),
        verdicts=data.get("verdicts", {}),
    )


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def _csv_text(report: ConvergenceReport) -> str:
    lines = [",".join(report.columns)]
    for row in report.rows:
        lines.append(",".join(_format_cell(row.get(c)) for c in report.columns))
    return "\n".join(lines) + "\n"


def _json_text(report: ConvergenceReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"


# --- minimal hand-rolled SVG (deterministic bytes) -------------------------

_SVG_W, _SVG_H = 640, 440
_MARGIN = 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_text(report: ConvergenceReport) -> str:
    series = _plot_series(report)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W // 2}" y="20" text-anchor="middle" font-size="14">'
        f"{report.kind}</text>",
    ]
    if series:
        xs = [x for s in series for x, _ in s["points"]]
        ys = [y for s in series for _, y in s["points"] if y > 0]
        if xs and ys:
            lx0, lx1 = math.log10(min(xs)), math.log10(max(xs))
            ly0, ly1 = math.log10(min(ys)), math.log10(max(ys))
            if lx1 == lx0:
                lx1 = lx0 + 1.0
            if ly1 == ly0:
                ly1 = ly0 + 1.0

            def px(lx):
                return _MARGIN + (lx - lx0) / (lx1 - lx0) * (_SVG_W - 2 * _MARGIN)

            def py(ly):
                return _SVG_H - _MARGIN - (ly - ly0) / (ly1 - ly0) * (_SVG_H - 2 * _MARGIN)

            parts.append(
                f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_SVG_W - 2 * _MARGIN}" '
                f'height="{_SVG_H - 2 * _MARGIN}" fill="none" stroke="black"/>'
            )
            for idx, s in enumerate(series):
                color = _COLORS[idx % len(_COLORS)]
                pts = [
                    (px(math.log10(x)), py(math.log10(y)))
                    for x, y in s["points"]
                    if y > 0
                ]
                if len(pts) >= 2:
                    path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
                    parts.append(
                        f'<polyline points="{path}" fill="none" stroke="{color}" '
                        f'stroke-width="1.5" data-series="{s["name"]}"/>'
                    )
                for x, y in pts:
                    parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
                fit = report.fits.get(s["name"])
                if isinstance(fit, RateFit) and fit.outcome == "ok" and len(pts) >= 2:
                    xa, xb = min(x for x, _ in s["points"]), max(x for x, _ in s["points"])
                    # fitted line through the series in log space
                    la, lb = math.log(xa), math.log(xb)
                    ybar = sum(math.log(y) for _, y in s["points"] if y > 0) / len(pts)
                    xbar = sum(math.log(x) for x, y in s["points"] if y > 0) / len(pts)
                    ya = ybar + fit.slope * (la - xbar)
                    yb = ybar + fit.slope * (lb - xbar)
                    parts.append(
                        f'<line x1="{px(la / math.log(10)):.2f}" y1="{py(ya / math.log(10)):.2f}" '
                        f'x2="{px(lb / math.log(10)):.2f}" y2="{py(yb / math.log(10)):.2f}" '
                        f'stroke="{color}" stroke-dasharray="4,3" data-fit="{s["name"]}"/>'
                    )
                parts.append(
                    f'<text x="{_SVG_W - _MARGIN + 4}" y="{_MARGIN + 16 * (idx + 1)}" '
                    f'font-size="11" fill="{color}">{s["name"]}</text>'
                )
            parts.append(
                f'<text x="{_SVG_W // 2}" y="{_SVG_H - 16}" text-anchor="middle" '
                f'font-size="12">delta (log)</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _plot_series(report: ConvergenceReport):
    if "delta" not in report.columns:
        return []
    series = []
    for col in report.columns:
        if col == "delta" or col.startswith("oracle"):
            continue
        pts = [
            (row["delta"], row.get(col))
            for row in report.rows
            if isinstance(row.get(col), (int, float)) and row.get(col) is not None
        ]
        pts = [(d, v) for d, v in pts if v is not None]
        if len(pts) >= 2:
            series.append({"name": col, "points": pts})
    return series


def emit_report(report: ConvergenceReport, out_dir, formats=("csv", "json", "svg")) -> dict:
    """Write the requested artifacts; returns {format: path}."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    stem = report.kind.replace(" ", "-")
    written = {}
    producers = {"csv": _csv_text, "json": _json_text, "svg": _svg_text}
    for fmt in formats:
        if fmt not in producers:
            raise ValueError(f"unknown report format {fmt!r}")
        path = os.path.join(out_dir, f"{stem}.{fmt}")
        with open(path, "w", newline="") as fh:
            fh.write(producers[fmt](report))
        written[fmt] = path
    return written
