"""SVG plots: value-function heatmaps and episode field plots."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from .field import FieldSpec, all_cells, center_of
from .planner import ValueFunction

SVG_NS = "http://www.w3.org/2000/svg"
PX_PER_M = 60.0
MARGIN_PX = 30.0
# Low values (fast to score) in yellow, high values in dark blue.
_LOW = np.array([253, 231, 37])
_HIGH = np.array([68, 1, 84])


class _Canvas:
    def __init__(self, field: FieldSpec, title: str):
        self.field = field
        w = field.length_m * PX_PER_M + 2 * MARGIN_PX
        h = field.width_m * PX_PER_M + 2 * MARGIN_PX
        self.root = ET.Element("svg", {
            "xmlns": SVG_NS, "width": _fmt(w), "height": _fmt(h), "viewBox": f"0 0 {_fmt(w)} {_fmt(h)}",
        })
        ET.SubElement(self.root, "title").text = title

    def px(self, x: float, y: float) -> tuple[float, float]:
        # Field frame has y up; SVG has y down.
        return (
            MARGIN_PX + (x + self.field.half_length) * PX_PER_M,
            MARGIN_PX + (self.field.half_width - y) * PX_PER_M,
        )

    def line(self, a, b, stroke="white", width=2.0, **extra):
        (x1, y1), (x2, y2) = self.px(*a), self.px(*b)
        ET.SubElement(self.root, "line", {
            "x1": _fmt(x1), "y1": _fmt(y1), "x2": _fmt(x2), "y2": _fmt(y2),
            "stroke": stroke, "stroke-width": _fmt(width), **extra,
        })

    def circle(self, c, r_px, fill, **extra):
        x, y = self.px(*c)
        ET.SubElement(self.root, "circle", {"cx": _fmt(x), "cy": _fmt(y), "r": _fmt(r_px), "fill": fill, **extra})

    def markings(self, stroke="white"):
        f = self.field
        hl, hw, gw = f.half_length, f.half_width, f.goal_width_m / 2
        corners = [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
        for a, b in zip(corners, corners[1:] + corners[:1]):
            self.line(a, b, stroke)
        self.line((0.0, -hw), (0.0, hw), stroke)
        for sx in (-1, 1):
            self.line((sx * hl, -gw), (sx * hl, gw), "orange" if sx < 0 else "red", 5.0)
        cx, cy = self.px(0.0, 0.0)
        ET.SubElement(self.root, "circle", {
            "cx": _fmt(cx), "cy": _fmt(cy), "r": _fmt(f.center_circle_radius_m * PX_PER_M),
            "fill": "none", "stroke": stroke, "stroke-width": "2",
        })

    def tostring(self) -> str:
        ET.indent(self.root)
        return ET.tostring(self.root, encoding="unicode", xml_declaration=True) + "\n"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _color(t: float) -> str:
    r, g, b = np.rint(_LOW + (_HIGH - _LOW) * t).astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def value_heatmap_svg(value: ValueFunction, field: FieldSpec) -> str:
    """One rectangle per grid cell, colored by expected seconds to score."""
    if not value.compatible_with(field):
        raise ValueError("value grid does not match the field")
    canvas = _Canvas(field, "expected time to score (s)")
    lo, hi = float(value.values.min()), float(value.values.max())
    span = hi - lo if hi > lo else 1.0
    res = field.grid_resolution_m
    size = _fmt(res * PX_PER_M)
    for cell in all_cells(field):
        cx, cy = center_of(cell, field)
        x, y = canvas.px(cx - res / 2, cy + res / 2)
        v = value.at(cell)
        rect = ET.SubElement(canvas.root, "rect", {
            "x": _fmt(x), "y": _fmt(y), "width": size, "height": size,
            "fill": _color((v - lo) / span), "data-col": str(cell.col), "data-row": str(cell.row),
            "data-value": f"{v:.6g}",
        })
        ET.SubElement(rect, "title").text = f"({cell.col},{cell.row}) {v:.2f} s"
    canvas.markings()
    return canvas.tostring()


def episode_svg(events: list[dict], field: FieldSpec) -> str:
    """Ball path of one episode, one colored segment per kick."""
    canvas = _Canvas(field, "episode")
    ET.SubElement(canvas.root, "polygon", {
        "points": " ".join(
            f"{_fmt(x)},{_fmt(y)}"
            for x, y in (canvas.px(*p) for p in [
                (-field.half_length, -field.half_width), (field.half_length, -field.half_width),
                (field.half_length, field.half_width), (-field.half_length, field.half_width),
            ])
        ),
        "fill": "#2e7d32",
    })
    canvas.markings()
    colors = {"powerful": "#d32f2f", "pass": "#1976d2", "lateral": "#fbc02d"}
    for ev in events:
        if ev.get("kind") != "kick":
            continue
        a, b = ev["from"], ev["to"]
        canvas.line(a, b, colors.get(ev["kick"], "black"), 2.5, **{"data-t": f"{ev['t']:.3f}"})
        canvas.circle(a, 4, "white")
        canvas.circle(b, 3, colors.get(ev["kick"], "black"))
    return canvas.tostring()
