"""SVG drawings of scenes and paths.  One SVG unit is one millimeter."""
from __future__ import annotations

import math
from typing import Optional, Sequence
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .geometry import Environment
from .kinematics import Configuration, PoseSE2, RobotModel, joint_positions_batch

MM = 1000.0


def _mm(v: float) -> str:
    return format(round(v * MM, 6), "g")


def _points(vertices: np.ndarray) -> str:
    return " ".join(f"{_mm(x)},{_mm(y)}" for x, y in vertices)


def render_svg(env: Environment, model: RobotModel,
               configurations: Sequence[Configuration] = (),
               goal: Optional[PoseSE2] = None, e_p: float = 0.008,
               title: Optional[str] = None) -> str:
    """SVG with y pointing up: workspace box, obstacles, inflated outlines,
    one ``<g class="arm">`` per configuration, and the goal disc."""
    L = env.half_extent
    pad = 0.05 * L
    lo = -(L + pad)
    size = 2 * (L + pad)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{_mm(lo)} {_mm(lo)} {_mm(size)} {_mm(size)}" '
           f'width="{_mm(size)}mm" height="{_mm(size)}mm">']
    if title:
        out.append(f"  <title>{escape(title)}</title>")
    out.append('  <g transform="scale(1,-1)">')
    out.append(f'    <rect class="workspace" x="{_mm(-L)}" y="{_mm(-L)}" width="{_mm(2 * L)}" '
               f'height="{_mm(2 * L)}" fill="none" stroke="#444" stroke-width="1"/>')
    for poly in env.obstacles:
        out.append(f'    <polygon class="obstacle" points="{_points(poly.vertices)}" fill="#999" stroke="none"/>')
    for poly in env.inflated:
        if env.margin > 0:
            out.append(f'    <polygon class="inflated" points="{_points(poly.vertices)}" fill="none" '
                       f'stroke="#c33" stroke-width="0.8" stroke-dasharray="4,3"/>')
    width = max(model.link_width * MM, 1.0)
    count = len(configurations)
    for k, q in enumerate(configurations):
        pts = joint_positions_batch(model, np.array([q.theta]))[0]
        shade = 0.25 + 0.6 * (k / max(count - 1, 1))
        color = f"rgb(30,{int(90 + 120 * shade)},{int(255 * shade)})"
        out.append(f'    <g class="arm" data-index="{k}">')
        for a, b in zip(pts[:-1], pts[1:]):
            out.append(f'      <line x1="{_mm(a[0])}" y1="{_mm(a[1])}" x2="{_mm(b[0])}" y2="{_mm(b[1])}" '
                       f'stroke="{color}" stroke-width="{width:g}" stroke-linecap="round" opacity="0.7"/>')
        ma = _ma_point(model, q, pts)
        out.append(f'      <circle class="ma" cx="{_mm(ma[0])}" cy="{_mm(ma[1])}" r="{width:g}" fill="#222"/>')
        out.append("    </g>")
    if goal is not None:
        tip = (goal.x + 2.5 * e_p * math.cos(goal.phi), goal.y + 2.5 * e_p * math.sin(goal.phi))
        out.append(f'    <g class="goal" data-phi-deg={quoteattr(format(math.degrees(goal.phi), "g"))}>')
        out.append(f'      <circle cx="{_mm(goal.x)}" cy="{_mm(goal.y)}" r="{_mm(e_p)}" fill="#2a2" opacity="0.5"/>')
        out.append(f'      <line x1="{_mm(goal.x)}" y1="{_mm(goal.y)}" x2="{_mm(tip[0])}" y2="{_mm(tip[1])}" '
                   f'stroke="#070" stroke-width="1.5"/>')
        out.append("    </g>")
    out.append("  </g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _ma_point(model: RobotModel, q: Configuration, pts: np.ndarray) -> np.ndarray:
    d = min(max(q.d, 0.0), model.total_length)
    j = int(np.searchsorted(model.anchors, d, side="right")) - 1
    if j >= model.n:
        j = model.n - 1
    s = (d - model.anchors[j]) / model.link_lengths[j]
    return pts[j] + s * (pts[j + 1] - pts[j])
