"""Minimal SVG emission for scenario overlays (no plotting dependency).

Renders polyline curves, filled uncertainty bands, and point markers into a
standalone SVG document with a y-up world-to-screen transform fitted to the
drawn content.
"""
from __future__ import annotations

import numpy as np


def offset_band(points: np.ndarray, radii: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Upper/lower polylines offset from a curve along its local normals.

    ``radii`` gives the per-point half-width (e.g. two standard
    deviations). Normals come from the averaged neighboring segment
    directions; zero-length tangents fall back to the x axis.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rad = np.broadcast_to(np.asarray(radii, dtype=float).ravel(), (pts.shape[0],))
    ahead = np.diff(pts, axis=0, append=pts[-1:])
    behind = np.diff(pts, axis=0, prepend=pts[:1])
    tangent = ahead + behind
    norms = np.linalg.norm(tangent, axis=1, keepdims=True)
    tangent = np.where(norms > 0, tangent / np.where(norms > 0, norms, 1.0), [1.0, 0.0])
    normal = np.stack([-tangent[:, 1], tangent[:, 0]], axis=1)
    return pts + rad[:, None] * normal, pts - rad[:, None] * normal


class SvgScene:
    """Collects world-space drawing primitives, then renders one SVG."""

    def __init__(self, width: int = 640, height: int = 480, margin: float = 0.06):
        self.width = width
        self.height = height
        self.margin = margin
        self._elements: list[tuple] = []
        self._points: list[np.ndarray] = []

    def _track(self, pts: np.ndarray) -> None:
        if pts.size:
            self._points.append(pts)

    def polyline(self, points, color: str = "#000000", width: float = 1.5, dash: str | None = None) -> None:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._track(pts)
        self._elements.append(("polyline", pts, color, width, dash))

    def polygon(self, points, fill: str = "#ffa500", opacity: float = 0.3) -> None:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._track(pts)
        self._elements.append(("polygon", pts, fill, opacity))

    def markers(self, points, color: str = "#d62728", radius: float = 3.0) -> None:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._track(pts)
        self._elements.append(("markers", pts, color, radius))

    def band(self, points, radii, fill: str = "#ffa500", opacity: float = 0.35) -> None:
        upper, lower = offset_band(points, radii)
        self.polygon(np.vstack([upper, lower[::-1]]), fill=fill, opacity=opacity)

    def _transform(self):
        stacked = np.vstack(self._points) if self._points else np.zeros((1, 2))
        lo = stacked.min(axis=0)
        hi = stacked.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        pad = self.margin * float(span.max())
        lo, hi = lo - pad, hi + pad
        span = hi - lo
        scale = min(self.width / span[0], self.height / span[1])

        def to_px(pts: np.ndarray) -> np.ndarray:
            out = (pts - lo) * scale
            out[:, 1] = self.height - out[:, 1]  # y grows upward in world space
            return out

        return to_px

    def render(self) -> str:
        to_px = self._transform()
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect width="{self.width}" height="{self.height}" fill="#ffffff"/>',
        ]
        for element in self._elements:
            kind = element[0]
            if kind == "polyline":
                _, pts, color, width, dash = element
                coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in to_px(pts.copy()))
                dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
                parts.append(
                    f'<polyline points="{coords}" fill="none" stroke="{color}" '
                    f'stroke-width="{width}"{dash_attr}/>'
                )
            elif kind == "polygon":
                _, pts, fill, opacity = element
                coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in to_px(pts.copy()))
                parts.append(
                    f'<polygon points="{coords}" fill="{fill}" opacity="{opacity}" stroke="none"/>'
                )
            elif kind == "markers":
                _, pts, color, radius = element
                for x, y in to_px(pts.copy()):
                    parts.append(
                        f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius}" fill="{color}"/>'
                    )
        parts.append("</svg>")
        return "\n".join(parts)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.render())
            fh.write("\n")
