"""Minimal deterministic SVG output: one path per curve, user-unit coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(x: float) -> str:
    return f"{x:.6g}"


@dataclass
class Figure:
    paths: list = field(default_factory=list)
    dots: list = field(default_factory=list)
    title: str = ""

    def curve(self, z, closed: bool = True, color: str = "#000", width: float = 1.0):
        z = np.asarray(z, dtype=complex)
        z = z[np.isfinite(z)]
        if len(z) == 0:
            return
        self.paths.append((z, closed, color, width))

    def points(self, z, color: str = "#555", size: float = 1.5):
        z = np.asarray(z, dtype=complex)
        self.dots.append((z[np.isfinite(z)], color, size))

    def _bounds(self):
        allz = [p[0] for p in self.paths] + [d[0] for d in self.dots]
        z = np.concatenate(allz) if allz else np.zeros(1, complex)
        lo = complex(z.real.min(), z.imag.min())
        hi = complex(z.real.max(), z.imag.max())
        pad = 0.05 * max(hi.real - lo.real, hi.imag - lo.imag, 1e-9)
        return lo - complex(pad, pad), hi + complex(pad, pad)

    def render(self, size: int = 480) -> str:
        lo, hi = self._bounds()
        w, h = hi.real - lo.real, hi.imag - lo.imag
        # flip the imaginary axis so that up is +i
        vb = f"{_num(lo.real)} {_num(-hi.imag)} {_num(w)} {_num(h)}"
        unit = max(w, h) / size
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{int(size * h / max(w, 1e-12))}" '
               f'viewBox="{vb}">']
        if self.title:
            out.append(f"<title>{self.title}</title>")
        for z, closed, color, width in self.paths:
            d = "M " + " L ".join(f"{_num(p.real)} {_num(-p.imag)}" for p in z) + (" Z" if closed else "")
            out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="{_num(width * unit)}"/>')
        for z, color, s in self.dots:
            for p in z:
                out.append(f'<circle cx="{_num(p.real)}" cy="{_num(-p.imag)}" r="{_num(s * unit)}" fill="{color}"/>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> str:
        with open(path, "w") as fh:
            fh.write(self.render())
        return str(path)


def domain_figure(dom, title: str = "") -> Figure:
    """Fundamental parallelogram and the removed components."""
    fig = Figure(title=title)
    tau = dom.lat.tau
    fig.curve(np.array([0, 1, 1 + tau, tau]), color="#999")
    for i, comp in enumerate(dom.components):
        fig.curve(comp.boundary(256), color=PALETTE[i % len(PALETTE)], width=1.5)
    return fig


def robust_window(z, quantile: float = 0.9) -> np.ndarray:
    """Drop the largest values (near poles) so projections stay readable."""
    z = np.asarray(z, dtype=complex)
    if len(z) == 0:
        return z
    cut = np.quantile(np.abs(z), quantile)
    return np.where(np.abs(z) <= cut, z, np.nan)
