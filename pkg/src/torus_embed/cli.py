"""Command-line front end: embed, uniformize, perturb, verify, solve.

Every command writes ``report.json`` (and plots) into ``--out`` and prints
the report.  Exit codes: 0 pass, 1 fail or error, 2 inconclusive.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import (SCHEMA, CircledMDomain, ParamBall, d2, decode_params, encode_params,
                     from_descriptor, to_descriptor)
from .embedder import SurfaceSample, check_theorem5_conditions, embed_domain
from .errors import DescriptorError, NoSolutionFoundError, TorusEmbedError
from .fixed_point import (check_mu, compose_F, identity_field, reverify, shear_field, solve_preimage,
                          worker_count)
from .shear_perturb import (build_zero_function, normal_chart, perturbation_report, shear_bound,
                            singular_shear, wp_curve_model)
from .svg import PALETTE, Figure, domain_figure, robust_window
from .uniformizer import uniformize


EXIT = {"pass": 0, "fail": 1, "error": 1, "inconclusive": 2}
KAPPA = 1e-3

DEFAULT_DOMAIN = {"schema": SCHEMA, "tau": [0.5, 1.0],
                  "components": [{"type": "disk", "center": [0.45, 0.4], "radius": 0.15}]}


@dataclass
class RunReport:
    command: str
    inputs: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    status: str = "error"
    artifacts: list = field(default_factory=list)
    error: dict | None = None
    timestamp: str | None = None

    def to_json(self) -> dict:
        out = {"schema": SCHEMA, "command": self.command, "inputs": self.inputs,
               "metrics": {k: _clean(v) for k, v in self.metrics.items()},
               "status": self.status, "artifacts": sorted(self.artifacts)}
        if self.error is not None:
            out["error"] = self.error
        if self.timestamp is not None:
            out["timestamp"] = self.timestamp
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def _clean(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# input helpers


def _digest(text: str) -> str:
    return "sha256:" + hashlib.sha256(text.encode()).hexdigest()


def _read_json(path: str, report: RunReport, key: str):
    if path == "default":
        text = json.dumps(DEFAULT_DOMAIN, sort_keys=True)
    else:
        text = Path(path).read_text()
    report.inputs[key] = _digest(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DescriptorError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}",
                              line=exc.lineno, column=exc.colno) from exc


def _complex(text: str) -> complex:
    try:
        re_, im = (float(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 're,im', got {text!r}") from exc
    return complex(re_, im)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _projection_figures(surf: SurfaceSample, title: str) -> list:
    figs = []
    for k in range(2):
        fig = Figure(title=f"{title}: coordinate {k + 1}")
        interior = surf.boundary < 0
        fig.points(robust_window(surf.images[interior, k]), size=1.0)
        for b in np.unique(surf.boundary[~interior]):
            fig.curve(robust_window(surf.images[surf.boundary == b, k], 1.0),
                      color=PALETTE[int(b) % len(PALETTE)], width=1.5)
        figs.append(fig)
    return figs


# ---------------------------------------------------------------------------
# commands


def cmd_embed(args, report: RunReport):
    dom = from_descriptor(_read_json(args.domain, report, "domain"))
    if not isinstance(dom, CircledMDomain):
        raise DescriptorError("embed needs a disk-only (circled) domain descriptor")
    report.inputs["flags"] = {"p": None if args.p is None else [args.p.real, args.p.imag],
                              "grid": args.grid, "tol": args.tol}
    surf = embed_domain(dom, p=args.p, grid=args.grid, tol=args.tol,
                        allow_interior_pole=args.allow_interior_pole)
    period = surf.well_definedness_residual(args.tol)
    sep, pair = surf.separation_ratios()
    out = _out_dir(args)
    (out / "surface.json").write_text(surf.dumps() + "\n")
    report.artifacts.append(str(out / "surface.json"))
    report.artifacts.append(domain_figure(dom, "domain").save(out / "domain.svg"))
    for k, fig in enumerate(_projection_figures(surf, "image"), 1):
        report.artifacts.append(fig.save(out / f"projection{k}.svg"))
    report.metrics.update({"samples": len(surf), "periodicity_residual": period,
                           "min_separation_ratio": sep})
    report.status = "pass" if period <= 2 * args.tol and sep >= KAPPA else "fail"


def cmd_uniformize(args, report: RunReport):
    dom = from_descriptor(_read_json(args.domain, report, "domain"))
    report.inputs["flags"] = {"tol": args.tol}
    circ, fmap = uniformize(dom, tol=args.tol)
    info = fmap.info
    d2_in = d2(circ, dom) if isinstance(dom, CircledMDomain) else None
    out = _out_dir(args)
    (out / "circled.json").write_text(json.dumps(to_descriptor(circ), indent=2, sort_keys=True) + "\n")
    report.artifacts.append(str(out / "circled.json"))
    report.artifacts.append(domain_figure(dom, "input").save(out / "input.svg"))
    report.artifacts.append(domain_figure(circ, "circled").save(out / "circled.svg"))
    report.metrics.update({"radial_deviation": info.radial_deviation,
                           "equivariance_residual": info.equivariance_residual,
                           "iterations": info.iterations, "d2_to_input": d2_in})
    ok = info.radial_deviation < args.tol and info.equivariance_residual < args.tol
    report.status = "pass" if ok else "fail"


def cmd_perturb(args, report: RunReport):
    surf = SurfaceSample.from_json(_read_json(args.surface, report, "surface"))
    report.inputs["flags"] = {"delta": args.delta, "targets": args.targets}
    dom = surf.domain
    targets = args.targets if args.targets is not None else list(range(dom.m))
    zf = build_zero_function(dom, targets)
    model = wp_curve_model(surf)
    fmin = float(np.min(np.abs(zf(surf.sources))))
    tube = max(1e-2, 2 * abs(args.delta) / fmin)
    chart = normal_chart(model, tube)
    after = singular_shear(chart, zf, args.delta, surf)
    rep = perturbation_report(surf, after)
    bound = shear_bound(chart, zf, args.delta, surf)
    out = _out_dir(args)
    (out / "surface.json").write_text(after.dumps() + "\n")
    report.artifacts.append(str(out / "surface.json"))
    for k, fig in enumerate(_projection_figures(after, "sheared image"), 1):
        report.artifacts.append(fig.save(out / f"projection{k}.svg"))
    report.metrics.update({"sup_displacement": rep.sup_displacement, "displacement_bound": bound,
                           "min_separation_ratio": rep.min_separation, "tube_radius": tube})
    ok = rep.sup_displacement <= bound * (1 + 1e-9) + 1e-15 and rep.min_separation >= KAPPA
    report.status = "pass" if ok else "fail"


def cmd_verify(args, report: RunReport):
    surf = SurfaceSample.from_json(_read_json(args.surface, report, "surface"))
    if args.points:
        pts = [complex(*p) for p in _read_json(args.points, report, "points")]
    else:
        d = surf.domain.components[0]
        direction = surf.shift / abs(surf.shift) if surf.shift != 0 else 1
        pts = [d.center + d.radius * direction]
    res = check_theorem5_conditions(surf, pts)
    out = _out_dir(args)
    per = [{"point": [p.point.real, p.point.imag], "fiber_margin": p.fiber_margin,
            "regularity_margin": p.regularity_margin, "offending": p.offending,
            "passed": p.passed, "notes": p.notes} for p in res.points]
    (out / "conditions.json").write_text(json.dumps(per, indent=2, sort_keys=True) + "\n")
    report.artifacts.append(str(out / "conditions.json"))
    report.metrics.update({"points": len(per),
                           "min_fiber_margin": min(p.fiber_margin for p in res.points),
                           "min_regularity_margin": min(p.regularity_margin for p in res.points)})
    report.status = "pass" if res.passed else "fail"


def cmd_solve(args, report: RunReport):
    dom = from_descriptor(_read_json(args.domain, report, "domain"))
    if not isinstance(dom, CircledMDomain):
        raise DescriptorError("solve needs a disk-only (circled) domain descriptor")
    report.inputs["flags"] = {"epsilon": args.epsilon, "delta_hat": args.delta_hat,
                              "perturbation": args.perturbation, "samples": args.samples, "tol": args.tol}
    center = encode_params(dom)
    ball = ParamBall.validated(center, args.epsilon)
    psi = identity_field() if args.perturbation == "identity" else shear_field(args.delta_hat, dom)
    F = compose_F(ball, psi, tol=1e-8)
    mu = check_mu(ball, F, args.margin * ball.radius, samples=args.samples, workers=worker_count())
    report.metrics.update({"ball_radius": ball.radius, "mu_sup": mu.sup, "mu_threshold": mu.mu})
    out = _out_dir(args)
    if not mu.passed:
        report.metrics.update({"iterations": None, "preimage_residual": None, "verified_d2": None,
                               "d1_bound": psi.d1_bound})
        report.status = "inconclusive"
        return
    try:
        res = solve_preimage(ball, F, center, tol=args.tol, mu_report=mu, margin=args.margin)
    except NoSolutionFoundError as exc:
        report.metrics.update({"iterations": None, "preimage_residual": exc.details.get("residual"),
                               "verified_d2": None, "d1_bound": psi.d1_bound})
        report.status = "inconclusive"
        return
    check = reverify(psi, res.point, center)
    pre = decode_params(res.point)
    (out / "preimage.json").write_text(json.dumps(to_descriptor(pre), indent=2, sort_keys=True) + "\n")
    report.artifacts.append(str(out / "preimage.json"))
    fig = domain_figure(dom, "target and preimage")
    for c in psi.apply(pre, measure=False).components:
        fig.curve(c.boundary(), color="#d62728")
    report.artifacts.append(fig.save(out / "preimage.svg"))
    report.metrics.update({"iterations": res.iterations, "preimage_residual": res.residual,
                           "verified_d2": check, "d1_bound": psi.d1_bound})
    report.status = "pass" if check < args.verify_tol else "fail"


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="torus-embed", description=__doc__.splitlines()[0])
    ap.add_argument("--no-timestamp", action="store_true", help="omit the timestamp from reports")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="sample the two-wp embedding of a circled domain")
    p.add_argument("domain", help="domain descriptor (JSON) or 'default'")
    p.add_argument("--p", type=_complex, default=None, help="shift as re,im")
    p.add_argument("--grid", type=int, default=64)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--allow-interior-pole", action="store_true")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("uniformize", help="map a torus domain onto a circled one")
    p.add_argument("domain")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_uniformize)

    p = sub.add_parser("perturb", help="apply the singular shear to an embedded surface")
    p.add_argument("surface")
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--targets", type=lambda s: [int(t) for t in s.split(",")], default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("verify", help="check fibre and regularity conditions at boundary points")
    p.add_argument("surface")
    p.add_argument("--points", default=None, help="JSON list of [re, im] boundary points")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("solve", help="find a parameter whose perturbed uniformization is the input")
    p.add_argument("domain")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--delta-hat", type=float, default=1e-3)
    p.add_argument("--perturbation", choices=("shear", "identity"), default="shear")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--verify-tol", type=float, default=1e-4)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_solve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    report = RunReport(args.command)
    if not args.no_timestamp:
        report.timestamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    try:
        args.func(args, report)
    except TorusEmbedError as exc:
        report.status = "error"
        report.error = {"code": exc.code, "message": str(exc)}
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
    except OSError as exc:
        report.status = "error"
        report.error = {"code": "io", "message": str(exc)}
        print(f"error [io]: {exc}", file=sys.stderr)
    text = report.dumps()
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
    except OSError as exc:
        print(f"error [io]: cannot write report: {exc}", file=sys.stderr)
    sys.stdout.write(text)
    return EXIT[report.status]


if __name__ == "__main__":
    sys.exit(main())
