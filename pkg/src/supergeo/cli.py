"""Command line front end: geodesic trajectories, residual checks and
projective-equivalence reports for model files.

Exit codes: 0 pass, 1 check failed, 2 input error, 3 numeric domain exceeded.
"""

from __future__ import annotations

import argparse
import io
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .compile import compiled
from .connection import default_samples, is_torsion_free, transform_christoffel
from .errors import FlowDomainError, NonInvertibleError, ParityError, ParseError, SuperGeoError
from .flows import GeodesicField, integrate_flow, odd_autocommutator_obstruction, tangent_names
from .geometry import SuperPoint, TangentVector, random_values
from .grassmann import GrassmannNumber, parse_coefficient_literal, subset_label
from .metric import compatibility_check, cotangent_samples, energy_expr, intertwine_check
from .modelfile import Model, load_model
from .projective import same_geodesics_check, shift_connection

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_DOMAIN = 0, 1, 2, 3

CHECKS = ("torsion", "compatibility", "intertwine", "transform")


class InputError(SuperGeoError):
    """Bad command line input."""


def _fmt(x: float) -> str:
    return repr(float(x))


def parse_point_values(text: str, coords, L: int) -> list[GrassmannNumber]:
    """``"c@subset,...;c@subset,..."``: one coefficient literal per coordinate."""
    parts = [p for p in text.split(";")]
    if len(parts) != coords.n:
        raise InputError(f"expected {coords.n} ';'-separated values for {', '.join(coords.names)}, got {len(parts)}")
    return [parse_coefficient_literal(p, L) for p in parts]


def make_init(model: Model, x_text: str, v_text: str, L: int) -> TangentVector:
    xs = parse_point_values(x_text, model.coords, L)
    vs = parse_point_values(v_text, model.coords, L)
    base = SuperPoint(model.coords, tuple(xs))
    return TangentVector(base, tuple(vs))


def _csv_header(model: Model, L: int) -> list[str]:
    labels = [subset_label(m, L) for m in range(1 << L)]
    names = list(model.coords.names) + tangent_names(model.coords)
    if model.metric is not None:
        names.append("energy")
    return ["t"] + [f"{name}[{lab}]" for name in names for lab in labels]


def cmd_geodesic(args, out) -> int:
    model = load_model(args.model)
    s = model.settings
    L = model.num_generators
    x_text = args.x if args.x is not None else s.get("x")
    v_text = args.v if args.v is not None else s.get("v")
    if x_text is None or v_text is None:
        raise InputError("initial point and velocity are required (--x and --v, or x/v in [settings])")
    init = make_init(model, x_text, v_text, L)
    h = args.step if args.step is not None else s["h"]
    t_end = args.t_end if args.t_end is not None else s["t_end"]
    G = GeodesicField(model.gamma)
    traj = integrate_flow(G, init, t_end, h, s["blowup"])
    rows = traj.states
    if model.metric is not None:
        energy = compiled([energy_expr(model.metric)], G.names)(rows)
        rows = np.concatenate([rows, energy], axis=1)
    if args.format == "csv":
        out.write(",".join(_csv_header(model, L)) + "\n")
        for t, row in zip(traj.times, rows):
            out.write(",".join([_fmt(t)] + [_fmt(c) for c in row.reshape(-1)]) + "\n")
        return EXIT_PASS
    names = list(G.names) + (["energy"] if model.metric is not None else [])
    out.write(f"model: {model.name}\n")
    out.write(f"steps: {len(traj.times) - 1}  h: {_fmt(h)}  t_end: {_fmt(t_end)}\n")
    for name, row in zip(names, rows[-1]):
        out.write(f"{name}(t_end) = {GrassmannNumber(L, row)}\n")
    if model.metric is not None:
        drift = float(np.abs(rows[:, -1] - rows[0, -1]).max())
        out.write(f"energy drift: {drift:.3e}\n")
    return EXIT_PASS


def run_check(model: Model, check: str, tol: float | None = None, seed: int | None = None,
              size: int | None = None) -> tuple[bool, list[str]]:
    s = model.settings
    tol = s["tolerance"] if tol is None else tol
    seed = s["seed"] if seed is None else seed
    size = s["samples"] if size is None else size
    L = model.num_generators
    lines = [f"model: {model.name}", f"check: {check}"]
    if check == "torsion":
        samples = default_samples(model.coords, L, size, seed)
        ok, res = is_torsion_free(model.gamma, samples, tol)
        obs = odd_autocommutator_obstruction(model.gamma, L=L, size=size, seed=seed)
        lines.append(f"torsion residual: {res:.3e}")
        lines.append(f"odd auto-commutator obstruction: {float(obs.max(initial=0.0)):.3e}")
    elif check == "compatibility":
        if model.metric is None:
            raise InputError("compatibility check needs a [metric] section")
        samples = default_samples(model.coords, L, size, seed)
        res = compatibility_check(model.metric, model.gamma, samples)
        ok = res <= tol
        lines.append(f"compatibility residual: {res:.3e}")
    elif check == "intertwine":
        if model.metric is None:
            raise InputError("intertwine check needs a [metric] section")
        samples = cotangent_samples(model.coords, L, size, seed)
        res = intertwine_check(model.metric, samples, model.gamma)
        ok = res <= tol
        lines.append(f"intertwine residual: {res:.3e}")
    elif check == "transform":
        if model.change is None:
            raise InputError("transform check needs a [change] section")
        samples = default_samples(model.coords, L, size, seed)
        res = transform_christoffel(model.gamma, model.change, model.target_gamma, samples)
        ok = res <= tol
        source = "given" if model.target_gamma is not None else "solved"
        lines.append(f"transformation law residual ({source} target symbols): {res:.3e}")
    else:
        raise InputError(f"unknown check {check!r}")
    lines.append(f"tolerance: {tol:.1e}")
    lines.append("PASS" if ok else "FAIL")
    return ok, lines


def cmd_check(args, out) -> int:
    model = load_model(args.model)
    ok, lines = run_check(model, args.check, args.tol, args.seed, args.samples)
    out.write("\n".join(lines) + "\n")
    return EXIT_PASS if ok else EXIT_FAIL


def read_inits(path: str, model: Model, L: int) -> list[TangentVector]:
    inits = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read inits file {path!r}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "|" not in line:
            raise InputError(f"{path}:{lineno}: expected '<x values> | <v values>'")
        x_text, v_text = line.split("|", 1)
        inits.append(make_init(model, x_text, v_text, L))
    if not inits:
        raise InputError(f"{path}: no initial conditions")
    return inits


def default_inits(model: Model, L: int, seed: int, count: int = 3) -> list[TangentVector]:
    s = model.settings
    if s.get("x") is not None and s.get("v") is not None:
        return [make_init(model, s["x"], s["v"], L)]
    rng = np.random.default_rng(seed)
    X = random_values(rng, model.coords.eps, L, count, body_range=(0.5, 1.0), soul_scale=0.1)
    V = random_values(rng, model.coords.eps, L, count, body_range=(0.1, 0.3), soul_scale=0.1)
    out = []
    for b in range(count):
        base = SuperPoint.from_array(model.coords, X[b])
        out.append(TangentVector(base, tuple(GrassmannNumber(L, row) for row in V[b])))
    return out


def cmd_projective(args, out) -> int:
    model = load_model(args.model)
    s = model.settings
    if args.model_b is not None:
        other = load_model(args.model_b)
        if other.coords != model.coords:
            raise InputError("the two models use different coordinates")
        gamma_hat = other.gamma
    elif s.get("partner"):
        base_dir = model.path.parent if model.path else Path(".")
        other = load_model(base_dir / s["partner"])
        if other.coords != model.coords:
            raise InputError("the two models use different coordinates")
        gamma_hat = other.gamma
    elif model.oneform is not None:
        gamma_hat = shift_connection(model.gamma, model.oneform)
    else:
        raise InputError("give --model-b, a partner setting, or a [oneform] to shift by")
    L = model.num_generators
    seed = args.seed if args.seed is not None else s["seed"]
    inits = read_inits(args.inits, model, L) if args.inits else default_inits(model, L, seed)
    h = args.step if args.step is not None else s["h"]
    t_end = args.t_end if args.t_end is not None else s["t_end"]
    tol = args.tol if args.tol is not None else s["projective_tolerance"]
    samples = default_samples(model.coords, L, s["samples"], seed)
    report = same_geodesics_check(model.gamma, gamma_hat, inits, t_end, h, tol, samples, blowup=s["blowup"])
    out.write(f"model: {model.name}\n")
    out.write(report.render())
    return EXIT_PASS if report.equivalent else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supergeo", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True, help="model file")
        p.add_argument("--tol", type=float, help="tolerance override")
        p.add_argument("--seed", type=int, help="seed for sample points")
        p.add_argument("--samples", type=int, help="number of sample points")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--format", choices=("csv", "report"), default=None)

    g = sub.add_parser("geodesic", help="integrate a geodesic and print its trajectory")
    common(g)
    g.add_argument("--x", help="initial point, e.g. '0.5;1.0@body,0.2@12'")
    g.add_argument("--v", help="initial velocity, same format as --x")
    g.add_argument("--t-end", type=float, dest="t_end")
    g.add_argument("--step", type=float)

    c = sub.add_parser("check", help="run a residual check")
    c.add_argument("check", choices=CHECKS)
    common(c)

    pr = sub.add_parser("projective", help="decide projective equivalence of two connections")
    common(pr)
    pr.add_argument("--model-b", dest="model_b", help="second model (default: partner setting or [oneform] shift)")
    pr.add_argument("--inits", help="file of initial conditions, one '<x> | <v>' per line")
    pr.add_argument("--t-end", type=float, dest="t_end")
    pr.add_argument("--step", type=float)
    return parser


_COMMANDS = {"geodesic": cmd_geodesic, "check": cmd_check, "projective": cmd_projective}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_PASS
    if args.format is None:
        args.format = "csv" if args.command == "geodesic" else "report"
    buf = io.StringIO()
    try:
        code = _COMMANDS[args.command](args, buf)
    except FlowDomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (InputError, ParseError, ParityError, NonInvertibleError, ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
