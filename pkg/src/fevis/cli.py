"""Command-line front end: ``fevis interp|sample|mip|helmholtz|diff|degrade``.

Every flag can also come from a ``--config`` file of ``key = value`` lines
(keys are flag names without the leading dashes); flags on the command line win.

Exit codes: 0 success, 1 validation error, 2 runtime/numerical error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .expr import ExprError, ExprEvalError, parse
from .mesh import SPLITS, box_mesh, unit_square_mesh
from .render import (AnalyticField, Camera, ImageSizeError, RenderConfig, diff_image,
                     mip_render, read_nrrd, sample2d, write_nrrd, write_pgm)
from .solver import ConvergenceError, helmholtz_exact, l2_error, solve_helmholtz
from .space import (FieldFormatError, UnsupportedFamilyError, degrade_to_linear,
                    function_space, interpolate, load_field, save_field)

log = logging.getLogger("fevis")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3


class ValidationError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _vector(n: int):
    def convert(text: str) -> tuple[float, ...]:
        try:
            parts = tuple(float(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        if len(parts) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        return parts
    convert.__name__ = f"vector{n}"
    return convert


def parse_mesh_spec(spec: str, split: str = "kuhn"):
    """``square:NXxNY[:LX,LY]`` or ``box:NXxNYxNZ[:LX,LY,LZ]``."""
    parts = spec.split(":")
    if len(parts) not in (2, 3) or parts[0] not in ("square", "box"):
        raise ValidationError(f"bad mesh spec {spec!r}; expected e.g. square:2x2 or box:8x8x8:2,2,2")
    dim = 2 if parts[0] == "square" else 3
    try:
        counts = [int(v) for v in parts[1].split("x")]
        lengths = [float(v) for v in parts[2].split(",")] if len(parts) == 3 else [1.0] * dim
    except ValueError:
        raise ValidationError(f"bad mesh spec {spec!r}") from None
    if len(counts) != dim or len(lengths) != dim:
        raise ValidationError(f"mesh spec {spec!r} needs {dim} counts and {dim} lengths")
    if any(n < 1 for n in counts) or any(not v > 0 for v in lengths):
        raise ValidationError(f"mesh counts and lengths must be positive in {spec!r}")
    if dim == 2:
        return unit_square_mesh(*counts, lengths)
    try:
        return box_mesh(*counts, lengths, split=split)
    except ValueError as err:
        raise ValidationError(str(err)) from None


def _outputs(out: str, fmt: str) -> list[Path]:
    base = Path(out)
    if base.suffix in (".nrrd", ".pgm"):
        base = base.with_suffix("")
    kinds = {"nrrd": ["nrrd"], "pgm": ["pgm"], "both": ["nrrd", "pgm"]}[fmt]
    return [base.with_suffix("." + k) for k in kinds]


def _write_image(grid, out: str, fmt: str):
    for path in _outputs(out, fmt):
        (write_nrrd if path.suffix == ".nrrd" else write_pgm)(grid, path)
        print(f"wrote {path}")


def _positive_int(name, value):
    if value is None or value < 1:
        raise ValidationError(f"--{name} must be a positive integer, got {value}")


def cmd_interp(args) -> int:
    mesh = parse_mesh_spec(args.mesh, args.split)
    if not 1 <= args.degree <= 10:
        raise ValidationError(f"--degree must be between 1 and 10, got {args.degree}")
    expr = parse(args.expr, mesh.dim)
    space = function_space(mesh, args.family, args.degree)
    field = interpolate(space, expr)
    save_field(field, args.out)
    print(f"dofs: {space.global_dof_count}")
    return EXIT_OK


def cmd_sample(args) -> int:
    _positive_int("res", args.res)
    resy = args.resy or args.res
    _positive_int("resy", resy)
    field = load_field(args.field)
    if field.dim != 2:
        raise ValidationError("sample needs a 2-D field; use mip for 3-D fields")
    window = None
    if args.window is not None:
        x0, y0, x1, y1 = args.window
        window = ((x0, y0), (x1, y1))
    grid = sample2d(field, args.res, resy, window, background=args.background)
    i, j = grid.argmax()
    (wx0, _), (wx1, _) = grid.world_window
    print(f"argmax: column {i} (x = {wx0 + (i + 0.5) / args.res * (wx1 - wx0):.6f}) "
          f"row {j} value {grid.values[j, i]:.9g}")
    _write_image(grid, args.out, args.format)
    return EXIT_OK


def cmd_mip(args) -> int:
    _positive_int("res", args.res)
    _positive_int("threads", args.threads)
    if not args.step > 0:
        raise ValidationError(f"--step must be positive, got {args.step}")
    if (args.field is None) == (args.expr is None):
        raise ValidationError("give exactly one of --field or --expr")
    if args.field is not None:
        field = load_field(args.field)
        if field.dim != 3:
            raise ValidationError("mip needs a 3-D field")
    else:
        field = AnalyticField(parse(args.expr, 3), (0.0, 0.0, 0.0), tuple(args.lengths))
    try:
        camera = Camera(eye=args.eye, look_at=args.lookat, up=args.up, fov=args.fov,
                        width=args.res, height=args.res, near=args.near, far=args.far)
        clip = None if args.clip_radius is None else (args.lookat, args.clip_radius)
        config = RenderConfig(step=args.step, clip_sphere=clip, background=args.background)
    except ValueError as err:
        raise ValidationError(str(err)) from None
    grid = mip_render(field, camera, config, threads=args.threads)
    print(f"max: {grid.values.max():.9g}")
    _write_image(grid, args.out, args.format)
    return EXIT_OK


def cmd_helmholtz(args) -> int:
    _positive_int("n", args.n)
    _positive_int("res", args.res)
    if not 1 <= args.degree <= 10:
        raise ValidationError(f"--degree must be between 1 and 10, got {args.degree}")
    mesh = unit_square_mesh(args.n, args.n)
    u = solve_helmholtz(mesh, args.degree, rel_tol=args.rtol, forcing=args.forcing)
    print(f"dofs: {u.space.global_dof_count}")
    print(f"L2 error: {l2_error(u, helmholtz_exact):.6e}")
    if args.field_out:
        save_field(u, args.field_out)
        print(f"wrote {args.field_out}")
    _write_image(sample2d(u, args.res, args.res), args.out, args.format)
    return EXIT_OK


def cmd_diff(args) -> int:
    a, b = read_nrrd(args.a), read_nrrd(args.b)
    d = diff_image(a, b)
    print(f"max: {d.values.max():.9g}")
    print(f"mean: {d.values.mean():.9g}")
    if args.out:
        _write_image(d, args.out, args.format)
    return EXIT_OK


def cmd_degrade(args) -> int:
    field = load_field(args.field)
    low = degrade_to_linear(field, args.mode)
    save_field(low, args.out)
    print(f"dofs: {low.space.global_dof_count}")
    return EXIT_OK


def _add_image_flags(p, out_default):
    p.add_argument("--out", default=out_default, help=f"output path; extension set by --format (default: {out_default})")
    p.add_argument("--format", choices=("nrrd", "pgm", "both"), default="nrrd",
                   help="image format (default: nrrd)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fevis", description="Evaluate and visualize high-order finite-element fields.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="key = value file supplying defaults for any flag")
        p.set_defaults(func=func)
        return p

    p = command("interp", cmd_interp, "Interpolate an expression into a Lagrange space and save the field.")
    p.add_argument("--mesh", default="square:2x2", help="mesh spec, e.g. square:2x2 or box:8x8x8:2,2,2 (default: square:2x2)")
    p.add_argument("--split", choices=SPLITS, default="kuhn", help="hexahedron split for box meshes (default: kuhn)")
    p.add_argument("--family", default="P", help="element family, P or CG (default: P)")
    p.add_argument("--degree", type=int, default=3, help="polynomial degree 1..10 (default: 3)")
    p.add_argument("--expr", default="x[0]*x[0]*(1-x[0])", help="expression in x[0], x[1], x[2] (default: x[0]*x[0]*(1-x[0]))")
    p.add_argument("--out", default="field.fevf", help="field file to write (default: field.fevf)")

    p = command("sample", cmd_sample, "Sample a 2-D field on a pixel grid.")
    p.add_argument("--field", default="field.fevf", help="field file (default: field.fevf)")
    p.add_argument("--res", type=int, default=200, help="pixels along x (default: 200)")
    p.add_argument("--resy", type=int, default=None, help="pixels along y (default: same as --res)")
    p.add_argument("--window", type=_vector(4), default=None, help="x0,y0,x1,y1 (default: mesh bounding box)")
    p.add_argument("--background", type=float, default=0.0, help="value outside the mesh (default: 0)")
    _add_image_flags(p, "sample")

    p = command("mip", cmd_mip, "Maximum-intensity projection of a 3-D field.")
    p.add_argument("--field", default=None, help="field file to render")
    p.add_argument("--expr", default=None, help="render this expression directly instead of a field")
    p.add_argument("--lengths", type=_vector(3), default=(2.0, 2.0, 2.0), help="box for --expr (default: 2,2,2)")
    p.add_argument("--eye", type=_vector(3), default=(1.0, 1.0, 6.0), help="camera position (default: 1,1,6)")
    p.add_argument("--lookat", type=_vector(3), default=(1.0, 1.0, 1.0), help="camera target (default: 1,1,1)")
    p.add_argument("--up", type=_vector(3), default=(0.0, 1.0, 0.0), help="camera up vector (default: 0,1,0)")
    p.add_argument("--fov", type=float, default=30.0, help="vertical field of view in degrees (default: 30)")
    p.add_argument("--res", type=int, default=65, help="image width and height (default: 65)")
    p.add_argument("--step", type=float, default=0.01, help="ray-march step (default: 0.01)")
    p.add_argument("--near", type=float, default=0.0, help="ray start parameter (default: 0)")
    p.add_argument("--far", type=float, default=20.0, help="ray end parameter (default: 20)")
    p.add_argument("--clip-radius", type=float, default=None, help="only sample within this distance of --lookat (default: off)")
    p.add_argument("--background", type=float, default=0.0, help="initial pixel value (default: 0)")
    p.add_argument("--threads", type=int, default=1, help="render worker threads (default: 1)")
    _add_image_flags(p, "mip")

    p = command("helmholtz", cmd_helmholtz, "Solve -lap(u) + u = f on the unit square and sample u.")
    p.add_argument("--n", type=int, default=10, help="mesh subdivisions per side (default: 10)")
    p.add_argument("--degree", type=int, default=1, help="polynomial degree (default: 1)")
    p.add_argument("--forcing", choices=("exact", "interpolate"), default="exact",
                   help="integrate f exactly or interpolate it into V first (default: exact)")
    p.add_argument("--rtol", type=float, default=1e-10, help="CG relative residual (default: 1e-10)")
    p.add_argument("--res", type=int, default=100, help="sample resolution (default: 100)")
    p.add_argument("--field-out", default=None, help="also save the solution field here")
    _add_image_flags(p, "helmholtz")

    p = command("diff", cmd_diff, "Absolute difference of two NRRD images.")
    p.add_argument("--a", required=True, help="first NRRD image")
    p.add_argument("--b", required=True, help="second NRRD image")
    p.add_argument("--out", default=None, help="difference image path (default: do not write)")
    p.add_argument("--format", choices=("nrrd", "pgm", "both"), default="nrrd", help="image format (default: nrrd)")

    p = command("degrade", cmd_degrade, "Re-express a field in P1, as linear output formats do.")
    p.add_argument("--field", default="field.fevf", help="field file (default: field.fevf)")
    p.add_argument("--mode", choices=("interpolate", "l2project"), default="interpolate",
                   help="vertex interpolation or L2 projection (default: interpolate)")
    p.add_argument("--out", default="linear.fevf", help="P1 field file to write (default: linear.fevf)")
    return parser


def read_config(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}:{lineno}: expected key = value")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]):
    """Turn config-file entries into subcommand defaults so explicit flags win."""
    pre, _ = parser.parse_known_args(argv)
    if getattr(pre, "config", None) is None:
        return
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    subparser = sub.choices[pre.command]
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in read_config(pre.config).items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise ValidationError(f"unknown config key {key!r} for {pre.command}")
        try:
            defaults[key] = action.type(raw) if action.type else raw
        except (ValueError, argparse.ArgumentTypeError) as err:
            raise ValidationError(f"config key {key!r}: {err}") from None
        if action.choices is not None and defaults[key] not in action.choices:
            raise ValidationError(f"config key {key!r} must be one of {list(action.choices)}")
    subparser.set_defaults(**defaults)


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(name)s: %(message)s")
        return args.func(args)
    except ExprEvalError as err:
        print(f"fevis: error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValidationError, ExprError, UnsupportedFamilyError, ImageSizeError) as err:
        print(f"fevis: error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, FieldFormatError) as err:
        print(f"fevis: I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    except (ConvergenceError, ArithmeticError, ValueError, np.linalg.LinAlgError) as err:
        print(f"fevis: error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
