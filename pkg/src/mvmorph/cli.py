"""Command-line front end.

``mvmorph run [config] [flags]`` ingests a template/reference pair, lifts
them to the configured manifold, runs the multiscale morphing, and writes
the frame sequence plus a CSV energy manifest. ``mvmorph demo-data``
materializes the synthetic experiment pairs together with ready-to-run
config files.

Config files are plain ``key = value`` text ('#' comments); command-line
flags override file entries. Exit codes: 0 success, 1 runtime abort
(degenerate deformations), 2 usage error.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import backend
from .errors import InvalidArgumentError, MvMorphError, RasterParseError
from .fileio import MODELS, export_frames, ingest, write_mvr
from .morph import MorphConfig, multiscale
from .registration import RegisterOptions

logger = logging.getLogger(__name__)

_DEFAULTS = {
    "template": None,
    "reference": None,
    "model": "mvr",
    "frames": 0,
    "alpha": 0.01,
    "eta": 0.0,
    "m": 3,
    "levels": 1,
    "scale_factor": 0.5,
    "inserts": "",
    "sweeps": 3,
    "out": None,
    "render": "mvr",
    "max_iter": 100,
    "cg_maxiter": 200,
    "ftol": 1e-9,
    "gtol_scale": 1e-6,
    "kernel_sigma": 1.0,
    "workers": 0,
}

_INT_KEYS = {"frames", "m", "levels", "sweeps", "max_iter", "cg_maxiter", "workers"}
_FLOAT_KEYS = {"alpha", "eta", "scale_factor", "ftol", "gtol_scale", "kernel_sigma"}


class UsageError(Exception):
    pass


def parse_config_file(path):
    """Read a key = value config file into a dict of strings."""
    out = {}
    text = Path(path).read_text()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r}") from exc
    return value


def _parse_inserts(text):
    text = (text or "").strip()
    if not text:
        return ()
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError as exc:
        raise UsageError(f"bad inserts list: {text!r}") from exc


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mvmorph",
        description="Smooth morphing paths between manifold-valued images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a morphing job")
    run.add_argument("config", nargs="?", help="key = value config file")
    run.add_argument("--template", help="template image path (first frame)")
    run.add_argument("--reference", help="reference image path (last frame)")
    run.add_argument("--model", choices=MODELS, help="manifold lift of the inputs")
    run.add_argument("--frames", type=int, help="number of path segments K")
    run.add_argument("--alpha", type=float, help="elastic weight mu = lambda = gamma")
    run.add_argument("--eta", type=float, help="zeroth-order weight")
    run.add_argument("--levels", type=int, help="pyramid levels (finest included)")
    run.add_argument("--scale-factor", type=float, dest="scale_factor")
    run.add_argument(
        "--inserts",
        help="comma list: new intermediates per pair at each level below the coarsest",
    )
    run.add_argument("--sweeps", type=int, help="alternation sweeps per level")
    run.add_argument("--out", help="output directory")
    run.add_argument("--render", choices=("png", "mvr", "glyph"))
    run.add_argument("--max-iter", type=int, dest="max_iter")
    run.add_argument("--cg-maxiter", type=int, dest="cg_maxiter")
    run.add_argument("--workers", type=int)
    run.add_argument("-v", "--verbose", action="store_true")

    demo = sub.add_parser("demo-data", help="write synthetic experiment inputs")
    demo.add_argument(
        "--case",
        required=True,
        choices=("blob", "spd3-rectangle", "spd2-whirl"),
    )
    demo.add_argument("--out", required=True, help="output directory")
    demo.add_argument("--size", type=int, default=0, help="override the grid size")
    demo.add_argument("-v", "--verbose", action="store_true")
    return parser


def _settings_from(args):
    settings = dict(_DEFAULTS)
    base = Path.cwd()
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            raise UsageError(f"config file not found: {cfg_path}")
        settings.update(parse_config_file(cfg_path))
        base = cfg_path.resolve().parent
    for key in _DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    settings = {k: _coerce(k, v) for k, v in settings.items()}
    for key in ("template", "reference", "out"):
        if settings[key]:
            p = Path(settings[key])
            settings[key] = p if p.is_absolute() else base / p
    return settings


def _morph_config(settings):
    try:
        return MorphConfig(
            alpha=settings["alpha"],
            eta=settings["eta"],
            m=settings["m"],
            levels=settings["levels"],
            scale_factor=settings["scale_factor"],
            inserts_per_level=_parse_inserts(settings["inserts"]),
            sweeps_per_level=settings["sweeps"],
            frames=settings["frames"],
            kernel_sigma=settings["kernel_sigma"],
            workers=settings["workers"],
            opts=RegisterOptions(
                gtol_scale=settings["gtol_scale"],
                ftol=settings["ftol"],
                max_iter=settings["max_iter"],
                cg_maxiter=settings["cg_maxiter"],
            ),
        )
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from exc


def write_manifest(rows, path):
    with open(path, "w") as fh:
        fh.write("level,sweep,phase,J_total,J_reg,J_data,min_det,floored\n")
        for r in rows:
            fh.write(
                f"{r.level},{r.sweep},{r.phase},{r.j_total:.17g},"
                f"{r.j_reg:.17g},{r.j_data:.17g},{r.min_det:.17g},{r.floored}\n"
            )


def _write_echo(settings, path):
    with open(path, "w") as fh:
        for key in sorted(settings):
            fh.write(f"{key} = {settings[key]}\n")


def run_command(args):
    settings = _settings_from(args)
    for key in ("template", "reference", "out"):
        if not settings[key]:
            raise UsageError(f"missing required setting: {key}")
    for key in ("template", "reference"):
        if not Path(settings[key]).is_file():
            raise UsageError(f"{key} image not found: {settings[key]}")
    if settings["render"] not in ("png", "mvr", "glyph"):
        raise UsageError(f"unknown render mode {settings['render']!r}")
    cfg = _morph_config(settings)

    # everything below is validated; ingest before creating the out directory
    T = ingest(settings["template"], settings["model"])
    R = ingest(settings["reference"], settings["model"])
    if T.shape != R.shape:
        raise UsageError(
            f"image shapes differ: {T.shape} vs {R.shape}"
        )

    t0 = time.perf_counter()
    state = multiscale(T, R, cfg)
    elapsed = time.perf_counter() - t0

    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    export_frames(state.images, out, settings["render"])
    write_manifest(state.ledger, out / "manifest.csv")
    _write_echo(settings, out / "config_echo.txt")
    with open(out / "run.json", "w") as fh:
        json.dump(
            {
                "elapsed_seconds": elapsed,
                "backend": backend.BACKEND_NAME,
                "frames": len(state.images),
                "aborted": state.aborted,
            },
            fh,
            indent=2,
        )
    if state.aborted:
        print(
            "mvmorph: degenerate deformation; partial results written to "
            f"{out}",
            file=sys.stderr,
        )
        return 1
    print(f"mvmorph: wrote {len(state.images)} frames to {out} ({elapsed:.1f}s)")
    return 0


_DEMO_CONFIGS = {
    "spd3-rectangle": {
        "model": "mvr",
        "levels": 2,
        "scale_factor": 0.5,
        "alpha": 1.0,
        "inserts": "5",
        "sweeps": 3,
        "render": "glyph",
    },
    "spd2-whirl": {
        "model": "mvr",
        "levels": 4,
        "scale_factor": 0.75,
        "alpha": 0.005,
        "inserts": "3,2,1",
        "sweeps": 3,
        "render": "glyph",
    },
    "blob": {
        "model": "mvr",
        "levels": 3,
        "scale_factor": 0.5,
        "alpha": 0.005,
        "inserts": "3,1",
        "sweeps": 2,
        "render": "png",
    },
}


def demo_command(args):
    from . import synthetic

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.case == "blob":
        n = args.size or 32
        T, R = synthetic.blob_pair(n, n)
    elif args.case == "spd3-rectangle":
        T, R = synthetic.spd3_rectangle_pair()
    else:
        n = args.size or 64
        T, R = synthetic.spd2_whirl_pair(n)
    write_mvr(T, out / "template.mvr")
    write_mvr(R, out / "reference.mvr")
    cfg = dict(_DEMO_CONFIGS[args.case])
    cfg.update({"template": "template.mvr", "reference": "reference.mvr", "out": "result"})
    with open(out / "morph.cfg", "w") as fh:
        for key, value in cfg.items():
            fh.write(f"{key} = {value}\n")
    print(f"mvmorph: wrote {args.case} pair and morph.cfg to {out}")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "run":
            code = run_command(args)
        else:
            code = demo_command(args)
    except UsageError as exc:
        print(f"mvmorph: {exc}", file=sys.stderr)
        code = 2
    except (RasterParseError, InvalidArgumentError) as exc:
        print(f"mvmorph: {exc}", file=sys.stderr)
        code = 2
    except MvMorphError as exc:
        print(f"mvmorph: {exc}", file=sys.stderr)
        code = 1
    sys.exit(code)


if __name__ == "__main__":
    main()
