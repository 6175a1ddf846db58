"""Command-line front end: ``run`` an adaptive campaign on a preset, ``verify`` a property suite.

Settings can come from a key-value file (``--config``, one ``key = value``
per line, ``#`` comments); command-line flags win over the file.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4
EXIT_VERIFY_FAILED = 5

SETTINGS = {
    # key: (type, default)
    "indicator": (str, "functional"),
    "marking": (str, "average"),
    "bulk": (float, 0.5),
    "stop": (int, None),
    "quad_order": (int, None),
    "threads": (int, None),
    "output": (str, "pbe_output"),
    "flux": (str, "equilibrate"),
    "reference_levels": (int, None),
    "vtk": (str, "yes"),
}


class ConfigError(ValueError):
    pass


def read_config(path) -> dict:
    out = {}
    for no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in SETTINGS:
            raise ConfigError(f"{path}:{no}: unknown key {key!r}")
        try:
            out[key] = SETTINGS[key][0](value)
        except ValueError:
            raise ConfigError(f"{path}:{no}: bad value {value!r} for {key}") from None
    return out


def merge_settings(args: argparse.Namespace) -> dict:
    settings = {k: d for k, (_, d) in SETTINGS.items()}
    if getattr(args, "config", None):
        settings.update(read_config(args.config))
    for key in SETTINGS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    return settings


def cap_threads(n: int | None) -> None:
    """Limit BLAS/OpenMP worker threads (effective before numpy is first imported)."""
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pbe-majorant", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="adaptive campaign on a preset")
    run.add_argument("preset")
    run.add_argument("--config", help="key-value settings file")
    run.add_argument("--indicator", choices=["functional", "fluxdiff", "true"])
    run.add_argument("--marking", choices=["average", "greedy"])
    run.add_argument("--bulk", type=float, help="greedy bulk factor theta in (0, 1]")
    run.add_argument("--stop", type=int, help="element budget")
    run.add_argument("--quad-order", dest="quad_order", type=int, help="quadrature order (1, 2, 3, 5, 7)")
    run.add_argument("--threads", type=int)
    run.add_argument("--output", help="output directory")
    run.add_argument("--flux", choices=["equilibrate", "average"], help="dual variable construction")
    run.add_argument("--reference-levels", dest="reference_levels", type=int,
                     help="uniform levels of the nested reference (ignored with a closed-form solution)")
    run.add_argument("--no-vtk", dest="vtk", action="store_const", const="no", help="skip VTK snapshots")
    ver = sub.add_parser("verify", help="run a property suite")
    ver.add_argument("suite", choices=["scalar", "identity", "equilibration", "convergence"])
    ver.add_argument("--threads", type=int)
    sub.add_parser("list", help="list presets")
    return p


def _validate(settings: dict, preset) -> None:
    from .quadrature import _TABLE

    if settings["quad_order"] is not None and settings["quad_order"] not in _TABLE:
        raise ConfigError(f"quad order must be one of {sorted(_TABLE)}")
    if not (0.0 < settings["bulk"] <= 1.0):
        raise ConfigError("bulk factor must lie in (0, 1]")
    if settings["stop"] is not None and settings["stop"] <= 0:
        raise ConfigError("stop must be positive")
    if settings["reference_levels"] is not None and settings["reference_levels"] < 1:
        raise ConfigError("reference levels must be at least 1")
    if settings["indicator"] not in ("functional", "fluxdiff", "true"):
        raise ConfigError(f"unknown indicator {settings['indicator']!r}")
    if settings["marking"] not in ("average", "greedy"):
        raise ConfigError(f"unknown marking {settings['marking']!r}")
    if settings["flux"] not in ("equilibrate", "average"):
        raise ConfigError(f"unknown flux method {settings['flux']!r}")


def manifest_text(preset, settings: dict, report, reference: str) -> str:
    from . import __version__
    from .estimator import CONSTRAINT_TOL

    spec = preset.spec
    items = [
        ("package_version", __version__), ("preset", preset.name), ("description", preset.description),
        ("indicator", settings["indicator"]), ("marking", settings["marking"]), ("bulk", settings["bulk"]),
        ("flux", settings["flux"]), ("stop", settings["stop"]), ("quad_order", spec.quad_order),
        ("nonlinearity", spec.nonlinearity), ("eps", f"{spec.eps1} {spec.eps2}"), ("k", f"{spec.k1} {spec.k2}"),
        ("newton_tol", spec.newton_tol), ("constraint_tol", CONSTRAINT_TOL),
        ("shift_levels", preset.shift_levels), ("initial_span", preset.initial_span),
        ("reference", reference), ("seed", os.environ.get("PBE_SEED", "none")),
        ("threads", settings["threads"] or "default"), ("levels", len(report.levels)),
    ]
    items += [(f"note_{i}", n) for i, n in enumerate(list(preset.notes) + list(report.notes))]
    return "".join(f"{k} = {v}\n" for k, v in items)


def cmd_run(args) -> int:
    settings = merge_settings(args)
    cap_threads(settings["threads"])
    import numpy as np

    from .amr import amr_loop
    from .presets import UnknownPreset, get_preset
    from .vtk import write_vtk

    try:
        preset = get_preset(args.preset)
    except UnknownPreset as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_USAGE
    try:
        _validate(settings, preset)
    except ConfigError as exc:
        print(f"invalid setting: {exc}", file=sys.stderr)
        return EXIT_INVALID
    spec = preset.spec if settings["quad_order"] is None else preset.spec.with_(quad_order=settings["quad_order"])
    stop = settings["stop"] if settings["stop"] is not None else preset.stop
    settings["stop"] = stop
    out = Path(settings["output"])
    out.mkdir(parents=True, exist_ok=True)
    exact = (preset.exact_u, preset.exact_grad) if preset.has_exact else None
    ref_levels = settings["reference_levels"] or preset.reference_levels

    def snapshot(res):
        r = res.errors
        line = (f"level {res.level}: {res.mesh.n_triangles} elements, 2M^2 = {2 * res.majorant.total_M2:.6g}, "
                f"marked {len(res.marked)}")
        if r is not None:
            line += f", identity residual {r.identity_residual:.3e}"
            if r.I_CEN_low is not None:
                line += f", I_CEN_low {r.I_CEN_low:.4f}"
        print(line, flush=True)
        if settings["vtk"] != "no":
            cells = {"eta2": res.majorant.per_element_eta2, "indicator": res.indicator,
                     "region": res.mesh.regions.astype(float)}
            if r is not None:
                cells["true_indicator"] = r.per_element_true_indicator
            marked = np.zeros(res.mesh.n_triangles)
            marked[res.marked] = 1.0
            cells["marked"] = marked
            write_vtk(out / f"level_{res.level:02d}.vtk", res.mesh,
                      {"u": res.u.values, "w": res.problem.w}, cells, f"{preset.name} level {res.level}")

    from .estimator import ConstraintViolation
    from .flux import EquilibrationError
    from .quadrature import NonFiniteError
    from .solver import SolverError

    try:
        shift = preset.shift()
        mesh0 = preset.initial_mesh(shift)
        report = amr_loop(spec, mesh0, settings["indicator"], settings["marking"], stop,
                          bulk=settings["bulk"], shift=shift, flux_method=settings["flux"],
                          reference_levels=ref_levels, exact=exact, on_level=snapshot)
    except (SolverError, EquilibrationError, ConstraintViolation, NonFiniteError) as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    (out / "report.csv").write_text(report.to_csv())
    (out / "manifest.txt").write_text(manifest_text(preset, settings, report, report.reference))
    for note in report.notes:
        print(f"note: {note}")
    print(f"wrote {out / 'report.csv'} and {out / 'manifest.txt'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cap_threads(args.threads)
    from .verify import run_suite

    checks = run_suite(args.suite)
    for c in checks:
        print(c.line())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY_FAILED


def cmd_list(args) -> int:
    from .presets import PRESETS

    for name, pr in sorted(PRESETS.items()):
        print(f"{name:<16s} {pr.description}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_list(args)
    except ConfigError as exc:
        print(f"invalid setting: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
