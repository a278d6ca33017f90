"""Command-line interface: align, stitch, simulate, phase and evaluate.

Exit codes are 0 on success, 1 for user errors (bad arguments, unreadable
files) and 2 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import ArgumentError, NumericalError, UndefinedMetricError
from .initializer import HMRFParams
from .io import UserInputError, read_image, read_transforms, transforms_document, write_png, write_transforms
from .metrics import MetricConfig
from .solver import SolverConfig

log = logging.getLogger("rankalign")

EXIT_OK, EXIT_USER, EXIT_NUMERICAL = 0, 1, 2


def _int(s):
    return int(s)


def _cells(s) -> tuple[int, int]:
    parts = str(s).lower().replace(",", "x").split("x")
    if len(parts) != 2:
        raise ValueError(f"cells must look like 4x4, got {s!r}")
    rows, cols = int(parts[0]), int(parts[1])
    if rows < 1 or cols < 1:
        raise ValueError("cell counts must be positive")
    return rows, cols


def _floats(s) -> list[float]:
    return [float(x) for x in str(s).split(",") if x.strip()]


# key -> (parser, RunConfig section, field name)
CONFIG_KEYS = {
    "beta0": (float, "solver", "beta0"),
    "beta1": (float, "solver", "beta1"),
    "q": (float, "solver", "q"),
    "epsilon_inner": (float, "solver", "epsilon_inner"),
    "epsilon_outer": (float, "solver", "epsilon_outer"),
    "max_outer": (_int, "solver", "max_outer"),
    "lambda": (float, "solver", "lam"),
    "sigma_smooth": (float, "solver", "sigma_smooth"),
    "levels": (_int, "solver", "pyramid_levels"),
    "reference": (_int, "solver", "reference"),
    "presmooth": (float, "solver", "presmooth"),
    "kappa": (float, "hmrf", "kappa"),
    "eta": (float, "hmrf", "eta"),
    "alpha": (float, "hmrf", "alpha"),
    "max_displacement": (_int, "hmrf", "L"),
    "truncation_t": (float, "metric", "truncation_t"),
    "success_threshold": (float, "metric", "success_threshold"),
    "cells": (_cells, "run", "cells"),
    "seed": (_int, "run", "seed"),
}


@dataclass
class RunConfig:
    solver: SolverConfig = field(default_factory=SolverConfig)
    hmrf: HMRFParams = field(default_factory=HMRFParams)
    metric: MetricConfig = field(default_factory=MetricConfig)
    cells: tuple[int, int] = (1, 1)
    seed: int = 0


def parse_config_text(text: str, source: str = "config") -> dict[str, object]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are rejected."""
    values = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"{source}:{no}: expected 'key = value'")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ArgumentError(f"{source}:{no}: unknown key {key!r}")
        try:
            values[key] = CONFIG_KEYS[key][0](val)
        except ValueError as exc:
            raise ArgumentError(f"{source}:{no}: bad value for {key}: {exc}") from exc
    return values


def build_run_config(values: dict[str, object]) -> RunConfig:
    sections = {"solver": {}, "hmrf": {}, "metric": {}, "run": {}}
    for key, val in values.items():
        _, sec, name = CONFIG_KEYS[key]
        sections[sec][name] = val
    try:
        return RunConfig(SolverConfig(**sections["solver"]), HMRFParams(**sections["hmrf"]),
                         MetricConfig(**sections["metric"]), **sections["run"])
    except TypeError as exc:
        raise ArgumentError(str(exc)) from exc


def _load_config(args) -> RunConfig:
    values = {}
    if args.config is not None:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise UserInputError(f"{args.config}: cannot read config ({exc.strerror})") from exc
        values.update(parse_config_text(text, str(args.config)))
    for flag, key in (("levels", "levels"), ("cells", "cells"), ("lam", "lambda"), ("beta0", "beta0"),
                      ("beta1", "beta1"), ("q", "q"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = v
    run = build_run_config(values)
    if args.log is not None:
        run.solver = replace(run.solver, log_path=str(args.log))
    return run


def _write_json(path, doc) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _pairs_doc(per: dict) -> list[dict]:
    return [{"i": i, "j": j, "truncated_l2": v} for (i, j), v in sorted(per.items())]


def _read_gray(paths) -> list[np.ndarray]:
    return [read_image(p) for p in paths]


def _align(paths, run: RunConfig):
    from .pipeline import align_images

    if len(paths) < 2:
        raise ArgumentError("at least two input images are required")
    imgs = _read_gray(paths)
    log.info("aligning %d images (levels=%d, cells=%s)", len(imgs), run.solver.pyramid_levels, run.cells)
    res = align_images(imgs, run.solver, run.hmrf, cells=run.cells, metric_cfg=run.metric)
    return imgs, res


def _report(res, timing: bool) -> dict:
    doc = {"pairs": _pairs_doc(res.pair_errors), "aggregate_truncated_l2": res.aggregate_error,
           "outer_iterations": res.outer_iterations, "gains": res.gains.tolist()}
    if timing:
        doc["wall_time_s"] = res.wall_time
    return doc


def cmd_align(args) -> int:
    run = _load_config(args)
    imgs, res = _align(args.images, run)
    doc = transforms_document(args.images, res.pixel_transforms(), [im.shape for im in imgs],
                              res.canvas, run.solver.reference)
    if args.out is None:
        raise ArgumentError("--out is required for align")
    write_transforms(args.out, doc)
    _write_json(args.report, _report(res, not args.no_timing))
    return EXIT_OK


def cmd_stitch(args) -> int:
    from .pipeline import compose_panorama

    run = _load_config(args)
    if args.out is None:
        raise ArgumentError("--out is required for stitch")
    imgs, res = _align(args.images, run)
    colour = [read_image(p, color=True) for p in args.images]
    pano = compose_panorama(imgs if _is_gray(colour) else colour, res)
    write_png(args.out, pano.intensities)
    if args.transforms is not None:
        write_transforms(args.transforms, transforms_document(args.images, res.pixel_transforms(),
                                                              [im.shape for im in imgs], res.canvas,
                                                              run.solver.reference))
    return EXIT_OK


def _is_gray(colour) -> bool:
    return all(np.array_equal(c[..., 0], c[..., 1]) and np.array_equal(c[..., 0], c[..., 2]) for c in colour)


def cmd_simulate(args) -> int:
    from .solver import solve_single
    from .synth_bench import add_noise, alm_baseline, gen_rpca_instance, write_csv

    run = _load_config(args)
    if args.iters < 1 or args.seeds < 1:
        raise ArgumentError("iters and seeds must be positive")
    if args.noise < 0:
        raise ArgumentError("noise must be nonnegative")
    cfg = replace(run.solver, inner_iterations=args.iters)
    rows = []
    for s in range(run.seed, run.seed + args.seeds):
        inst = gen_rpca_instance(args.m, args.n, args.d, args.rho, s)
        D = add_noise(inst.D, args.noise, [s, 2]) if args.noise > 0 else inst.D
        supp = inst.support

        def record(method, k, S, dt):
            err = float(np.linalg.norm(dt - inst.delta_tau_star))
            contained = bool(np.all(supp[S != 0]))
            rows.append([method, s, k, err, int(contained)])

        solve_single(D, list(inst.jacobians), cfg,
                     callback=lambda st: record("rank1", st.k, st.S[0], st.delta_tau[:, 0, :].T))
        last = []

        def alm_cb(k, L, S, dt):
            if k <= args.iters:
                record("alm", k, S, dt)
                last[:] = [S, dt]

        res = alm_baseline(D, inst.jacobians, iterations=args.iters, callback=alm_cb)
        # the ALM stops early once converged; its iterate stays fixed afterwards
        for k in range(res.iterations + 1, args.iters + 1):
            record("alm", k, *last)
    if args.out is None:
        raise ArgumentError("--out is required for simulate")
    write_csv(args.out, ["method", "seed", "iteration", "error", "support_contained"], rows)
    return EXIT_OK


def cmd_phase(args) -> int:
    from .synth_bench import phase_cells, write_csv

    run = _load_config(args)
    if args.out is None:
        raise ArgumentError("--out is required for phase")
    trs, occs = _floats(args.translations), _floats(args.occlusions)
    if not trs or not occs:
        raise ArgumentError("translations and occlusions must be nonempty")
    if any(not 0 <= o < 1 for o in occs):
        raise ArgumentError("occlusions must lie in [0, 1)")
    cells = phase_cells(trs, occs, args.seeds, run.solver, args.size, run.hmrf, run.seed, args.workers)
    rows = [[c.translation, c.occlusion, c.successes, c.failures, c.n_seeds, c.fraction] for c in cells]
    write_csv(args.out, ["translation", "occlusion", "successes", "failures", "seeds", "success_fraction"], rows)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .pipeline import evaluate_alignment

    run = _load_config(args)
    paths, transforms, canvas, _ = read_transforms(args.transforms)
    if args.images:
        paths = args.images
    if len(paths) != len(transforms):
        raise ArgumentError(f"{len(paths)} images but {len(transforms)} transforms")
    imgs = _read_gray(paths)
    per, agg = evaluate_alignment(imgs, transforms, canvas, run.metric)
    _write_json(args.out, {"pairs": _pairs_doc(per), "aggregate_truncated_l2": agg})
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rankalign", description="Rank-1 plus sparse panoramic image alignment.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--seed", type=int, help="random seed (first seed for multi-seed commands)")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--log", help="JSON-lines convergence log")
        sp.add_argument("--levels", type=int, help="pyramid levels")
        sp.add_argument("--cells", type=_cells, help="cells per image, e.g. 4x4")
        sp.add_argument("--lambda", dest="lam", type=float, help="cell smoothness weight")
        sp.add_argument("--beta0", type=float)
        sp.add_argument("--beta1", type=float)
        sp.add_argument("--q", type=float, help="threshold decay rate in (0, 1)")
        sp.add_argument("-v", "--verbose", action="store_true")

    a = sub.add_parser("align", help="estimate transforms")
    a.add_argument("images", nargs="+")
    common(a, "transform JSON path")
    a.add_argument("--report", help="metrics report path (default: stdout)")
    a.add_argument("--no-timing", action="store_true", help="omit wall time from the report")
    a.set_defaults(func=cmd_align)

    s = sub.add_parser("stitch", help="align and blend into a panorama PNG")
    s.add_argument("images", nargs="+")
    common(s, "panorama PNG path")
    s.add_argument("--transforms", help="also write the transform JSON here")
    s.set_defaults(func=cmd_stitch)

    m = sub.add_parser("simulate", help="convergence curves on synthetic instances")
    common(m, "CSV path")
    m.add_argument("--m", type=int, default=500)
    m.add_argument("--n", type=int, default=10)
    m.add_argument("--d", type=int, default=8)
    m.add_argument("--rho", type=float, default=0.05)
    m.add_argument("--iters", type=int, default=50)
    m.add_argument("--seeds", type=int, default=1, help="number of seeds")
    m.add_argument("--noise", type=float, default=0.0)
    m.set_defaults(func=cmd_simulate, q=0.75)

    ph = sub.add_parser("phase", help="success fractions over translation x occlusion")
    common(ph, "CSV path")
    ph.add_argument("--translations", default="0,0.1,0.2", help="comma list, fractions of width")
    ph.add_argument("--occlusions", default="0,0.1,0.2", help="comma list of fractions")
    ph.add_argument("--seeds", type=int, default=10, help="number of seeds")
    ph.add_argument("--size", type=int, default=64)
    ph.add_argument("--workers", type=int, default=1)
    ph.set_defaults(func=cmd_phase)

    e = sub.add_parser("evaluate", help="truncated l2 of a transform file")
    e.add_argument("transforms")
    e.add_argument("images", nargs="*", help="override the image paths stored in the file")
    common(e, "report path (default: stdout)")
    e.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"rankalign: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArgumentError, UndefinedMetricError) as exc:
        print(f"rankalign: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except OSError as exc:
        print(f"rankalign: error: {exc}", file=sys.stderr)
        return EXIT_USER


if __name__ == "__main__":
    sys.exit(main())
