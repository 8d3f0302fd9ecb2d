"""Command-line entry point: train, eval, sdf-sample, reconstruct, info.

Exit codes: 0 success, 2 configuration or usage problems, 3 data problems
(missing or malformed files), 4 numeric failures (diverged training), and
5 corrupt checkpoints.  Reports go to stdout; diagnostics and progress go to
stderr, so report output stays byte-deterministic for a fixed seed.

Seed precedence: ``--seed`` flag, then ``[train] seed`` in the run file, then
the ``NRF_SEED`` environment variable, then 0.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .autodiff import NumericOverflowError
from .config import (
    ConfigError,
    RunConfig,
    load_run_config,
    model_config_from,
    train_config_from,
)
from .fielddata import (
    DataError,
    dataset_from_tetmesh,
    image_to_dataset,
    load_pgm,
    load_point_field,
    load_tetmesh,
    normalize_io,
    write_point_field,
)
from .metrics import evaluate, grid_validation
from .models import (
    CorruptCheckpointError,
    ModelConfigError,
    build_model,
    checkpoint_load,
    checkpoint_nbytes,
)
from .sdf import (
    SCENARIOS,
    SIZES,
    crossings_to_dataset,
    distance_error_stats,
    extract_zero_crossings,
    load_trimesh,
    rescale_to_unit_cube,
    sample_sdf_training_set,
    sample_set_to_dataset,
)
from .training import TrainingDiverged, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_CORRUPT = 5


class UsageError(ValueError):
    """Bad flag combination (maps to the configuration exit code)."""


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _default_seed() -> int:
    raw = os.environ.get("NRF_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"NRF_SEED must be an integer, got {raw!r}") from None


def _pick_seed(flag_seed: int | None, config_seed: int | None) -> int:
    if flag_seed is not None:
        return flag_seed
    if config_seed is not None:
        return config_seed
    return _default_seed()


def _sniff_format(path: str) -> str:
    with open(path, "rb") as f:
        head = f.read(8)
    if head[:8] == b"NRFTET1\0":
        return "tetmesh"
    if head[:8] == b"NRFPTS1\0":
        return "points"
    if head[:2] in (b"P2", b"P5"):
        return "pgm"
    return "points"  # text tables declare themselves via the #cols header


def _load_dataset(path: str, fmt: str = "auto"):
    if not os.path.exists(path):
        raise DataError(f"data file not found: {path}")
    if fmt == "auto":
        fmt = _sniff_format(path)
    if fmt == "pgm":
        return image_to_dataset(load_pgm(path))
    if fmt == "points":
        return load_point_field(path)
    if fmt == "tetmesh":
        return dataset_from_tetmesh(load_tetmesh(path))
    raise ConfigError(f"unknown data format {fmt!r}")


def _dataset_dims(dataset) -> dict:
    if dataset.mesh is not None:
        return {"Nn": dataset.mesh.nn, "C": dataset.mesh.c, "T": dataset.mesh.timesteps}
    return {"Nn": dataset.n, "C": dataset.c, "T": 1}


# ----- subcommands -------------------------------------------------------------


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    path = run.data.get("path")
    if path is None:
        raise ConfigError("config missing [data] path")
    dataset = _load_dataset(run.resolve_path(path), run.data.get("format", "auto"))
    if "values" in run.data:
        dataset = dataset.select_values(run.data["values"])
    seed = _pick_seed(args.seed, run.train.get("seed"))

    _, norm = normalize_io(dataset)
    model_cfg = model_config_from(run, dataset.din, dataset.c, seed)
    model = build_model(model_cfg, norm)

    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.nrfc")
    tcfg = train_config_from(run, seed, dataset.value_names, checkpoint_path=ckpt_path)

    def progress(it, loss):
        print(f"iter {it} loss {loss:.6e}", file=sys.stderr)

    model, trace = train(model, dataset, tcfg, progress=progress)
    trace.write(os.path.join(args.out, "trace.txt"))

    vnorm = run.eval.get("vnorm_components")
    vidx = None
    if vnorm is not None:
        from .config import resolve_component_mask

        vidx = resolve_component_mask(vnorm, dataset.value_names)
    report = evaluate(model, dataset, dims=_dataset_dims(dataset), vnorm_components=vidx)
    report.write(os.path.join(args.out, "report.txt"), os.path.join(args.out, "report.tsv"))
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.grid is not None and args.mesh is None:
        raise UsageError("--grid requires --mesh (the truth mesh for interpolation)")
    model = checkpoint_load(args.checkpoint)
    dataset = _load_dataset(args.data)
    report = evaluate(model, dataset, dims=_dataset_dims(dataset))
    sys.stdout.write(report.to_text())
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        report.write(os.path.join(args.out, "report.txt"), os.path.join(args.out, "report.tsv"))
    if args.grid is not None:
        if model.config.in_dim == 4 and args.time_value is None:
            raise UsageError("model takes a time coordinate: pass --time-value")
        if not os.path.exists(args.mesh):
            raise DataError(f"mesh file not found: {args.mesh}")
        mesh = load_tetmesh(args.mesh)
        greport = grid_validation(
            model, mesh, args.grid, timestep=args.timestep, time_value=args.time_value
        )
        sys.stdout.write("\n# grid validation\n")
        sys.stdout.write(greport.to_text())
        if args.out is not None:
            greport.write(
                os.path.join(args.out, "grid_report.txt"), os.path.join(args.out, "grid_report.tsv")
            )
    return EXIT_OK


def cmd_sdf_sample(args) -> int:
    mesh = load_trimesh(args.mesh)
    if not mesh.watertight:
        print(
            f"warning: mesh has {mesh.boundary_edges} boundary edges; "
            "signed distances may be unreliable",
            file=sys.stderr,
        )
    unit, transform = rescale_to_unit_cube(mesh)
    seed = _pick_seed(args.seed, None)
    samples = sample_sdf_training_set(unit, args.scenario, args.size, delta=args.delta, seed=seed)
    write_point_field(args.out, sample_set_to_dataset(samples), binary=args.binary)
    n1, n2, n3 = samples.counts
    for key, val in (
        ("scenario", samples.scenario),
        ("size", samples.size),
        ("n_uniform", n1),
        ("n_surface", n2),
        ("n_perturbed", n3),
        ("delta", _fmt(samples.delta)),
        ("sigma", _fmt(samples.sigma)),
        ("seed", samples.seed),
        ("scale_to_unit", _fmt(transform.scale)),
    ):
        print(f"{key} {val}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    model = checkpoint_load(args.checkpoint)
    if model.config.out_dim != 1:
        raise UsageError(
            f"reconstruction needs a scalar distance model; checkpoint has {model.config.out_dim} outputs"
        )
    if model.config.in_dim != 3:
        raise UsageError(
            f"reconstruction needs a 3-coordinate model; checkpoint has {model.config.in_dim} inputs"
        )
    if args.grid < 2:
        raise UsageError(f"--grid must be >= 2, got {args.grid}")
    mesh = load_trimesh(args.mesh)
    unit, transform = rescale_to_unit_cube(mesh)
    crossings = extract_zero_crossings(model, unit, args.grid)
    if crossings.points.shape[0] == 0:
        raise DataError("predicted field has no zero crossing on the grid; nothing to reconstruct")
    if args.out is not None:
        write_point_field(args.out, crossings_to_dataset(crossings), binary=args.binary)
    stats = distance_error_stats(crossings, transform=transform)
    for key in ("n", "mean_abs", "max_abs", "physical_mean_abs", "physical_max_abs"):
        print(f"{key} {_fmt(stats[key])}")
    return EXIT_OK


def cmd_info(args) -> int:
    import dataclasses

    model = checkpoint_load(args.checkpoint)
    cfg = model.config
    sizes = checkpoint_nbytes(model)
    print(f"architecture {cfg.architecture}")
    print(f"shape {cfg.layers} layers x {cfg.width}")
    for field in dataclasses.fields(cfg):
        if field.name in ("architecture", "encoding"):
            continue
        value = getattr(cfg, field.name)
        if value is not None:
            print(f"{field.name} {value}")
    enc = cfg.encoding
    for field in dataclasses.fields(enc):
        value = getattr(enc, field.name)
        if value is not None:
            if isinstance(value, tuple):
                value = " ".join(str(v) for v in value)
            print(f"encoding_{field.name} {value}")
    print(f"param_count {model.param_count()}")
    print(f"state_entries {sizes['entries']}")
    print(f"checkpoint_bytes {sizes['file']}")
    print(f"eq32_bytes {sizes['eq32']}")
    norm = model.norm
    print(f"norm_in_lo {' '.join(_fmt(v) for v in norm.in_lo)}")
    print(f"norm_in_hi {' '.join(_fmt(v) for v in norm.in_hi)}")
    print(f"norm_out_shift {' '.join(_fmt(v) for v in norm.out_shift)}")
    print(f"norm_out_scale {' '.join(_fmt(v) for v in norm.out_scale)}")
    return EXIT_OK


def _sweep_worker(item: tuple[str, str, str, int | None]) -> tuple[str, int]:
    import contextlib

    run_id, config_path, out_dir, seed = item
    argv = ["train", config_path, "--out", out_dir]
    if seed is not None:
        argv += ["--seed", str(seed)]
    os.makedirs(out_dir, exist_ok=True)
    # keep the parent's summary stream clean: each run logs to its own file
    with open(os.path.join(out_dir, "log.txt"), "w") as log:
        with contextlib.redirect_stdout(log), contextlib.redirect_stderr(log):
            return run_id, main(argv)


def cmd_sweep(args) -> int:
    items = []
    seen: dict[str, int] = {}
    for config_path in args.configs:
        stem = os.path.splitext(os.path.basename(config_path))[0]
        seen[stem] = seen.get(stem, 0) + 1
        run_id = stem if seen[stem] == 1 else f"{stem}-{seen[stem]}"
        items.append((run_id, config_path, os.path.join(args.out, run_id), args.seed))

    results: list[tuple[str, int]]
    if args.jobs > 1:
        import multiprocessing

        with multiprocessing.Pool(args.jobs) as pool:
            results = pool.map(_sweep_worker, items)
    else:
        results = [_sweep_worker(item) for item in items]
    worst = EXIT_OK
    for run_id, code in results:
        print(f"{run_id} exit {code}")
        worst = max(worst, code)
    return worst


# ----- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nrfield",
        description="Fit neural field representations to scientific data and query them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a run configuration file")
    p.add_argument("config", help="run configuration (INI sections: data/model/encoding/train/eval/sdf)")
    p.add_argument("--seed", type=int, default=None, help="override the run seed")
    p.add_argument("--out", default=".", help="output directory (checkpoint, trace, reports)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a dataset")
    p.add_argument("checkpoint")
    p.add_argument("data", help="dataset file (PGM image, point table, or tet mesh)")
    p.add_argument("--grid", type=int, default=None, help="regular-grid validation resolution")
    p.add_argument("--mesh", default=None, help="tet mesh with nodal truth (required with --grid)")
    p.add_argument("--timestep", type=int, default=0)
    p.add_argument("--time-value", dest="time_value", type=float, default=None)
    p.add_argument("--out", default=None, help="directory for report files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sdf-sample", help="generate a signed-distance training set from a surface")
    p.add_argument("mesh", help="triangle surface (OBJ or ASCII STL)")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--size", choices=SIZES, default="large")
    p.add_argument("--delta", type=float, default=1024.0, help="perturbation sharpness (sigma = 0.5/delta)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default="sdf_samples.txt", help="output point table")
    p.add_argument("--binary", action="store_true", help="write the binary point format")
    p.set_defaults(func=cmd_sdf_sample)

    p = sub.add_parser("reconstruct", help="extract the zero levelset of a trained SDF")
    p.add_argument("checkpoint")
    p.add_argument("--grid", type=int, default=100, help="lattice resolution per axis")
    p.add_argument("--mesh", required=True, help="source surface for exact distance errors")
    p.add_argument("--out", default=None, help="output point table for crossing points")
    p.add_argument("--binary", action="store_true")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("info", help="summarize a checkpoint")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("sweep", help="run several training configurations, optionally in parallel")
    p.add_argument("configs", nargs="+", help="run configuration files; run id = file stem")
    p.add_argument("--out", default=".", help="parent directory; each run writes to <out>/<run id>")
    p.add_argument("--jobs", type=int, default=1, help="number of parallel worker processes")
    p.add_argument("--seed", type=int, default=None, help="seed override applied to every run")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, UsageError, ModelConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CorruptCheckpointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, NumericOverflowError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
