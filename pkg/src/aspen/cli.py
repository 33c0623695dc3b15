"""Command-line entry point: reference, train, evaluate, sweep, ablate.

Exit codes: 0 success (a diverged run is a recorded outcome), 2 invalid
configuration, 3 numerical abort outside the training loop.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import diagnostics as dg
from .autodiff import NonFiniteError
from .config import ConfigError, ExperimentConfig, load_config, save_config
from .model import load_checkpoint, save_checkpoint
from .reference import Field, SolverError, cached_solve
from .training import inverse_setup, train, train_inverse

log = logging.getLogger("aspen")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

SWEEP_COLUMNS = ["axis", "value", "seed", "status", "rel_l2", "res_median", "seconds"]
ABLATION_COLUMNS = ["rung", "seed", "status", "rel_l2", "res_median", "seconds"]
RAR_COLUMNS = ["round", "x", "t"]
RUNGS = ("baseline", "fixed_fourier", "aspen_no_rar", "aspen_no_curriculum", "aspen")


def _with_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    tr = cfg.training
    if getattr(args, "epochs", None) is not None:
        tr = dataclasses.replace(tr, epochs=args.epochs)
    if getattr(args, "seed", None) is not None:
        tr = dataclasses.replace(tr, seed=args.seed)
    out = args.out if getattr(args, "out", None) is not None else cfg.output_dir
    return cfg.replace(training=tr, output_dir=str(out)).validate()


def reference_for(cfg: ExperimentConfig) -> Field | None:
    """Cached reference Field for the configured problem (CGLE only)."""
    pde = cfg.pde.build()
    if pde.kind != "CGLE":
        return None
    return cached_solve(pde, cfg.reference.solver())[0]


def run_training(cfg: ExperimentConfig, out_dir, progress: bool = False) -> dict:
    """Train per config, write checkpoint, log, config echo and report; return summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.yaml")
    pde = cfg.pde.build()
    truth = reference_for(cfg)
    if cfg.inverse is not None:
        if truth is None:
            raise ConfigError("inverse", "inverse mode needs a reference field")
        res = train_inverse(cfg, inverse_setup(cfg, truth), out, progress)
    else:
        res = train(cfg, None, out, progress)
    digest = ""
    if res.status == "ok":
        digest = save_checkpoint(res.params, out / "model.ckpt", cfg.digest())
    tc = cfg.training
    rep = dg.build_report(res.params, pde, truth, res.K_init, res.status,
                          dg.EvalGrid.uniform(pde, tc.eval_nx, tc.eval_nt))
    rep.extra.update(seconds=res.seconds, epochs_run=len(res.log) and res.log[-1]["epoch"] + 1,
                     checkpoint_sha256=digest, message=res.message,
                     n_rar=len(res.rar_points))
    if res.b_hat is not None:
        rep.extra.update(b_hat=res.b_hat, c_hat=res.c_hat, b_std=res.b_std, c_std=res.c_std)
    dg.write_report(rep, out)
    if res.rar_rounds:
        dg.write_csv(out / "rar_points.csv", RAR_COLUMNS,
                     ((i, x, t) for i, r in enumerate(res.rar_rounds) for x, t in r))
    return rep.summary()


def cmd_reference(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    pde = cfg.pde.build()
    if pde.kind != "CGLE":
        raise ConfigError("pde.kind", "reference solvers handle the CGLE only")
    field, path, hit = cached_solve(pde, cfg.reference.solver())
    print(f"reference {'cache hit' if hit else 'computed'}: {path}")
    rep = dg.build_report(None, pde, field)
    dg.write_report(rep, cfg.output_dir)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    s = run_training(cfg, cfg.output_dir, progress=not args.quiet)
    print(" ".join(f"{k}={dg._fmt(v)}" for k, v in s.items()))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    params, header = load_checkpoint(args.checkpoint)
    pde = cfg.pde.build()
    truth = reference_for(cfg)
    tc = cfg.training
    rep = dg.build_report(params, pde, truth, None, "ok",
                          dg.EvalGrid.uniform(pde, tc.eval_nx, tc.eval_nt))
    dg.write_report(rep, cfg.output_dir)
    print(" ".join(f"{k}={dg._fmt(v)}" for k, v in rep.summary().items()))
    return EXIT_OK


def _cell(job):
    """One sweep/ablation cell; failures become a recorded status."""
    cfg, out = job
    t0 = time.perf_counter()
    try:
        s = run_training(cfg, out)
        return s.get("status"), s.get("rel_l2"), s.get("res_median"), s.get("seconds")
    except (NonFiniteError, SolverError, FloatingPointError, ValueError) as exc:
        log.warning("cell %s failed: %s", out, exc)
        return f"failed: {exc}".replace(",", ";"), None, None, time.perf_counter() - t0


def _run_cells(jobs, workers: int):
    if workers <= 1:
        return [_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_cell, jobs))


def _seeds(text: str | None, default: int) -> list[int]:
    return [int(s) for s in text.split(",")] if text else [default]


def sweep_configs(cfg: ExperimentConfig, axis: str, values, seeds) -> list[tuple]:
    if axis not in ("m", "sigma"):
        raise ConfigError("axis", "must be m or sigma")
    cells = []
    for v in values:
        v = int(v) if axis == "m" else float(v)
        for s in seeds:
            c = cfg.replace(model=dataclasses.replace(cfg.model, **{axis: v}),
                            training=dataclasses.replace(cfg.training, seed=s)).validate()
            cells.append((axis, v, s, c))
    return cells


def cmd_sweep(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    values = [float(v) for v in args.values.split(",")]
    cells = sweep_configs(cfg, args.axis, values, _seeds(args.seeds, cfg.training.seed))
    root = Path(cfg.output_dir)
    reference_for(cfg)  # build the shared cache once before fanning out
    jobs = [(c, root / f"{a}-{v:g}-seed{s}") for a, v, s, c in cells]
    results = _run_cells(jobs, args.workers)
    rows = [(a, v, s, *r) for (a, v, s, _), r in zip(cells, results)]
    dg.write_csv(root / "sweep.csv", SWEEP_COLUMNS, rows)
    print(f"wrote {root / 'sweep.csv'}")
    return EXIT_OK


def rung_config(cfg: ExperimentConfig, rung: str) -> ExperimentConfig:
    """Configuration of one ablation rung; baseline and fixed-Fourier run plain."""
    m, t = cfg.model, cfg.training
    plain = dict(rar=False, curriculum=False)
    table = {
        "baseline": (dict(mode="baseline"), plain),
        "fixed_fourier": (dict(mode="fixed_fourier"), plain),
        "aspen_no_rar": (dict(mode="aspen"), dict(rar=False)),
        "aspen_no_curriculum": (dict(mode="aspen"), dict(curriculum=False)),
        "aspen": (dict(mode="aspen"), {}),
    }
    mk, tk = table[rung]
    return cfg.replace(model=dataclasses.replace(m, **mk),
                       training=dataclasses.replace(t, **tk)).validate()


def ablation_configs(cfg: ExperimentConfig, seeds) -> list[tuple]:
    return [(r, s, rung_config(cfg.replace(training=dataclasses.replace(cfg.training, seed=s)), r))
            for r in RUNGS for s in seeds]


def cmd_ablate(args) -> int:
    cfg = _with_overrides(load_config(args.config), args)
    cells = ablation_configs(cfg, _seeds(args.seeds, cfg.training.seed))
    root = Path(cfg.output_dir)
    reference_for(cfg)
    jobs = [(c, root / f"{r}-seed{s}") for r, s, c in cells]
    results = _run_cells(jobs, args.workers)
    rows = [(r, s, *res) for (r, s, _), res in zip(cells, results)]
    dg.write_csv(root / "ablation.csv", ABLATION_COLUMNS, rows)
    print(f"wrote {root / 'ablation.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aspen", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp):
        sp.add_argument("config", help="YAML experiment config")
        sp.add_argument("--epochs", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        return sp

    common(sub.add_parser("reference", help="solve and cache the reference field"))
    sp = common(sub.add_parser("train", help="train a model (forward or inverse)"))
    sp.add_argument("-q", "--quiet", action="store_true")
    sp = common(sub.add_parser("evaluate", help="report on a saved checkpoint"))
    sp.add_argument("--checkpoint", required=True)
    for name in ("sweep", "ablate"):
        sp = common(sub.add_parser(name))
        sp.add_argument("--seeds", help="comma-separated seeds")
        sp.add_argument("--workers", type=int, default=1)
        if name == "sweep":
            sp.add_argument("--axis", required=True, choices=["m", "sigma"])
            sp.add_argument("--values", required=True, help="comma-separated values")
    return p


COMMANDS = {"reference": cmd_reference, "train": cmd_train, "evaluate": cmd_evaluate,
            "sweep": cmd_sweep, "ablate": cmd_ablate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verbose:
        logging.getLogger("aspen").setLevel(logging.INFO)
    try:
        return COMMANDS[args.verb](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NonFiniteError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
