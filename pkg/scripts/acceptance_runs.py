"""Long-running training jobs behind the desk-scale acceptance checks.

    python scripts/acceptance_runs.py [desk|ablation|inverse|rungs|inverse_dense|sweep ...]

The first three groups feed the acceptance criteria; the others feed the
property checks in tests/test_experiments.py.

Each job writes a normal ``aspen train`` output directory under results/.
A job whose directory already holds a summary for the identical config is
skipped, so the script can be rerun after an interruption.
"""
from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

from aspen import cli
from aspen.config import ExperimentConfig, load_config, serialize_config

ROOT = Path(__file__).resolve().parents[1]
RESULTS = ROOT / "results"
ABLATION_RUNGS = ("baseline", "fixed_fourier", "aspen")
EXTRA_RUNGS = ("aspen_no_rar", "aspen_no_curriculum")
ABLATION_SEEDS = (0, 1, 2, 3, 4)
SWEEP_VALUES = {"m": (32, 64, 128), "sigma": (1.0, 10.0, 50.0)}
SWEEP_SEEDS = (0, 1, 2)
SWEEP_EPOCHS = 2000


def desk_jobs() -> list[tuple[Path, ExperimentConfig]]:
    return [(RESULTS / "desk", load_config(ROOT / "configs" / "desk.yaml"))]


def ablation_jobs(rungs=ABLATION_RUNGS) -> list[tuple[Path, ExperimentConfig]]:
    base = load_config(ROOT / "configs" / "ablation.yaml")
    jobs = []
    for rung in rungs:
        for seed in ABLATION_SEEDS:
            cfg = base.replace(training=dataclasses.replace(base.training, seed=seed))
            jobs.append((RESULTS / "ablation" / f"{rung}-seed{seed}", cli.rung_config(cfg, rung)))
    return jobs


def inverse_jobs() -> list[tuple[Path, ExperimentConfig]]:
    return [(RESULTS / "inverse", load_config(ROOT / "configs" / "inverse.yaml"))]


def rung_jobs() -> list[tuple[Path, ExperimentConfig]]:
    return ablation_jobs(EXTRA_RUNGS)


def inverse_dense_jobs() -> list[tuple[Path, ExperimentConfig]]:
    return [(RESULTS / "inverse_dense", load_config(ROOT / "configs" / "inverse_dense.yaml"))]


def sweep_jobs() -> list[tuple[Path, ExperimentConfig]]:
    base = load_config(ROOT / "configs" / "ablation.yaml")
    base = base.replace(training=dataclasses.replace(base.training, epochs=SWEEP_EPOCHS))
    jobs = []
    for axis, values in SWEEP_VALUES.items():
        for a, v, s, cfg in cli.sweep_configs(base, axis, values, SWEEP_SEEDS):
            jobs.append((RESULTS / "sweep" / f"{a}-{v:g}-seed{s}", cfg))
    return jobs


JOBS = {"desk": desk_jobs, "ablation": ablation_jobs, "inverse": inverse_jobs,
        "rungs": rung_jobs, "inverse_dense": inverse_dense_jobs, "sweep": sweep_jobs}


def is_done(out: Path, cfg: ExperimentConfig) -> bool:
    echo = out / "config.yaml"
    return ((out / "summary.txt").exists() and echo.exists()
            and echo.read_text() == serialize_config(cfg))


def main(argv=None) -> int:
    names = (argv if argv is not None else sys.argv[1:]) or list(JOBS)
    for name in names:
        for out, cfg in JOBS[name]():
            cfg = cfg.replace(output_dir=str(out))
            if is_done(out, cfg):
                print(f"skip {out.relative_to(ROOT)} (up to date)", flush=True)
                continue
            print(f"run  {out.relative_to(ROOT)}", flush=True)
            s = cli.run_training(cfg, out, progress=True)
            print("     " + " ".join(f"{k}={v}" for k, v in s.items()), flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
