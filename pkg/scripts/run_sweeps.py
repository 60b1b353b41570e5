"""Robustness sweeps over background error, observation noise, sensor count
and assumed correlation length.

    python scripts/run_sweeps.py --out results/ [--axes obs_noise sensor_grid]

Writes sweep_<axis>.csv and plot_<axis>.csv (x, y, series) per axis.
"""

import argparse
import logging
import pickle
from pathlib import Path

from vivid import experiments as ex
from vivid.config import AXES, load_config, with_overrides


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--axes", nargs="+", choices=AXES, default=list(AXES))
    ap.add_argument("--artifacts", type=Path, help="pickle written by run_comparison.py")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    cfg = with_overrides(cfg, methods=cfg.evaluation.sweep_methods)
    args.out.mkdir(parents=True, exist_ok=True)
    ds = ex.generate_datasets(cfg)
    if args.artifacts and args.artifacts.exists():
        art = pickle.loads(args.artifacts.read_bytes())
    else:
        art = ex.prepare(cfg, ds)
    for axis in args.axes:
        rows = ex.sweep(cfg, art, ds, axis)
        ex.write_rows(args.out / f"sweep_{axis}.csv", rows)
        curves = ex.sweep_curves([r for r in rows if r.method != "background"])
        ex.write_plot_data(args.out / f"plot_{axis}.csv", curves)
        for method, (xs, ys) in curves.items():
            print(axis, method, " ".join(f"{x:g}:{y:.4f}" for x, y in zip(xs, ys)))


if __name__ == "__main__":
    main()
