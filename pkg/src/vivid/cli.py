"""Command-line entry point: ``vivid <subcommand> ...``.

All commands read an optional JSON config (``--config``) and work inside a
directory (``--workdir``) holding ``data/`` (snapshot sets) and ``models/``
(network weights and the POD basis)::

    vivid simulate  --workdir run
    vivid train     --workdir run --head full
    vivid train     --workdir run --head rom
    vivid compare   --workdir run --out run/table.csv
    vivid sweep     --workdir run --axis obs_noise --out run/noise.csv
    vivid assimilate --workdir run --method VIVID --snapshot 4000 --out run/a.fld
    vivid metrics   --estimate run/a.fld --truth run/t.fld
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import experiments as ex
from . import io
from .config import AXES, METHODS, ExperimentConfig, dump_config, load_config
from .fields import evaluate
from .inverse_operator import load_model, save_model

log = logging.getLogger("vivid")


def _paths(workdir: Path) -> dict[str, Path]:
    return {
        "data": workdir / "data",
        "models": workdir / "models",
        "vcnn": workdir / "models" / "vcnn.bin",
        "vcnn_rom": workdir / "models" / "vcnn_rom.bin",
        "pod": workdir / "models" / "pod.bin",
    }


def _load_datasets(cfg: ExperimentConfig, workdir: Path) -> ex.Datasets:
    data = _paths(workdir)["data"]
    if not (data / "test.fld").exists():
        raise SystemExit(f"no snapshot data under {data}; run `vivid simulate` first")
    train = [io.read_snapshots(data / f"train_{i}.fld") for i in range(len(cfg.simulation.train_params))]
    return ex.Datasets(train, io.read_snapshots(data / "test.fld"))


def _load_artifacts(cfg: ExperimentConfig, workdir: Path, datasets: ex.Datasets) -> ex.Artifacts:
    p = _paths(workdir)
    needs = {
        "vcnn": any(m in cfg.methods for m in ("VCNN", "VIVID")),
        "vcnn_rom": any(m in cfg.methods for m in ("VCNN-ROM", "VIVID-ROM")),
        "pod": any(m in cfg.methods for m in ex.ROM_METHODS),
    }
    for key, needed in needs.items():
        if needed and not p[key].exists():
            head = "rom" if key != "vcnn" else "full"
            raise SystemExit(f"missing {p[key]}; run `vivid train --head {head}` first")
    return ex.prepare(
        cfg,
        datasets,
        vcnn=load_model(p["vcnn"]) if needs["vcnn"] else None,
        vcnn_rom=load_model(p["vcnn_rom"]) if needs["vcnn_rom"] else None,
        basis=io.load_pod(p["pod"]) if needs["pod"] else None,
    )


def cmd_simulate(args, cfg):
    data = _paths(args.workdir)["data"]
    data.mkdir(parents=True, exist_ok=True)
    ds = ex.generate_datasets(cfg)
    for i, snaps in enumerate(ds.train):
        io.write_snapshots(data / f"train_{i}.fld", snaps)
    io.write_snapshots(data / "test.fld", ds.test)
    log.info("wrote %d training and 1 test simulation to %s", len(ds.train), data)


def cmd_train(args, cfg):
    p = _paths(args.workdir)
    p["models"].mkdir(parents=True, exist_ok=True)
    ds = _load_datasets(cfg, args.workdir)
    train_f, _, x_train, _ = ex.training_data(cfg, ds)
    if args.head == "full":
        model = ex.train_vcnn(cfg, x_train, train_f)
        save_model(p["vcnn"], model)
        target = p["vcnn"]
    else:
        basis = ex.fit_basis(cfg, train_f)
        io.save_pod(p["pod"], basis)
        z_train = train_f.reshape(len(train_f), -1) @ basis.modes
        model = ex.train_vcnn_rom(cfg, x_train, z_train, train_f.shape[1:])
        save_model(p["vcnn_rom"], model)
        target = p["vcnn_rom"]
    with open(target.with_suffix(".loss.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(model.loss_history, 1):
            w.writerow([i, repr(loss)])
    log.info("saved %s", target)


def cmd_assimilate(args, cfg):
    cfg = _with_methods(cfg, [args.method])
    ds = _load_datasets(cfg, args.workdir)
    art = _load_artifacts(cfg, args.workdir, ds)
    rows, fields = ex.assimilate_snapshot(cfg, art, ds.test.at(args.snapshot), args.snapshot, keep_fields=True)
    if args.method not in fields:
        raise SystemExit(f"{args.method} failed: {rows[-1].status}")
    io.write_field(args.out, fields[args.method])
    if args.truth_out:
        io.write_field(args.truth_out, fields["truth"])
    if args.rows:
        ex.write_rows(args.rows, rows)
    _print_rows(rows)


def cmd_compare(args, cfg):
    ds = _load_datasets(cfg, args.workdir)
    art = _load_artifacts(cfg, args.workdir, ds)
    rows = ex.run_comparison(cfg, art, ds)
    ex.write_rows(args.out, rows)
    table = ex.summarize(rows)
    if args.summary:
        ex.write_summary(args.summary, table)
    for method, s in table.items():
        print(f"{method:10s} r_rmse={s['r_rmse']:.4f} ssim={s['ssim']:.4f} iterations={s['iterations']:.1f}")


def cmd_sweep(args, cfg):
    cfg = _with_methods(cfg, cfg.evaluation.sweep_methods)
    ds = _load_datasets(cfg, args.workdir)
    art = _load_artifacts(cfg, args.workdir, ds)
    rows = ex.sweep(cfg, art, ds, args.axis)
    ex.write_rows(args.out, rows)
    curves = ex.sweep_curves([r for r in rows if r.method != "background"])
    if args.plot:
        ex.write_plot_data(args.plot, curves)
    for method, (xs, ys) in curves.items():
        print(method, " ".join(f"{x:g}:{y:.4f}" for x, y in zip(xs, ys)))


def cmd_metrics(args, cfg):
    est, truth = io.read_field(args.estimate), io.read_field(args.truth)
    rep = evaluate(est, truth)
    line = f"r_rmse={rep.r_rmse!r} ssim={rep.ssim!r}"
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["estimate", "truth", "r_rmse", "ssim"])
            w.writerow([args.estimate, args.truth, repr(rep.r_rmse), repr(rep.ssim)])
    print(line)


def cmd_config(args, cfg):
    dump_config(cfg, args.out)


def _with_methods(cfg: ExperimentConfig, methods) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, methods=tuple(methods))


def _print_rows(rows):
    for r in rows:
        print(f"{r.snapshot_id} {r.method:10s} r_rmse={r.r_rmse:.4f} ssim={r.ssim:.4f} {r.status}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vivid", description="Variational assimilation with a Voronoi-CNN inverse operator.")
    parser.add_argument("--config", type=Path, help="JSON config overriding the desk-scale defaults")
    parser.add_argument("--workdir", type=Path, default=Path("."), help="directory holding data/ and models/")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", help="run the training and test simulations")
    p = sub.add_parser("train", help="train an inverse operator")
    p.add_argument("--head", choices=("full", "rom"), default="full")
    p = sub.add_parser("assimilate", help="assimilate one test snapshot with one method")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--snapshot", type=int, required=True, help="step index of the test snapshot")
    p.add_argument("--out", type=Path, required=True, help="analysis field (FLD1)")
    p.add_argument("--truth-out", type=Path, help="also write the true field")
    p.add_argument("--rows", type=Path, help="CSV of the result rows")
    p = sub.add_parser("compare", help="all methods over the evaluation snapshots")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--summary", type=Path)
    p = sub.add_parser("sweep", help="robustness sweep along one axis")
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plot", type=Path, help="(x, y, series) plot-data CSV")
    p = sub.add_parser("metrics", help="R-RMSE and SSIM between two field files")
    p.add_argument("--estimate", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p = sub.add_parser("config", help="write the effective config as JSON")
    p.add_argument("--out", type=Path, required=True)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "assimilate": cmd_assimilate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "metrics": cmd_metrics,
    "config": cmd_config,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = load_config(args.config)
    COMMANDS[args.command](args, cfg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
