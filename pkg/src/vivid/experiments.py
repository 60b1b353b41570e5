"""Dataset generation, model training, the method comparison and the sweeps.

Randomness is keyed by ``SeedSequence((seed, step, repeat))`` so any result
row can be regenerated on its own from the seeds it carries.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import rom
from .assimilation import AssimilationProblem, GaussianTerm, minimize
from .config import AXES, ExperimentConfig, with_overrides
from .covariance import GridGeometry, build_matern_cov, cholesky_factor, empirical_cov, localize, observation_cov, shrink
from .fields import evaluate, flatten
from .inverse_operator import (
    ConvNetModel,
    build_vcnn,
    build_vcnn_rom,
    set_normalization,
    train,
)
from .observation import SensorObservation, SensorSet, add_observation_noise, extract, observe_full, place_sensors, tessellate
from .shallow_water import SnapshotSet, SweParams, simulate

log = logging.getLogger(__name__)

FULL_METHODS = ("DA", "VCNN", "VIVID")
ROM_METHODS = ("DA-ROM", "VCNN-ROM", "VIVID-ROM")


# ---------------------------------------------------------------- datasets

@dataclass
class Datasets:
    train: list[SnapshotSet]
    test: SnapshotSet


def sim_params(cfg: ExperimentConfig, h_p: float, r_w: float) -> SweParams:
    s = cfg.simulation
    return SweParams(g=s.g, b=s.b, dt=s.dt, h_still=s.h_still, h_p=h_p, r_w=r_w, grid=tuple(s.grid))


def generate_datasets(cfg: ExperimentConfig) -> Datasets:
    s = cfg.simulation
    train_sets = [simulate(sim_params(cfg, h_p, r_w), s.n_steps, s.save_every) for h_p, r_w in s.train_params]
    test = simulate(sim_params(cfg, *s.test_params), s.n_steps, s.save_every)
    return Datasets(train_sets, test)


def split_train_validation(datasets: Datasets, every: int) -> tuple[np.ndarray, np.ndarray]:
    """Every ``every``-th saved snapshot of each training simulation is held out."""
    train_f, val_f = [], []
    for snaps in datasets.train:
        idx = np.arange(len(snaps.times))
        held = idx % every == every - 1
        train_f.append(snaps.fields[~held])
        val_f.append(snaps.fields[held])
    return np.concatenate(train_f), np.concatenate(val_f)


# ---------------------------------------------------------------- observation helpers

def observe(truth: np.ndarray, positions: np.ndarray, beta: float) -> SensorSet:
    return extract(observe_full(truth, beta), positions)


def tessellated_inputs(fields: np.ndarray, cfg: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    """A fresh sensor placement per snapshot, observed and tessellated."""
    sc = cfg.sensors
    shape = fields.shape[1:]
    out = np.empty_like(fields)
    for k, truth in enumerate(fields):
        pos = place_sensors(sc.grid_n, sc.grid_m, sc.r_s, shape, rng)
        out[k] = tessellate(observe(truth, pos, sc.beta), shape).values
    return out


def make_background(truth: np.ndarray, s_b: float, L: float, rng: np.random.Generator, factor: np.ndarray | None = None) -> np.ndarray:
    """``truth + s_b * eps`` with eps drawn from the unit Matern field of length L."""
    truth = np.asarray(truth, dtype=float)
    if factor is None:
        n = int(round(math.sqrt(truth.size)))
        factor = cholesky_factor(build_matern_cov(GridGeometry(n, truth.size // n), L))
    return truth + s_b * (factor @ rng.standard_normal(truth.size))


# ---------------------------------------------------------------- training

@dataclass
class Artifacts:
    """Trained operators plus the validation statistics they need."""

    vcnn: ConvNetModel | None = None
    vcnn_rom: ConvNetModel | None = None
    basis: rom.PodBasis | None = None
    P: np.ndarray | None = None
    P_hat: np.ndarray | None = None
    history: dict = field(default_factory=dict)


def _train_rng(cfg: ExperimentConfig, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((cfg.seeds.train, tag)))


def training_data(cfg: ExperimentConfig, datasets: Datasets):
    train_f, val_f = split_train_validation(datasets, cfg.simulation.validation_every)
    x_train = tessellated_inputs(train_f, cfg, _train_rng(cfg, 0))
    x_val = tessellated_inputs(val_f, cfg, _train_rng(cfg, 1))
    return train_f, val_f, x_train, x_val


def train_vcnn(cfg: ExperimentConfig, x_train, y_train) -> ConvNetModel:
    tc = cfg.train
    model = build_vcnn(y_train.shape[1:], channels=tc.channels, linear_head=tc.linear_head, rng=_train_rng(cfg, 2))
    set_normalization(model, x_train, y_train)
    train(model, x_train, y_train, tc, log=log.info)
    return model


def train_vcnn_rom(cfg: ExperimentConfig, x_train, z_train, shape) -> ConvNetModel:
    tc = cfg.train_rom
    model = build_vcnn_rom(shape, z_train.shape[1], channels=tc.channels, rng=_train_rng(cfg, 3))
    set_normalization(model, x_train, z_train)
    train(model, x_train, z_train, tc, log=log.info)
    return model


def fit_basis(cfg: ExperimentConfig, train_f: np.ndarray) -> rom.PodBasis:
    return rom.fit_pod(train_f.reshape(len(train_f), -1).T, cfg.q)


def estimate_p(cfg: ExperimentConfig, model: ConvNetModel, x_val, val_f) -> np.ndarray:
    """Localized, shrunk empirical covariance of the VCNN residuals on validation data."""
    a = cfg.assimilation
    shape = val_f.shape[1:]
    resid = (model.predict(x_val) - val_f).reshape(len(val_f), -1)
    return shrink(localize(empirical_cov(resid), GridGeometry(*shape), a.p_localization), a.p_shrinkage)


def estimate_p_hat(cfg: ExperimentConfig, model: ConvNetModel, basis: rom.PodBasis, x_val, val_f) -> np.ndarray:
    z_true = val_f.reshape(len(val_f), -1) @ basis.modes
    return shrink(empirical_cov(model.predict(x_val) - z_true), cfg.assimilation.p_shrinkage)


def prepare(cfg: ExperimentConfig, datasets: Datasets, vcnn=None, vcnn_rom=None, basis=None) -> Artifacts:
    """Train whatever the method set needs (unless given) and estimate P, P_hat."""
    need_full = any(m in cfg.methods for m in ("VCNN", "VIVID"))
    need_rom = any(m in cfg.methods for m in ROM_METHODS)
    need_latent = any(m in cfg.methods for m in ("VCNN-ROM", "VIVID-ROM"))
    train_f, val_f, x_train, x_val = training_data(cfg, datasets)
    art = Artifacts()
    if need_full:
        art.vcnn = vcnn if vcnn is not None else train_vcnn(cfg, x_train, train_f)
        art.P = estimate_p(cfg, art.vcnn, x_val, val_f)
    if need_rom:
        art.basis = basis if basis is not None else fit_basis(cfg, train_f)
    if need_latent:
        if vcnn_rom is None:
            z_train = train_f.reshape(len(train_f), -1) @ art.basis.modes
            vcnn_rom = train_vcnn_rom(cfg, x_train, z_train, train_f.shape[1:])
        art.vcnn_rom = vcnn_rom
        art.P_hat = estimate_p_hat(cfg, vcnn_rom, art.basis, x_val, val_f)
    return art


# ---------------------------------------------------------------- assimilation of one snapshot

ROW_FIELDS = (
    "snapshot_id", "method", "r_rmse", "ssim", "iterations", "final_cost", "wall_ms",
    "seed_data", "seed_train", "seed_eval", "repeat", "axis", "axis_value", "status",
)


@dataclass
class Row:
    snapshot_id: int
    method: str
    r_rmse: float
    ssim: float
    iterations: int | None
    final_cost: float | None
    wall_ms: float | None
    seed_data: int
    seed_train: int
    seed_eval: int
    repeat: int = 0
    axis: str = ""
    axis_value: float | str = ""
    status: str = "ok"

    def as_csv(self) -> list[str]:
        out = []
        for name in ROW_FIELDS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(repr(v))
            else:
                out.append(str(v))
        return out


class _Cache:
    """Factored covariances shared across snapshots of one configuration."""

    def __init__(self):
        self._store: dict = {}

    def get(self, key, build):
        if key not in self._store:
            self._store[key] = build()
        return self._store[key]


def _geometry(cfg):
    return GridGeometry(*cfg.simulation.grid)


def _background_factor(cfg, cache):
    a = cfg.assimilation
    return cache.get(("Lb", a.corr_length), lambda: cholesky_factor(build_matern_cov(_geometry(cfg), a.corr_length)))


def _b_term(cfg, cache) -> GaussianTerm:
    a = cfg.assimilation
    key = ("B", a.s_b, a.assumed_corr_length)
    return cache.get(key, lambda: GaussianTerm(build_matern_cov(_geometry(cfg), a.assumed_corr_length, a.s_b)))


def _reduced_b(cfg, cache, basis) -> np.ndarray:
    a = cfg.assimilation
    return cache.get(("Bhat", a.s_b, a.assumed_corr_length), lambda: rom.reduce_cov(basis, _b_term(cfg, cache).cov))


def snapshot_rng(cfg: ExperimentConfig, step: int, repeat: int) -> list[np.random.Generator]:
    """Independent streams for sensors, background and observation noise."""
    ss = np.random.SeedSequence((cfg.seeds.evaluation, step, repeat))
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def assimilate_snapshot(
    cfg: ExperimentConfig,
    art: Artifacts,
    truth2d: np.ndarray,
    step: int,
    repeat: int = 0,
    methods=None,
    cache: _Cache | None = None,
    keep_fields: bool = False,
):
    """Run every requested method on one snapshot; returns rows (and fields)."""
    methods = cfg.methods if methods is None else methods
    cache = cache or _Cache()
    a, sc = cfg.assimilation, cfg.sensors
    shape = truth2d.shape
    x_true = flatten(truth2d)
    rng_s, rng_b, rng_n = snapshot_rng(cfg, step, repeat)
    pos = place_sensors(sc.grid_n, sc.grid_m, sc.r_s, shape, rng_s)
    sensors = observe(truth2d, pos, sc.beta)
    if a.obs_noise > 0:
        sensors = add_observation_noise(sensors, a.obs_noise, rng_n)
    R = observation_cov(sensors.values, a.obs_noise, a.r_var)
    obs = SensorObservation(pos, shape, sc.beta)
    x_b = make_background(x_true, a.s_b, a.corr_length, rng_b, _background_factor(cfg, cache))
    y_tess = tessellate(sensors, shape).values
    seeds = (cfg.seeds.data, cfg.seeds.train, cfg.seeds.evaluation)
    fields_out = {"truth": truth2d, "background": x_b.reshape(shape)}
    rows = []

    def record(method, estimate, iterations=None, final_cost=None, wall_ms=None, status="ok"):
        if estimate is None:
            rep_r, rep_s = float("nan"), float("nan")
        else:
            rep = evaluate(estimate.reshape(shape), truth2d)
            rep_r, rep_s = rep.r_rmse, rep.ssim
            fields_out[method] = estimate.reshape(shape)
        if not cfg.record_timing:
            wall_ms = None
        rows.append(Row(step, method, rep_r, rep_s, iterations, final_cost, wall_ms, *seeds, repeat=repeat, status=status))

    record("background", x_b)
    x_v = z_v = None
    for method in methods:
        try:
            if method == "VCNN":
                x_v = flatten(art.vcnn.predict(y_tess)) if x_v is None else x_v
                record(method, x_v, iterations=0)
            elif method in ("DA", "VIVID"):
                if method == "VIVID":
                    x_v = flatten(art.vcnn.predict(y_tess)) if x_v is None else x_v
                    p_term = cache.get(("P",), lambda: GaussianTerm(art.P))
                    prob = AssimilationProblem(x_b, _b_term(cfg, cache), sensors.values, R, obs, x_v, p_term)
                else:
                    prob = AssimilationProblem(x_b, _b_term(cfg, cache), sensors.values, R, obs)
                res = minimize(prob, cfg.solver)
                record(method, res.x_a, res.iterations, res.final_cost, res.wall_ms, "ok" if res.converged else res.message)
            elif method == "VCNN-ROM":
                z_v = art.vcnn_rom.predict(y_tess) if z_v is None else z_v
                record(method, rom.decode(art.basis, z_v), iterations=0)
            elif method in ("DA-ROM", "VIVID-ROM"):
                basis = art.basis
                r_obs = rom.reduced_obs_operator(basis, obs)
                z_b = rom.encode(basis, x_b)
                b_hat = _reduced_b(cfg, cache, basis)
                if method == "VIVID-ROM":
                    z_v = art.vcnn_rom.predict(y_tess) if z_v is None else z_v
                    prob = AssimilationProblem(z_b, b_hat, sensors.values, R, r_obs, z_v, art.P_hat)
                else:
                    prob = AssimilationProblem(z_b, b_hat, sensors.values, R, r_obs)
                res = minimize(prob, cfg.solver)
                record(method, rom.decode(basis, res.x_a), res.iterations, res.final_cost, res.wall_ms,
                       "ok" if res.converged else res.message)
            else:
                raise ValueError(f"unknown method {method}")
        except Exception as exc:  # a failing member is recorded, the run continues
            log.warning("%s failed on snapshot %d: %s", method, step, exc)
            record(method, None, status=f"failed: {exc}")
    return (rows, fields_out) if keep_fields else rows


# ---------------------------------------------------------------- comparison and sweeps

def run_comparison(cfg: ExperimentConfig, art: Artifacts, datasets: Datasets) -> list[Row]:
    cache = _Cache()
    rows = []
    for step in cfg.evaluation.steps:
        log.info("assimilating snapshot %d", step)
        rows += assimilate_snapshot(cfg, art, datasets.test.at(step), step, cache=cache)
    return rows


def summarize(rows: list[Row]) -> dict[str, dict[str, float]]:
    """Per-method means of R-RMSE, SSIM, iterations and wall time (failed rows skipped)."""
    table: dict[str, dict[str, float]] = {}
    for method in dict.fromkeys(r.method for r in rows):
        ok = [r for r in rows if r.method == method and np.isfinite(r.r_rmse)]
        its = [r.iterations for r in ok if r.iterations is not None]
        wall = [r.wall_ms for r in ok if r.wall_ms is not None]
        table[method] = {
            "r_rmse": float(np.mean([r.r_rmse for r in ok])) if ok else float("nan"),
            "ssim": float(np.mean([r.ssim for r in ok])) if ok else float("nan"),
            "iterations": float(np.mean(its)) if its else float("nan"),
            "wall_ms": float(np.mean(wall)) if wall else float("nan"),
            "n": len(ok),
        }
    return table


def axis_config(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    if axis == "background_std":
        return with_overrides(cfg, assimilation={"s_b": float(value)})
    if axis == "obs_noise":
        return with_overrides(cfg, assimilation={"obs_noise": float(value)})
    if axis == "sensor_grid":
        return with_overrides(cfg, sensors={"grid_n": int(value), "grid_m": int(value)})
    if axis == "corr_length":
        return with_overrides(cfg, assimilation={"assumed_corr_length": float(value)})
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")


def sweep(cfg: ExperimentConfig, art: Artifacts, datasets: Datasets, axis: str) -> list[Row]:
    """One comparison per axis value at the sweep snapshot, repeated with common seeds."""
    ev = cfg.evaluation
    values = getattr(ev, axis) if axis in AXES else None
    if values is None:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {AXES}")
    truth = datasets.test.at(ev.sweep_step)
    cache = _Cache()
    rows = []
    for value in values:
        point = axis_config(cfg, axis, value)
        for rep in range(ev.sweep_repeats):
            for r in assimilate_snapshot(point, art, truth, ev.sweep_step, rep, methods=ev.sweep_methods, cache=cache):
                rows.append(replace(r, axis=axis, axis_value=value))
    return rows


def sweep_curves(rows: list[Row]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Mean R-RMSE per axis value for each method: {method: (x, y)}."""
    curves = {}
    for method in dict.fromkeys(r.method for r in rows):
        xs = list(dict.fromkeys(r.axis_value for r in rows if r.method == method))
        ys = [np.nanmean([r.r_rmse for r in rows if r.method == method and r.axis_value == x]) for x in xs]
        curves[method] = (np.asarray(xs, dtype=float), np.asarray(ys))
    return curves


# ---------------------------------------------------------------- output

def write_rows(path: str | Path, rows: list[Row]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ROW_FIELDS)
        for r in rows:
            w.writerow(r.as_csv())


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_summary(path: str | Path, table: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "r_rmse", "ssim", "iterations", "wall_ms", "n"])
        for method, s in table.items():
            w.writerow([method, repr(s["r_rmse"]), repr(s["ssim"]), repr(s["iterations"]), repr(s["wall_ms"]), s["n"]])


def write_plot_data(path: str | Path, curves: dict) -> None:
    """(x, y, series) rows for external plotting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "series"])
        for method, (xs, ys) in curves.items():
            for x, y in zip(xs, ys):
                w.writerow([repr(float(x)), repr(float(y)), method])
