import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def central_diff(fun, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


# a 16x16 profile that runs the whole pipeline in about a second
TINY = {
    "simulation": {
        "grid": [16, 16], "n_steps": 400, "save_every": 10,
        "train_params": [[0.1, 3.0], [0.15, 3.0]], "test_params": [0.2, 3.5], "validation_every": 4,
    },
    "sensors": {"grid_n": 4, "grid_m": 4, "r_s": 1},
    "evaluation": {
        "first_step": 100, "every": 100, "count": 3, "sweep_step": 200, "sweep_repeats": 2,
        "background_std": [0.01, 0.02], "obs_noise": [0.0, 0.1], "sensor_grid": [3, 4], "corr_length": [2.0, 3.0],
    },
    "assimilation": {"corr_length": 3.0, "assumed_corr_length": 3.0, "p_localization": 3.0},
    "train": {"epochs": 2, "channels": 2},
    "train_rom": {"epochs": 2, "channels": 2},
    "solver": {"k_max": 200},
    "q": 8,
}


@pytest.fixture(scope="session")
def tiny_cfg():
    from vivid.config import from_dict

    return from_dict(TINY)


@pytest.fixture(scope="session")
def tiny_run(tiny_cfg):
    from vivid import experiments as ex

    ds = ex.generate_datasets(tiny_cfg)
    return ds, ex.prepare(tiny_cfg, ds)
