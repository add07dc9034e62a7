import numpy as np
import pytest
from hypothesis import settings

from procctl.basis import build_gell_mann_basis
from procctl.config import CONFIG_SCHEMA_ID
from procctl.dynamics import LindbladModel
from procctl.fields import ShapeFunction, TimeGrid, guess_pulse
from procctl.io import encode_matrix

settings.register_profile("procctl", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("procctl")


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_unitary(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_model(rng, n, n_controls=2, n_jumps=2, scale=0.3):
    return LindbladModel(
        dim=n,
        drift=random_hermitian(rng, n, scale),
        controls=tuple(random_hermitian(rng, n, 0.5) for _ in range(n_controls)),
        jumps=tuple(
            (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)), float(rng.uniform(0.01, 0.1)))
            for _ in range(n_jumps)
        ),
    )


def qubit_model(gamma=0.05, delta=0.4):
    sz = np.diag([1.0, -1.0])
    sx = np.array([[0, 1], [1, 0]])
    sm = np.array([[0, 1], [0, 0]])
    return LindbladModel(2, 0.5 * delta * sz, (0.5 * sx,), ((sm, gamma),), control_names=("ex",))


def qubit_guess(grid, peak=0.3, weight=1.0):
    return (guess_pulse(ShapeFunction("blackman-paper", g=0.16, k=2, l=4), peak, grid, "ex", weight),)


def qubit_config(**over):
    """Small inline two-level config used here and by the CLI tests."""
    data = {
        "schema": CONFIG_SCHEMA_ID,
        "model": {
            "dim": 2,
            "drift": encode_matrix(np.diag([0.2, -0.2])),
            "controls": [{"name": "ex", "matrix": encode_matrix(0.5 * np.array([[0, 1], [1, 0]]))}],
            "jumps": [{"matrix": encode_matrix(np.array([[0, 1], [0, 0]])), "rate": 0.05}],
        },
        "grid": {"t_f_ns": 10.0, "n_steps": 40},
        "objective": {"target": "gate:phase:pi:level=1"},
        "fields": [{"name": "ex", "shape": {"kind": "blackman-paper", "k": 2, "l": 4}, "peak": 0.3, "weight": 1.0}],
        "krotov": {"max_iters": 5},
        "validation": {"oracle_samples": 3},
    }
    for k, v in over.items():
        data[k] = v
    return data


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def gm2():
    return build_gell_mann_basis(2)


@pytest.fixture(scope="session")
def gm4():
    return build_gell_mann_basis(4)


@pytest.fixture
def qubit_grid():
    return TimeGrid(10.0, 40)
