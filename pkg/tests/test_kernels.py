"""The compiled kernels and the numpy fallback give the same answers."""

import os
import subprocess
import sys

import numpy as np
import pytest

from prosim import kernels

compiled = pytest.mark.skipif(not kernels.compiled_available(), reason="compiled kernels not built")


@pytest.fixture
def both():
    return kernels.get_backend("cython"), kernels.get_backend("python")


def _scene(seed, n=60):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0, 1500, n), rng.uniform(0, 1500, n)
    vx, vy = rng.normal(0, 12, n), rng.normal(0, 12, n)
    sig = rng.uniform(0.2, 2.0, n)
    return x, y, vx, vy, sig


@compiled
@pytest.mark.parametrize("seed", range(5))
def test_neighbor_mask(both, seed):
    """[TRIVIAL] identical neighbour masks."""
    x, y, *_ = _scene(seed)
    a, b = (k.neighbor_mask(x, y, 250.0) for k in both)
    np.testing.assert_array_equal(a, b)


@compiled
@pytest.mark.parametrize("seed", range(5))
def test_listener_sinr(both, seed):
    """[TRIVIAL] identical SINR matrices."""
    x, y, *_ = _scene(seed)
    a, b = (k.listener_sinr(x[:5], y[:5], x[5:], y[5:], 3.0, 1e-9) for k in both)
    np.testing.assert_allclose(a, b, rtol=1e-12)


@compiled
@pytest.mark.parametrize("seed", range(5))
def test_link_probabilities(both, seed):
    """[TRIVIAL] identical link probabilities."""
    x, y, vx, vy, sig = _scene(seed)
    a, b = (k.link_probabilities(x, y, vx, vy, sig, 700.0, 700.0, 5.0, -3.0, 1.0, 1.3, 250.0)
            for k in both)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-300)


@compiled
@pytest.mark.parametrize("seed", range(5))
def test_mac_select(both, seed):
    """[TRIVIAL] identical winners for the same visiting order."""
    x, y, *_ = _scene(seed)
    order = np.random.default_rng(seed).permutation(len(x)).astype(np.int64)
    a, b = (list(k.mac_select(order, x, y, 500.0)) for k in both)
    assert a == b


@compiled
@pytest.mark.parametrize("seed", range(5))
def test_mc_sinr_count(both, seed):
    """[TRIVIAL] identical success counts from the same draws."""
    rng = np.random.default_rng(seed)
    m, S = 6, 3000
    mus, sds = rng.uniform(80, 300, m), rng.uniform(1, 40, m)
    los = np.zeros(m)
    present = (rng.random((S, m)) < 0.4).view(np.uint8)
    gi = rng.standard_normal(int(present.sum()))
    g0 = rng.standard_normal(S)
    a, b = (k.mc_sinr_count(120.0, 15.0, 0.0, mus, sds, los, g0, present, gi, 3.0, 5.0, 1e-9, 0.1)
            for k in both)
    assert a == b


@compiled
@pytest.mark.parametrize("seed", range(5))
def test_forecast_links_same_stream(both, seed):
    """[DERIVED] both backends consume the generator identically and agree on the forecasts."""
    x, y, vx, vy, sig = _scene(seed, n=30)
    x, y = x * 0.4, y * 0.4  # pack the vehicles so there is interference
    cands = np.array([1, 4, 9, 12], dtype=np.int64)
    dts = np.array([0.3, 1.0, 1.5, 0.05])
    out, tails = [], []
    for k in both:
        rng = np.random.default_rng(seed)
        out.append(k.forecast_links(0, cands, x, y, vx, vy, sig, dts, 250.0, 0.01, 0.05, 300,
                                    3.0, 10.0, 6.4e-9, 0.1, rng))
        tails.append(rng.random(4))
    for a, b in zip(*out):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(tails[0], tails[1])


@compiled
def test_simulation_backend_independent():
    """[TRIVIAL] a whole run gives the same trace hash with either backend."""
    code = ("from prosim.sim import SimConfig, run_simulation; "
            "print(run_simulation(SimConfig(n_vehicles=50, n_cbr_pairs=8, sim_duration=20, seed=5)).trace_hash)")
    hashes = []
    for flag in ("0", "1"):
        env = dict(os.environ, PROSIM_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, check=True, capture_output=True,
                             text=True)
        hashes.append(res.stdout.strip())
    assert hashes[0] == hashes[1]


def test_unknown_backend():
    """[TRIVIAL] asking for a backend that does not exist fails loudly."""
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")
