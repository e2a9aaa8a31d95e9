import os
import subprocess
import sys

import numpy as np
import pytest

from resqsim import kernels
from resqsim.world import initial_state, params_from_config


def _drive(advance_fn, cfg, n_ticks=300):
    params = params_from_config(cfg)
    state = initial_state(cfg, params)
    ev = kernels.new_event_buffer()
    trace = []
    events = []
    for k in range(n_ticks):
        # a scripted mix of commands exercising approach, contact, loading
        v = 0.05 if k > 20 else 0.0
        duty = -0.1 if k > 40 else 0.0
        omega = 0.02 if k < 10 else 0.0
        advance_fn(state, params, v, omega, duty, 0, 10, ev)
        trace.append(state.copy())
        if ev[kernels.EV_FIRED] == 1.0:
            events.append((k, ev[kernels.EV_T_OFFSET], ev[kernels.EV_REL_SPEED]))
    return np.asarray(trace), events


@pytest.mark.skipif(not kernels.USE_NUMBA, reason="numba path not active")
def test_numba_and_python_paths_bit_identical(cfg):
    t_nb, ev_nb = _drive(kernels.advance, cfg)
    t_py, ev_py = _drive(kernels.py_advance, cfg)
    assert np.array_equal(t_nb, t_py)
    assert ev_nb == ev_py


def test_env_flag_selects_python_path(cfg):
    code = (
        "import resqsim.kernels as k; "
        "print(k.USE_NUMBA, k.advance is k.py_advance)"
    )
    env = dict(os.environ, RESQSIM_NO_NUMBA="1")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True
    )
    assert out.stdout.split() == ["False", "True"]


def test_contact_event_reported_once(cfg):
    _, events = _drive(kernels.advance, cfg, n_ticks=600)
    assert len(events) == 1
    _, t_off, rel = events[0]
    assert 0.0 <= t_off < 0.01
    assert rel == pytest.approx(0.05, rel=0.15)


def test_norm_angle_range():
    for theta in (-10.0, -np.pi, -1.0, 0.0, 1.0, np.pi, 10.0, 123.456):
        t = kernels.norm_angle(theta)
        assert -np.pi < t <= np.pi
        assert np.cos(t) == pytest.approx(np.cos(theta), abs=1e-12)
        assert np.sin(t) == pytest.approx(np.sin(theta), abs=1e-12)
