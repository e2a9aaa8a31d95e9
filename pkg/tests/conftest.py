import copy

import pytest

from resqsim.scenario import apply_overrides, default_scenario, rough_scenario, validate


@pytest.fixture
def cfg():
    return validate(default_scenario())


@pytest.fixture
def rough_cfg():
    return validate(rough_scenario())


@pytest.fixture
def make_cfg():
    """Scenario factory applying dotted overrides to the defaults."""

    def _make(**overrides):
        dotted = {k.replace("__", "."): v for k, v in overrides.items()}
        return validate(apply_overrides(default_scenario(), dotted))

    return _make


@pytest.fixture
def quiet_cfg(make_cfg):
    """Defaults with every noise source disabled (fully seed-independent)."""
    return make_cfg(
        **{
            "control.operator_table.direct.command_noise_std": 0.0,
            "control.operator_table.conventional.command_noise_std": 0.0,
            "control.operator_table.immersive.command_noise_std": 0.0,
            "imu.noise_std": 0.0,
            "imu.bias_walk_std": 0.0,
        }
    )


def scenario_copy(cfg):
    return copy.deepcopy(cfg)
