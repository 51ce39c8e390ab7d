import json

import pytest


def small_config(**over):
    cfg = {
        "grid": {"dim": 1, "n": 32, "L": 1.0},
        "params": {"delta": 1e-3, "epsilon": 1e-3},
        "solver": {"dt_init": 1e-5, "dt_max": 1e-3},
        "T_final": 0.02,
        "initial": {"kind": "constant+noise", "phi_bar": 0.5, "c_bar": 0.3, "amplitude": 0.05, "seed": 7},
        "output": {"every": 0.005, "dir": "out", "snapshots": True},
    }
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **val}
        else:
            cfg[key] = val
    return cfg


@pytest.fixture
def write_config(tmp_path):
    def write(name="cfg.json", **over):
        path = tmp_path / name
        path.write_text(json.dumps(small_config(**over)))
        return path

    return write


# PASS/FAIL lines from the acceptance suite, repeated in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
