"""Shared fixtures: the reference five-converter system and randomized
grounded networks for property checks."""

from __future__ import annotations

import numpy as np
import pytest

from gridstrength import Branch, DeviceModel, DeviceSpec, GridSpec, PIGains, build_susceptance
from gridstrength.config import load_bundled

PAPER_BRANCHES = [
    ("1", "0", 0.2), ("1", "2", 0.15), ("1", "3", 0.1), ("1", "4", 0.06), ("1", "5", 0.09),
    ("2", "0", 0.15), ("2", "3", 0.18), ("2", "4", 0.2), ("2", "5", 0.21),
    ("3", "0", 0.25), ("3", "4", 0.07), ("3", "5", 0.05),
    ("4", "0", 0.1), ("4", "5", 0.11), ("5", "0", 0.08),
]
PAPER_P_B = [0.8, 0.7, 0.9, 1.0, 0.5]
PAPER_S_B = [1.5, 2.0, 1.0, 1.8, 1.5]

# reference values for the five-converter system
TABLE4_EIGENVALUES = np.array([6.0944, 24.9627, 46.6669, 56.6602, 94.3062])
TABLE5_PARTICIPATION = {"4": 1.0, "2": 0.8730, "1": 0.6948, "3": 0.4810, "5": 0.3029}
WEAKEST_MODE = -0.3132 + 53.3411j
WEAKEST_ZETA = 0.0059
CSCR_REF = 2.86


@pytest.fixture(scope="session")
def paper_grid() -> GridSpec:
    return GridSpec(
        buses=("1", "2", "3", "4", "5"),
        branches=tuple(Branch(a, b, v) for a, b, v in PAPER_BRANCHES),
    )


@pytest.fixture(scope="session")
def paper_b(paper_grid):
    return build_susceptance(paper_grid)


@pytest.fixture(scope="session")
def paper_devices() -> list[DeviceSpec]:
    return [
        DeviceSpec(bus=str(i + 1), s_b=s, p_b=p)
        for i, (p, s) in enumerate(zip(PAPER_P_B, PAPER_S_B))
    ]


@pytest.fixture(scope="session")
def paper_config():
    return load_bundled("paper_5vsc")


@pytest.fixture(scope="session")
def paper_model(paper_config) -> DeviceModel:
    """Converter with the calibrated dc link from the bundled config."""
    return paper_config.models()[0]


@pytest.fixture(scope="session")
def paper_models(paper_model) -> list[DeviceModel]:
    return [paper_model] * 5


def make_device_model(c_dc: float = 0.0184839948, u_dc: float = 2.0) -> DeviceModel:
    return DeviceModel(
        control_mode="dc_voltage",
        current=PIGains(0.6, 15.0),
        pll=PIGains(2.0, 3020.0),
        dc_voltage=PIGains(0.2, 200.0),
        l_f=0.05,
        c_f=0.05,
        c_dc=c_dc,
        u_dc=u_dc,
    )


def random_system(rng: np.random.Generator, n: int | None = None, lambda_min: float | None = None):
    """Random connected grounded network with devices at every bus.

    When ``lambda_min`` is given the branch susceptances are rescaled so the
    smallest operation-weighted eigenvalue equals it exactly.
    """
    from gridstrength import OperatingPoint, operation_eigensystem

    n = int(rng.integers(2, 7)) if n is None else n
    buses = tuple(str(i + 1) for i in range(n))
    branches = []
    for i in range(n):
        branches.append(Branch(buses[i], "0", float(rng.uniform(2.0, 8.0)), "susceptance"))
        for j in range(i + 1, n):
            # the chain keeps the device graph itself connected (irreducible B)
            if j == i + 1 or rng.uniform() < 0.5:
                branches.append(Branch(buses[i], buses[j], float(rng.uniform(1.0, 12.0)), "susceptance"))
    grid = GridSpec(buses=buses, branches=tuple(branches))
    devices = [
        DeviceSpec(bus=bu, s_b=float(rng.uniform(0.5, 2.0)), p_b=float(rng.uniform(0.3, 1.2)))
        for bu in buses
    ]
    b = build_susceptance(grid)
    if lambda_min is not None:
        eig = operation_eigensystem(b, devices, OperatingPoint.flat(devices))
        scale = lambda_min / eig.lambda_min
        branches = tuple(
            Branch(br.from_bus, br.to_bus, br.susceptance * scale, "susceptance")
            for br in grid.branches
        )
        grid = GridSpec(buses=buses, branches=branches)
        b = build_susceptance(grid)
    return grid, b, devices
