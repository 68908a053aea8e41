"""Susceptance-matrix construction, Kron reduction and weighted Jacobians."""

import numpy as np
import pytest

from gridstrength import (
    Branch,
    DeviceSpec,
    GridSpec,
    OperatingPoint,
    SingularMatrixError,
    SusceptanceMatrix,
    TopologyError,
    ValidationError,
    build_susceptance,
    extended_jacobian,
    kron_reduce,
    operation_jacobian,
)

from conftest import TABLE4_EIGENVALUES


def test_single_branch_reactance():
    grid = GridSpec(buses=("1",), branches=(Branch("1", "0", 0.5),))
    b = build_susceptance(grid)
    assert b.matrix == pytest.approx(np.array([[2.0]]))


def test_paper_network_entries(paper_b):
    assert paper_b.matrix[0, 0] == pytest.approx(1 / 0.2 + 1 / 0.15 + 1 / 0.1 + 1 / 0.06 + 1 / 0.09)
    assert paper_b.matrix[0, 1] == pytest.approx(-1 / 0.15)


def test_symmetry_and_m_matrix(paper_b):
    m = paper_b.matrix
    assert np.array_equal(m, m.T)
    assert np.all(np.diag(m) > 0)
    off = m - np.diag(np.diag(m))
    assert np.all(off <= 0)
    np.linalg.cholesky(m)  # positive definiteness


def test_row_sum_equals_grounding(paper_b, paper_grid):
    grounding = {br.from_bus: br.susceptance for br in paper_grid.branches if br.to_bus == "0"}
    for i, bus in enumerate(paper_b.buses):
        assert paper_b.matrix[i].sum() == pytest.approx(grounding[bus], rel=1e-12)


def test_susceptance_value_kind():
    grid = GridSpec(buses=("1",), branches=(Branch("1", "0", 2.0, "susceptance"),))
    assert build_susceptance(grid).matrix[0, 0] == pytest.approx(2.0)


def test_no_grounding_is_singular():
    with pytest.raises(SingularMatrixError):
        GridSpec(buses=("1", "2"), branches=(Branch("1", "2", 0.1),))


def test_disconnected_graph():
    with pytest.raises(TopologyError):
        GridSpec(buses=("1", "2"), branches=(Branch("1", "0", 0.1),))


def test_nonpositive_branch_value():
    with pytest.raises(ValidationError):
        Branch("1", "0", -0.5)
    with pytest.raises(ValidationError):
        Branch("1", "0", 0.0)


def test_kron_reduce_empty_passive(paper_b):
    assert kron_reduce(paper_b, []) is paper_b


def test_kron_reduce_star_by_hand():
    # devices 1,2 each tied to passive bus 3 by susceptance 2; bus 3 grounded by 1
    grid = GridSpec(
        buses=("1", "2", "3"),
        branches=(
            Branch("1", "3", 2.0, "susceptance"),
            Branch("2", "3", 2.0, "susceptance"),
            Branch("3", "0", 1.0, "susceptance"),
        ),
    )
    reduced = build_susceptance(grid, device_buses=["1", "2"])
    full = np.array([[2.0, 0.0, -2.0], [0.0, 2.0, -2.0], [-2.0, -2.0, 5.0]])
    expect = full[:2, :2] - np.outer(full[:2, 2], full[2, :2]) / full[2, 2]
    assert reduced.matrix == pytest.approx(expect, rel=1e-12)


def test_kron_reduce_series_shunt_formula():
    # two devices joined through one passive bus by b each, passive grounded by g:
    # reduced coupling = b^2 / (2b + g)
    b_, g = 3.0, 0.7
    grid = GridSpec(
        buses=("1", "2", "m"),
        branches=(
            Branch("1", "m", b_, "susceptance"),
            Branch("2", "m", b_, "susceptance"),
            Branch("m", "0", g, "susceptance"),
        ),
    )
    reduced = build_susceptance(grid, device_buses=["1", "2"])
    assert -reduced.matrix[0, 1] == pytest.approx(b_**2 / (2 * b_ + g), rel=1e-12)


def test_kron_reduce_matches_rebuilt_network():
    # eliminating the middle bus must equal building the reduced network directly
    b_, g = 4.0, 1.5
    grid = GridSpec(
        buses=("1", "2", "m"),
        branches=(
            Branch("1", "m", b_, "susceptance"),
            Branch("2", "m", b_, "susceptance"),
            Branch("m", "0", g, "susceptance"),
            Branch("1", "0", 2.0, "susceptance"),
            Branch("2", "0", 2.5, "susceptance"),
        ),
    )
    reduced = build_susceptance(grid, device_buses=["1", "2"])
    beq = b_**2 / (2 * b_ + g)
    geq = b_ * g / (2 * b_ + g)
    direct = GridSpec(
        buses=("1", "2"),
        branches=(
            Branch("1", "2", beq, "susceptance"),
            Branch("1", "0", 2.0 + geq, "susceptance"),
            Branch("2", "0", 2.5 + geq, "susceptance"),
        ),
    )
    assert reduced.matrix == pytest.approx(build_susceptance(direct).matrix, abs=1e-12)


def test_kron_singular_block():
    full = SusceptanceMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]), ("1", "p"))
    with pytest.raises(SingularMatrixError):
        kron_reduce(full, ["p"])


def test_extended_jacobian_single_is_scr():
    grid = GridSpec(buses=("1",), branches=(Branch("1", "0", 0.35),))
    b = build_susceptance(grid)
    j = extended_jacobian(b, [DeviceSpec(bus="1", s_b=1.0, p_b=1.0)])
    assert j[0, 0] == pytest.approx(1 / 0.35)


def test_extended_jacobian_scaling(paper_b, paper_devices):
    j = extended_jacobian(paper_b, paper_devices)
    scaled = [DeviceSpec(bus=d.bus, s_b=3.0 * d.s_b, p_b=d.p_b) for d in paper_devices]
    j3 = extended_jacobian(paper_b, scaled)
    assert np.linalg.eigvals(j3) == pytest.approx(np.linalg.eigvals(j) / 3.0)


def test_operation_jacobian_reduces_to_extended(paper_b):
    devices = [DeviceSpec(bus=str(i + 1), s_b=1.0 + 0.2 * i, p_b=1.0) for i in range(5)]
    op = OperatingPoint(
        p=np.array([d.s_b for d in devices]), q=np.zeros(5), u=np.ones(5)
    )
    j_eqo = operation_jacobian(paper_b, devices, op)
    j_eq = extended_jacobian(paper_b, devices)
    assert j_eqo == pytest.approx(j_eq)


def test_operation_jacobian_table4(paper_b, paper_devices):
    j = operation_jacobian(paper_b, paper_devices, weighting="absolute_power")
    eig = np.sort(np.linalg.eigvals(j).real)
    assert eig == pytest.approx(TABLE4_EIGENVALUES, abs=1e-3)


def test_operation_jacobian_power_scaling(paper_b, paper_devices):
    halved = [DeviceSpec(bus=d.bus, s_b=d.s_b, p_b=d.p_b / 2) for d in paper_devices]
    j = operation_jacobian(paper_b, paper_devices)
    j2 = operation_jacobian(paper_b, halved)
    assert np.sort(np.linalg.eigvals(j2).real) == pytest.approx(
        2 * np.sort(np.linalg.eigvals(j).real)
    )


def test_operation_jacobian_rejects_nonpositive_power(paper_b, paper_devices):
    bad = list(paper_devices)
    bad[2] = DeviceSpec(bus="3", s_b=1.0, p_b=0.0)
    with pytest.raises(ValidationError):
        operation_jacobian(paper_b, bad)


def test_eigenvalues_real_positive_by_symmetrization(paper_b, paper_devices):
    for weighting in ("absolute_power", "per_unit_power"):
        j = operation_jacobian(paper_b, paper_devices, weighting=weighting)
        w = np.sort(np.linalg.eigvals(j))
        assert np.abs(w.imag).max() < 1e-12
        d = np.diag(j) / np.diag(paper_b.matrix)
        sym = np.sqrt(d)[:, None] * paper_b.matrix * np.sqrt(d)[None, :]
        assert np.sort(np.linalg.eigvalsh(sym)) == pytest.approx(w.real, rel=1e-10)
        assert w.real.min() > 0


def test_device_order_mismatch(paper_b, paper_devices):
    with pytest.raises(ValidationError):
        extended_jacobian(paper_b, list(reversed(paper_devices)))
