"""Eigen-analysis, strength indices, participation and sensitivities.

Sensitivity values are cross-checked against central finite differences,
the stated independent oracle.
"""

import warnings

import numpy as np
import pytest

from gridstrength import (
    Branch,
    DeviceSpec,
    GridSpec,
    OperatingPoint,
    ValidationError,
    build_susceptance,
    capacity_eigensystem,
    gscr,
    ogscr,
    operation_eigensystem,
    participation,
    scr_single,
    sensitivities,
    weighted_eigensystem,
)

from conftest import TABLE4_EIGENVALUES, TABLE5_PARTICIPATION, random_system


def test_textbook_pair():
    b = np.array([[2.0, -1.0], [-1.0, 2.0]])
    eig = weighted_eigensystem(b, np.ones(2))
    assert eig.eigenvalues == pytest.approx([1.0, 3.0])
    u1 = eig.right[:, 0]
    assert u1[0] == pytest.approx(u1[1])
    assert np.all(u1 > 0)


def test_paper_eigenvalues(paper_b, paper_devices):
    eig = operation_eigensystem(paper_b, paper_devices)
    assert eig.eigenvalues == pytest.approx(TABLE4_EIGENVALUES, abs=1e-3)
    assert ogscr(eig) == pytest.approx(6.0944, abs=1e-3)


def test_random_weighted_spectrum_vs_dense_solver():
    rng = np.random.default_rng(7)
    for _ in range(20):
        _, b, devices = random_system(rng)
        d = rng.uniform(0.2, 3.0, b.n)
        eig = weighted_eigensystem(b, d)
        dense = np.sort(np.linalg.eigvals(np.diag(d) @ b.matrix).real)
        assert eig.eigenvalues == pytest.approx(dense, rel=1e-9)


def test_biorthonormality_and_reconstruction(paper_b, paper_devices):
    eig = operation_eigensystem(paper_b, paper_devices)
    gram = eig.left @ eig.right
    assert gram == pytest.approx(np.eye(eig.n), abs=1e-10)
    m = np.diag(eig.weights) @ paper_b.matrix
    assert eig.reconstruct() == pytest.approx(m, rel=1e-8)
    # left eigenvectors parallel to D^{-1} u
    for i in range(eig.n):
        v = eig.left[i]
        u_over_d = eig.right[:, i] / eig.weights
        ratio = v / u_over_d
        assert ratio == pytest.approx(np.full(eig.n, ratio[0]), rel=1e-9)


def test_perron_vector_positive():
    rng = np.random.default_rng(21)
    for _ in range(50):
        _, b, devices = random_system(rng)
        eig = operation_eigensystem(b, devices, OperatingPoint.flat(devices))
        assert np.all(eig.right[:, 0] > 0)


def test_validation_errors(paper_b):
    with pytest.raises(ValidationError):
        weighted_eigensystem(paper_b, -np.ones(paper_b.n))
    with pytest.raises(ValidationError):
        weighted_eigensystem(paper_b, np.ones(3))


def test_scr_single():
    assert scr_single(1.0, 0.35) == pytest.approx(1 / 0.35)
    assert scr_single(2.0, 0.25) == pytest.approx(2.0)
    with pytest.raises(ValidationError):
        scr_single(-1.0, 0.2)


def test_gscr_equals_scr_single_infeed():
    grid = GridSpec(buses=("1",), branches=(Branch("1", "0", 0.35),))
    b = build_susceptance(grid)
    dev = DeviceSpec(bus="1", s_b=1.0, p_b=1.0)
    eig = capacity_eigensystem(b, [dev])
    assert gscr(eig) == scr_single(1.0, 0.35)


def test_ogscr_equals_gscr_at_identity_weight(paper_b):
    devices = [DeviceSpec(bus=str(i + 1), s_b=1.0 + 0.3 * i, p_b=1.0) for i in range(5)]
    cap = capacity_eigensystem(paper_b, devices)
    op = operation_eigensystem(paper_b, devices, OperatingPoint.flat(devices))
    assert op.eigenvalues[0] == cap.eigenvalues[0]


def test_participation_single_device():
    grid = GridSpec(buses=("1",), branches=(Branch("1", "0", 0.35),))
    b = build_susceptance(grid)
    eig = capacity_eigensystem(b, [DeviceSpec(bus="1", s_b=1.0, p_b=1.0)])
    part = participation(eig, 0)
    assert part.raw == pytest.approx([1.0])


def test_participation_table5(paper_b, paper_devices):
    eig = operation_eigensystem(paper_b, paper_devices)
    part = participation(eig, 0)
    assert part.raw.sum() == pytest.approx(1.0, rel=1e-12)
    for bus, expect in TABLE5_PARTICIPATION.items():
        i = paper_b.buses.index(bus)
        assert part.normalized[i] == pytest.approx(expect, abs=5e-3)
    assert part.normalized.max() == 1.0


def test_participation_symmetric_network():
    grid = GridSpec(
        buses=("1", "2"),
        branches=(
            Branch("1", "0", 4.0, "susceptance"),
            Branch("2", "0", 4.0, "susceptance"),
            Branch("1", "2", 2.0, "susceptance"),
        ),
    )
    b = build_susceptance(grid)
    devices = [DeviceSpec(bus=s, s_b=1.3, p_b=0.8) for s in ("1", "2")]
    eig = operation_eigensystem(b, devices, OperatingPoint.flat(devices))
    part = participation(eig, 0)
    assert part.raw[0] == pytest.approx(part.raw[1], rel=1e-12)


def test_participation_index_range(paper_b, paper_devices):
    eig = operation_eigensystem(paper_b, paper_devices)
    with pytest.raises(ValidationError):
        participation(eig, 5)


def _lambda_min(d, m):
    """Smallest eigenvalue of diag(d) @ m via the symmetric similarity.

    Full eigh accuracy is needed because the finite-difference step below
    is 1e-6; the plain nonsymmetric solver is too noisy for that.
    """
    s = np.sqrt(np.asarray(d))
    return float(np.linalg.eigvalsh(s[:, None] * np.asarray(m) * s[None, :])[0])


def _fd_lambda_min(make_weighted, h):
    """Central finite difference; make_weighted(delta) -> (d, B)."""
    return (_lambda_min(*make_weighted(+h)) - _lambda_min(*make_weighted(-h))) / (2 * h)


def _check_sensitivities_fd(b, devices, weighting, rel=1e-5):
    op = OperatingPoint.flat(devices)
    eig = operation_eigensystem(b, devices, op, weighting=weighting)
    rep = sensitivities(eig, b, devices, op, weighting=weighting)
    s_b = np.array([d.s_b for d in devices])
    p_b = np.array([d.p_b for d in devices])
    u = op.u

    def weight(sb, pb):
        return u / (pb * sb) if weighting == "absolute_power" else u / pb

    h = 1e-6
    # absolute floor at the finite-difference noise level: near-symmetric
    # branch sensitivities can be arbitrarily close to zero, where a purely
    # relative comparison is meaningless
    floor = 1e-7
    for i in range(b.n):
        def m_sb(d, i=i):
            sb = s_b.copy()
            sb[i] += d
            return weight(sb, p_b), b.matrix

        def m_pb(d, i=i):
            pb = p_b.copy()
            pb[i] += d
            return weight(s_b, pb), b.matrix

        if weighting == "absolute_power":
            assert rep.wrt_s_b[i] == pytest.approx(_fd_lambda_min(m_sb, h), rel=rel, abs=floor)
        assert rep.wrt_p_b[i] == pytest.approx(_fd_lambda_min(m_pb, h), rel=rel, abs=floor)
    d0 = weight(s_b, p_b)
    for (bi, bj), val in rep.wrt_branches.items():
        i = b.buses.index(bi)
        j = None if bj == "0" else b.buses.index(bj)

        def m_br(d, i=i, j=j):
            m = b.matrix.copy()
            m[i, i] += d
            if j is not None:
                m[j, j] += d
                m[i, j] -= d
                m[j, i] -= d
            return d0, m

        assert val == pytest.approx(_fd_lambda_min(m_br, h), rel=rel, abs=floor)


def test_sensitivities_fd_paper_system(paper_b, paper_devices):
    _check_sensitivities_fd(paper_b, paper_devices, "absolute_power")


def test_sensitivity_signs_paper(paper_b, paper_devices):
    eig = operation_eigensystem(paper_b, paper_devices)
    rep = sensitivities(eig, paper_b, paper_devices)
    assert np.all(rep.wrt_s_b < 0)
    assert np.all(rep.wrt_p_b < 0)
    for (bi, bj), v in rep.wrt_branches.items():
        if bj == "0":
            assert v > 0
        else:
            assert v >= 0


def test_sensitivities_randomized_suite():
    # sign constraints and finite-difference agreement on random networks
    rng = np.random.default_rng(11)
    for _ in range(200):
        _, b, devices = random_system(rng)
        _check_sensitivities_fd(b, devices, "absolute_power")
        eig = operation_eigensystem(b, devices, OperatingPoint.flat(devices))
        rep = sensitivities(eig, b, devices)
        assert np.all(rep.wrt_s_b < 0)
        assert np.all(rep.wrt_p_b < 0)
        assert all(
            v > 0 if bj == "0" else v >= 0 for (bi, bj), v in rep.wrt_branches.items()
        )


def test_capacity_weighting_sensitivities(paper_b, paper_devices):
    eig = capacity_eigensystem(paper_b, paper_devices)
    rep = sensitivities(eig, paper_b, paper_devices, weighting="capacity")
    assert rep.wrt_p_b is None
    s_b = np.array([d.s_b for d in paper_devices])
    h = 1e-6
    for i in range(paper_b.n):
        def m_sb(d, i=i):
            sb = s_b.copy()
            sb[i] += d
            return 1 / sb, paper_b.matrix

        assert rep.wrt_s_b[i] == pytest.approx(_fd_lambda_min(m_sb, h), rel=1e-5)
    # capacity formula: d gSCR / d S_Bi = -gSCR * u_i^2 with u normalised by S_B
    u = eig.right[:, 0]
    assert rep.wrt_s_b == pytest.approx(-eig.lambda_min * (u**2), rel=1e-9)


def test_argmin_stability_under_capacity_scaling(paper_b, paper_devices):
    eig = capacity_eigensystem(paper_b, paper_devices)
    scaled = [DeviceSpec(bus=d.bus, s_b=2.5 * d.s_b, p_b=d.p_b) for d in paper_devices]
    eig2 = capacity_eigensystem(paper_b, scaled)
    assert eig2.eigenvalues == pytest.approx(eig.eigenvalues / 2.5, rel=1e-12)
    p1 = participation(eig, 0).normalized
    p2 = participation(eig2, 0).normalized
    assert p2 == pytest.approx(p1, rel=1e-9)
    rep1 = sensitivities(eig, paper_b, paper_devices, weighting="capacity")
    rep2 = sensitivities(eig2, paper_b, scaled, weighting="capacity")
    assert np.all(np.sign(rep1.wrt_s_b) == np.sign(rep2.wrt_s_b))


def test_first_order_prediction_quadratic_error(paper_b, paper_devices):
    op = OperatingPoint.flat(paper_devices)
    eig = operation_eigensystem(paper_b, paper_devices, op)
    rep = sensitivities(eig, paper_b, paper_devices, op)
    i = 2
    ratios = []
    for delta in (1e-2, 1e-3, 1e-4):
        devs = list(paper_devices)
        devs[i] = DeviceSpec(bus=devs[i].bus, s_b=devs[i].s_b, p_b=devs[i].p_b + delta)
        lam = operation_eigensystem(paper_b, devs, OperatingPoint.flat(devs)).lambda_min
        err = abs(lam - eig.lambda_min - rep.wrt_p_b[i] * delta)
        ratios.append(err / delta**2)
    assert max(ratios) < 10 * eig.lambda_min  # bounded second-order constant


def test_branch_sensitivity_zero_on_symmetric_pair():
    grid = GridSpec(
        buses=("1", "2"),
        branches=(
            Branch("1", "0", 4.0, "susceptance"),
            Branch("2", "0", 4.0, "susceptance"),
            Branch("1", "2", 2.0, "susceptance"),
        ),
    )
    b = build_susceptance(grid)
    devices = [DeviceSpec(bus=s, s_b=1.0, p_b=1.0) for s in ("1", "2")]
    eig = capacity_eigensystem(b, devices)
    rep = sensitivities(eig, b, devices, weighting="capacity")
    assert rep.wrt_branches[("1", "2")] == pytest.approx(0.0, abs=1e-12)


def test_degenerate_lambda_warning():
    b = np.eye(2) * 3.0
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        eig = weighted_eigensystem(b, np.ones(2))
        grid = GridSpec(
            buses=("1", "2"),
            branches=(
                Branch("1", "0", 3.0, "susceptance"),
                Branch("2", "0", 3.0, "susceptance"),
                Branch("1", "2", 1e-12, "susceptance"),
            ),
        )
        bb = build_susceptance(grid)
        devices = [DeviceSpec(bus=s, s_b=1.0, p_b=1.0) for s in ("1", "2")]
        rep = sensitivities(eig, bb, devices, weighting="capacity")
    assert rep.degenerate
    assert any(issubclass(w.category, RuntimeWarning) for w in rec)
