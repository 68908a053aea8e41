"""Eigen-analysis of the weighted susceptance matrices.

Everything here works on matrices of the form ``D @ B`` with D a positive
diagonal weight and B the grounded susceptance matrix.  The similarity
``D^{1/2} B D^{1/2}`` makes the spectrum real and positive, and the
biorthogonal left eigenvectors come for free: ``v_i = (D^{-1} u_i)^T``
after the normalisation ``v_i . u_i = 1``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import SingularMatrixError, ValidationError
from .network import DeviceSpec, OperatingPoint, SusceptanceMatrix

#: minimum-eigenvalue separation below which sensitivities are flagged as
#: direction-dependent
DEGENERACY_TOL = 1e-9


@dataclass(frozen=True)
class EigenSystem:
    """Sorted eigen-decomposition of a weighted susceptance matrix D @ B.

    ``right`` holds right eigenvectors as columns, ``left`` left eigenvectors
    as rows, with v_i . u_j = delta_ij and v_i^T parallel to D^{-1} u_i.
    The first right eigenvector is sign-fixed entrywise positive.
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    weights: np.ndarray  # diagonal of D

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    def reconstruct(self) -> np.ndarray:
        """Sum of lambda_i * u_i v_i; equals D @ B up to rounding."""
        return (self.right * self.eigenvalues) @ self.left

    def is_degenerate(self, tol: float = DEGENERACY_TOL) -> bool:
        return self.n > 1 and (self.eigenvalues[1] - self.eigenvalues[0]) < tol


@dataclass(frozen=True)
class ParticipationTable:
    """Participation of each device in one eigen-mode.

    ``raw`` sums to one across devices (v_i u_i with v . u = 1);
    ``normalized`` is scaled so the largest entry is exactly one.
    """

    mode_index: int
    raw: np.ndarray
    normalized: np.ndarray


@dataclass(frozen=True)
class SensitivityReport:
    """First-order sensitivities of the minimum eigenvalue.

    Branch sensitivities are taken with respect to the branch susceptance,
    which perturbs B_ii, B_jj, B_ij, B_ji jointly; grounding entries perturb
    only B_ii.  ``wrt_p_b`` is None for the capacity weighting, where the
    index does not depend on the loading.
    """

    index_value: float
    wrt_s_b: np.ndarray
    wrt_p_b: np.ndarray | None
    wrt_branches: dict[tuple[str, str], float]
    degenerate: bool = False


def weighted_eigensystem(b: SusceptanceMatrix | np.ndarray, weights: np.ndarray) -> EigenSystem:
    """Solve D @ B via the symmetrised problem D^{1/2} B D^{1/2}.

    Eigenvalues come back ascending; eigenvectors are scaled so that
    v_i . u_i = 1 and u_1 is entrywise positive.
    """
    bm = b.matrix if isinstance(b, SusceptanceMatrix) else np.asarray(b, float)
    d = np.asarray(weights, float)
    if d.ndim != 1 or len(d) != bm.shape[0]:
        raise ValidationError("weight vector length does not match matrix size")
    if np.any(d <= 0):
        raise ValidationError("weights must be strictly positive")
    if not np.allclose(bm, bm.T, atol=1e-9 * max(1.0, np.abs(bm).max())):
        raise ValidationError("susceptance matrix must be symmetric")
    sq = np.sqrt(d)
    sym = sq[:, None] * bm * sq[None, :]
    try:
        w, y = linalg.eigh(sym)
    except linalg.LinAlgError as exc:  # pragma: no cover
        raise SingularMatrixError("eigen-decomposition failed") from exc
    if w[0] <= 0:
        raise SingularMatrixError("weighted matrix is not positive definite")
    right = sq[:, None] * y            # u_i = D^{1/2} y_i
    left = (y / sq[:, None]).T         # v_i = y_i^T D^{-1/2}, so v_i.u_j = delta_ij
    # Perron vector sign fix: u_1 entrywise positive
    if right[:, 0].sum() < 0:
        right = right.copy()
        left = left.copy()
        right[:, 0] *= -1.0
        left[0, :] *= -1.0
    return EigenSystem(eigenvalues=w, right=right, left=left, weights=d)


def capacity_eigensystem(b: SusceptanceMatrix, devices) -> EigenSystem:
    """Eigen-system of diag(1/S_B) @ B (the gSCR pathway)."""
    s = np.array([d.s_b for d in devices])
    return weighted_eigensystem(b, 1.0 / s)


def operation_eigensystem(
    b: SusceptanceMatrix, devices, op: OperatingPoint | None = None, weighting: str = "absolute_power"
) -> EigenSystem:
    """Eigen-system of the operating-point-weighted matrix (OgSCR pathway)."""
    if op is None:
        op = OperatingPoint.flat(devices)
    if weighting == "absolute_power":
        p = op.p
    elif weighting == "per_unit_power":
        p = op.p / np.array([d.s_b for d in devices])
    else:
        raise ValidationError(f"unknown weighting {weighting!r}")
    if np.any(p <= 0):
        raise ValidationError("active powers must be positive")
    return weighted_eigensystem(b, op.u / p)


def gscr(eig: EigenSystem) -> float:
    """Generalized short-circuit ratio: smallest eigenvalue of J_eq."""
    return eig.lambda_min


def ogscr(eig: EigenSystem) -> float:
    """Operation gSCR: smallest eigenvalue of J_eqo."""
    return eig.lambda_min


def scr_single(s_b: float, grid_reactance: float) -> float:
    """Classical single-infeed SCR = 1 / (S_B * Z)."""
    if not s_b > 0 or not grid_reactance > 0:
        raise ValidationError("s_b and grid_reactance must be positive")
    return 1.0 / (s_b * grid_reactance)


def participation(eig: EigenSystem, mode_index: int = 0) -> ParticipationTable:
    """Device participation factors v_mn * u_mn for one mode.

    Raw factors sum to one; the normalized copy has its largest entry equal
    to one (the presentation used for ranking strongly involved devices).
    """
    if not 0 <= mode_index < eig.n:
        raise ValidationError(f"mode_index {mode_index} out of range 0..{eig.n - 1}")
    raw = eig.left[mode_index, :] * eig.right[:, mode_index]
    return ParticipationTable(mode_index=mode_index, raw=raw, normalized=raw / raw.max())


def sensitivities(
    eig: EigenSystem,
    b: SusceptanceMatrix,
    devices,
    op: OperatingPoint | None = None,
    weighting: str = "absolute_power",
) -> SensitivityReport:
    """Closed-form sensitivities of the minimum eigenvalue.

    All formulas are v . (dM/dp) . u with the biorthonormal pair of the
    weakest mode:

    * d/dS_Bi:  -(P_bi/U_i) * lambda_1 * u_i^2   (operation weighting)
                -lambda_1 * u_i^2 / normalisation (capacity weighting)
    * d/dP_bi:  -(S_Bi/U_i) * lambda_1 * u_i^2
    * d/db_ij:  (u_i - u_j)^2 for device-device branches, u_i^2 for
                grounding entries -- always nonnegative.

    ``weighting`` may also be "capacity" for the gSCR pathway.
    """
    degenerate = eig.is_degenerate()
    if degenerate:
        warnings.warn(
            "minimum eigenvalue nearly degenerate; sensitivities are direction-dependent",
            RuntimeWarning,
            stacklevel=2,
        )
    u = eig.right[:, 0]
    v = eig.left[0, :]
    lam = eig.lambda_min
    if op is None:
        op = OperatingPoint.flat(devices)
    s_b = np.array([d.s_b for d in devices])
    p_b = op.p / s_b

    # v (e_i e_i^T J) u = v_i * lambda * u_i, so every diagonal-weight
    # derivative reduces to lambda * v_i u_i times the parameter's log-slope.
    vu = v * u
    if weighting == "capacity":
        wrt_s = -lam * vu / s_b
        wrt_p = None
    elif weighting in ("absolute_power", "per_unit_power"):
        wrt_s = -lam * vu / s_b
        wrt_p = -lam * vu / p_b
        if weighting == "per_unit_power":
            wrt_s = np.zeros_like(wrt_s)  # weight diag(U/P_b) has no S_B dependence
    else:
        raise ValidationError(f"unknown weighting {weighting!r}")

    # branch susceptance sensitivities: v D dB u = u^T dB u / (u^T D^{-1} u),
    # and the normalisation v.u = 1 makes the denominator equal to one.
    wrt_branches: dict[tuple[str, str], float] = {}
    g = b.grounding()
    for i in range(b.n):
        if g[i] > 1e-12:
            wrt_branches[(b.buses[i], "0")] = float(v[i] * eig.weights[i] * u[i])
        for j in range(i + 1, b.n):
            if -b.matrix[i, j] > 1e-12:
                diff = (
                    v[i] * eig.weights[i] * (u[i] - u[j])
                    - v[j] * eig.weights[j] * (u[i] - u[j])
                )
                wrt_branches[(b.buses[i], b.buses[j])] = float(diff)
    return SensitivityReport(
        index_value=lam,
        wrt_s_b=wrt_s,
        wrt_p_b=wrt_p,
        wrt_branches=wrt_branches,
        degenerate=degenerate,
    )
