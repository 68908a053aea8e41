"""Rational functions of the Laplace variable and matrix polynomials.

Coefficients are stored ascending (numpy.polynomial convention) with real
entries.  Denominators are kept as a multiset of monic polynomial factors:
sums then use the least common multiple of the factor multisets instead of
the blind product, and cancellation is polynomial division by one factor at
a time with a remainder check.  That keeps the characteristic determinants
at their minimal degree without any root matching, which matters because
the integrator factors (s) and the network resonance (s^2 + w0^2) occur
with multiplicity.

Mode extraction goes through a block-companion linearisation of the
denominator-cleared matrix polynomial, followed by a Newton polish on
det(A(s)) and removal of the spurious roots injected by clearing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as npp
from scipy import linalg

from .errors import SingularMatrixError, ValidationError

#: relative remainder threshold for cancelling a denominator factor
CANCEL_RTOL = 1e-8
#: relative tolerance for matching a computed mode against a cleared
#: denominator root (spurious-root candidate detection)
SPURIOUS_RTOL = 1e-6
#: smallest singular value above which a candidate spurious root is removed
SPURIOUS_SIGMA = 1e-6


def ptrim(c) -> np.ndarray:
    """Trim exactly-zero leading coefficients.

    Only bit-exact zeros are dropped: the polynomials here have genuine
    coefficients spanning many orders of magnitude (roots from below 1 to
    thousands of rad/s), so any relative threshold would destroy them.
    Structural cancellations in the assembly are float-exact.
    """
    c = np.atleast_1d(np.asarray(c, dtype=float))
    keep = len(c)
    while keep > 1 and c[keep - 1] == 0.0:
        keep -= 1
    return c[:keep].copy()


def padd(a, b) -> np.ndarray:
    return ptrim(npp.polyadd(np.atleast_1d(a), np.atleast_1d(b)))


def pmul(a, b) -> np.ndarray:
    return ptrim(npp.polymul(np.atleast_1d(a), np.atleast_1d(b)))


def pval(c, s):
    return npp.polyval(s, np.atleast_1d(c))


def proots(c) -> np.ndarray:
    c = ptrim(c)
    if len(c) == 1:
        return np.array([], dtype=complex)
    return npp.polyroots(c)


def pdiv(a, b) -> tuple[np.ndarray, np.ndarray]:
    q, r = npp.polydiv(np.atleast_1d(a), np.atleast_1d(b))
    return ptrim(q), ptrim(r)


def _prod(factors: Sequence[np.ndarray]) -> np.ndarray:
    out = np.array([1.0])
    for f in factors:
        out = pmul(out, f)
    return out


def _factor_eq(a: np.ndarray, b: np.ndarray) -> bool:
    return len(a) == len(b) and np.allclose(a, b, rtol=1e-12, atol=0.0)


def _lcm_factors(
    fa: tuple[np.ndarray, ...], fb: tuple[np.ndarray, ...]
) -> tuple[tuple[np.ndarray, ...], tuple[np.ndarray, ...], tuple[np.ndarray, ...]]:
    """LCM of two factor multisets.

    Returns (lcm, complement_a, complement_b) so that
    lcm = fa * complement_a = fb * complement_b as multisets.
    """
    used = [False] * len(fb)
    comp_b = []  # factors of fa missing from fb
    for f in fa:
        for j, g in enumerate(fb):
            if not used[j] and _factor_eq(f, g):
                used[j] = True
                break
        else:
            comp_b.append(f)
    comp_a = tuple(g for j, g in enumerate(fb) if not used[j])
    lcm = tuple(fa) + comp_a
    return lcm, comp_a, tuple(comp_b)


class RationalFn:
    """Ratio of real-coefficient polynomials in s with a factored denominator."""

    __slots__ = ("num", "factors")

    def __init__(self, num, den=None, factors: Sequence[np.ndarray] | None = None):
        self.num = ptrim(num)
        fs: list[np.ndarray] = []
        if den is not None:
            d = ptrim(den)
            if len(d) == 1:
                if d[0] == 0.0:
                    raise ValidationError("denominator is identically zero")
                self.num = self.num / d[0]
            else:
                lead = d[-1]
                self.num = self.num / lead
                fs.append(d / lead)
        if factors is not None:
            for f in factors:
                f = ptrim(f)
                if len(f) == 1:
                    if f[0] == 0.0:
                        raise ValidationError("denominator factor is identically zero")
                    self.num = self.num / f[0]
                else:
                    lead = f[-1]
                    self.num = self.num / lead
                    fs.append(f / lead)
        if self.num_degree == 0 and self.num[0] == 0.0:
            fs = []  # normalise the zero function
        self.factors = tuple(fs)

    # -- constructors -------------------------------------------------
    @classmethod
    def const(cls, value: float) -> "RationalFn":
        return cls([float(value)])

    @classmethod
    def s(cls) -> "RationalFn":
        return cls([0.0, 1.0])

    @classmethod
    def _make(cls, num: np.ndarray, factors: tuple[np.ndarray, ...]) -> "RationalFn":
        out = cls.__new__(cls)
        out.num = ptrim(num)
        out.factors = () if (len(out.num) == 1 and out.num[0] == 0.0) else factors
        return out

    # -- properties ----------------------------------------------------
    @property
    def den(self) -> np.ndarray:
        return _prod(self.factors)

    @property
    def num_degree(self) -> int:
        return len(self.num) - 1

    @property
    def den_degree(self) -> int:
        return sum(len(f) - 1 for f in self.factors)

    def is_zero(self) -> bool:
        return len(self.num) == 1 and self.num[0] == 0.0

    def is_constant(self) -> bool:
        return self.num_degree == 0 and not self.factors

    # -- ring operations ------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, RationalFn):
            return other
        if np.isscalar(other):
            return RationalFn.const(float(other))
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        lcm, comp_a, comp_b = _lcm_factors(self.factors, o.factors)
        num = padd(pmul(self.num, _prod(comp_a)), pmul(o.num, _prod(comp_b)))
        return RationalFn._make(num, lcm)

    __radd__ = __add__

    def __neg__(self):
        return RationalFn._make(-self.num, self.factors)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return RationalFn._make(pmul(self.num, o.num), self.factors + o.factors)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o.is_zero():
            raise ZeroDivisionError("division by the zero rational function")
        num = pmul(self.num, _prod(o.factors))
        if o.num_degree == 0:
            return RationalFn._make(num / o.num[0], self.factors)
        lead = o.num[-1]
        return RationalFn._make(num / lead, self.factors + (o.num / lead,))

    def __rtruediv__(self, other):
        return RationalFn.const(float(other)) / self

    def __call__(self, s):
        den = pval(self.den, s)
        return pval(self.num, s) / den

    def __repr__(self):
        return f"RationalFn(num={self.num.tolist()}, den={self.den.tolist()})"

    # -- structure ------------------------------------------------------
    def poles(self) -> np.ndarray:
        """Denominator roots, factor by factor (exact for multiplicities)."""
        if not self.factors:
            return np.array([], dtype=complex)
        return np.concatenate([proots(f) for f in self.factors])

    def zeros(self) -> np.ndarray:
        return proots(self.num)

    def cancelled(self, rtol: float = CANCEL_RTOL) -> "RationalFn":
        """Divide out denominator factors that divide the numerator."""
        num = self.num
        remaining = list(self.factors)
        changed = True
        while changed and remaining:
            changed = False
            for j, f in enumerate(remaining):
                if len(num) <= len(f) - 1:
                    continue
                q, r = pdiv(num, f)
                if np.abs(r).max() <= rtol * max(1.0, np.abs(num).max()):
                    num = q
                    remaining.pop(j)
                    changed = True
                    break
        return RationalFn._make(num, tuple(remaining))

    def approx_equal(self, other: "RationalFn", tol: float = 1e-9) -> bool:
        """Cross-multiplied equality: num*other.den == other.num*den."""
        lhs = pmul(self.num, other.den)
        rhs = pmul(other.num, self.den)
        diff = npp.polysub(lhs, rhs)
        scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300)
        return bool(np.abs(diff).max() <= tol * scale)


def alpha_beta(omega0: float) -> tuple[RationalFn, RationalFn]:
    """Network frequency-dressing pair.

    alpha = 1/((s/w0)^2 + 1), beta = (s/w0)/((s/w0)^2 + 1); they satisfy
    alpha^2 + beta^2 = alpha as a rational identity and alpha(0)=1, beta(0)=0.
    """
    den = [omega0**2, 0.0, 1.0]
    return RationalFn([omega0**2], den), RationalFn([0.0, omega0], den)


class TransferMatrix:
    """Dense matrix with RationalFn entries."""

    def __init__(self, entries):
        if isinstance(entries, TransferMatrix):
            entries = entries.entries
        arr = np.empty((len(entries), len(entries[0])), dtype=object)
        for i, row in enumerate(entries):
            if len(row) != arr.shape[1]:
                raise ValidationError("ragged transfer matrix")
            for j, e in enumerate(row):
                arr[i, j] = e if isinstance(e, RationalFn) else RationalFn.const(float(e))
        self.entries = arr

    @classmethod
    def zeros(cls, rows: int, cols: int | None = None) -> "TransferMatrix":
        cols = rows if cols is None else cols
        return cls([[RationalFn.const(0.0) for _ in range(cols)] for _ in range(rows)])

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def __getitem__(self, key) -> RationalFn:
        return self.entries[key]

    def __setitem__(self, key, value):
        self.entries[key] = value if isinstance(value, RationalFn) else RationalFn.const(float(value))

    def __add__(self, other: "TransferMatrix") -> "TransferMatrix":
        if self.shape != other.shape:
            raise ValidationError("shape mismatch")
        out = TransferMatrix.zeros(*self.shape)
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                out[i, j] = self[i, j] + other[i, j]
        return out

    def __sub__(self, other: "TransferMatrix") -> "TransferMatrix":
        if self.shape != other.shape:
            raise ValidationError("shape mismatch")
        out = TransferMatrix.zeros(*self.shape)
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                out[i, j] = self[i, j] - other[i, j]
        return out

    def __call__(self, s) -> np.ndarray:
        out = np.empty(self.shape, dtype=complex)
        for i in range(self.shape[0]):
            for j in range(self.shape[1]):
                out[i, j] = self[i, j](s)
        return out

    def fro_norm(self, s) -> float:
        return float(np.linalg.norm(self(s), "fro"))

    def det2(self) -> RationalFn:
        """Determinant of a 2x2 transfer matrix."""
        if self.shape != (2, 2):
            raise ValidationError("det2 requires a 2x2 matrix")
        return self[0, 0] * self[1, 1] - self[0, 1] * self[1, 0]


@dataclass
class MatrixPolynomial:
    """Denominator-cleared matrix polynomial sum(A_k s^k).

    ``cleared_roots`` are the roots of the per-row clearing factors; any
    determinant root coinciding with one of them is a spurious-mode
    candidate.  ``source`` retains the original rational matrix so the
    candidate can be confirmed by a smallest-singular-value test.
    """

    coeffs: list[np.ndarray]
    cleared_roots: np.ndarray = field(default_factory=lambda: np.array([], dtype=complex))
    source: TransferMatrix | None = None

    def __post_init__(self):
        # only exactly-zero leading blocks are dropped; genuinely small
        # leading coefficients carry the fast modes
        while len(self.coeffs) > 1 and np.abs(self.coeffs[-1]).max() == 0.0:
            self.coeffs = self.coeffs[:-1]

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def size(self) -> int:
        return self.coeffs[0].shape[0]

    def __call__(self, s) -> np.ndarray:
        out = np.zeros(self.coeffs[0].shape, dtype=complex)
        p = 1.0 + 0.0j
        for a in self.coeffs:
            out = out + a * p
            p *= s
        return out

    def derivative(self, s) -> np.ndarray:
        out = np.zeros(self.coeffs[0].shape, dtype=complex)
        for k in range(1, len(self.coeffs)):
            out = out + k * self.coeffs[k] * s ** (k - 1)
        return out

    @classmethod
    def from_transfer_matrix(cls, tm: TransferMatrix) -> "MatrixPolynomial":
        """Clear each row by the LCM of its entries' denominator factors."""
        rows, cols = tm.shape
        coeff_map: dict[int, np.ndarray] = {}
        cleared: list[complex] = []
        for i in range(rows):
            row_factors: tuple[np.ndarray, ...] = ()
            for j in range(cols):
                row_factors, _, _ = _lcm_factors(row_factors, tm[i, j].factors)
            for f in row_factors:
                cleared.extend(proots(f))
            for j in range(cols):
                e = tm[i, j]
                if e.is_zero():
                    continue
                _, comp_entry, _ = _lcm_factors(e.factors, row_factors)
                entry = pmul(e.num, _prod(comp_entry))
                for k, c in enumerate(entry):
                    coeff_map.setdefault(k, np.zeros((rows, cols)))[i, j] += c
        deg = max(coeff_map) if coeff_map else 0
        coeffs = [coeff_map.get(k, np.zeros((rows, cols))) for k in range(deg + 1)]
        return cls(coeffs=coeffs, cleared_roots=np.array(cleared, dtype=complex), source=tm)


@dataclass(frozen=True)
class Mode:
    """One closed-loop eigenvalue with damping ratio and frequency."""

    s: complex
    provenance: str = "full"

    @property
    def zeta(self) -> float:
        mag = abs(self.s)
        return -self.s.real / mag if mag > 0 else 0.0

    @property
    def freq_hz(self) -> float:
        return abs(self.s.imag) / (2.0 * np.pi)

    @property
    def oscillatory(self) -> bool:
        return abs(self.s.imag) > 1.0


@dataclass
class ModeSet:
    """Collection of closed-loop modes, conjugate-symmetric, sorted by
    (|Im s| ascending, Re descending) for deterministic output."""

    modes: list[Mode]
    removed_spurious: np.ndarray = field(default_factory=lambda: np.array([], dtype=complex))

    def __post_init__(self):
        self.modes = sorted(self.modes, key=lambda m: (abs(m.s.imag), -m.s.real, m.s.imag))

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    @property
    def values(self) -> np.ndarray:
        return np.array([m.s for m in self.modes], dtype=complex)

    def max_real(self) -> float:
        return max((m.s.real for m in self.modes), default=-np.inf)

    def weakest_oscillatory(self, im_min: float = 1.0) -> Mode | None:
        osc = [m for m in self.modes if abs(m.s.imag) > im_min]
        # conjugate pairs tie on the real part; report the upper-half member
        return max(osc, key=lambda m: (m.s.real, m.s.imag)) if osc else None

    def stable(self) -> bool:
        return self.max_real() < 0.0


def _conjugate_pair(values: np.ndarray) -> np.ndarray:
    """Symmetrise a spectrum of a real problem under conjugation."""
    vals = list(values)
    out: list[complex] = []
    used = [False] * len(vals)
    for i, z in enumerate(vals):
        if used[i]:
            continue
        used[i] = True
        if abs(z.imag) <= 1e-9 * max(1.0, abs(z)):
            out.append(complex(z.real, 0.0))
            continue
        best, bd = None, np.inf
        for j in range(i + 1, len(vals)):
            if used[j]:
                continue
            d = abs(vals[j] - z.conjugate())
            if d < bd:
                best, bd = j, d
        if best is not None and bd <= 1e-6 * max(1.0, abs(z)):
            used[best] = True
            zz = 0.5 * (z + vals[best].conjugate())
            out.extend([zz, zz.conjugate()])
        else:
            out.append(z)
    return np.array(out, dtype=complex)


def poly_eigs(
    mp: MatrixPolynomial,
    scale: float | None = None,
    provenance: str = "full",
    polish: bool = True,
    keep_spurious: bool = False,
) -> ModeSet:
    """Modes of det(sum A_k s^k) = 0 via block-companion linearisation.

    Infinite eigenvalues are discarded.  Roots coinciding with recorded
    cleared-denominator roots (within SPURIOUS_RTOL relative) are removed
    when the smallest singular value of the source rational matrix there
    exceeds SPURIOUS_SIGMA, i.e. when the matrix is manifestly nonsingular
    and the root is an artifact of clearing.
    """
    a = mp.coeffs
    d = mp.degree
    n = mp.size
    if d == 0:
        return ModeSet(modes=[])
    if scale is None:
        lead = np.linalg.norm(a[-1])
        tail = np.linalg.norm(a[0])
        scale = (tail / lead) ** (1.0 / d) if lead > 0 and tail > 0 else 1.0
        scale = float(np.clip(scale, 1e-3, 1e9))
    asc = [a[k] * scale**k for k in range(d + 1)]
    lead = asc[-1]
    finite: np.ndarray
    if np.linalg.cond(lead) < 1e10:
        inv = np.linalg.inv(lead)
        comp = np.zeros((n * d, n * d))
        if d > 1:
            comp[: n * (d - 1), n:] = np.eye(n * (d - 1))
        for k in range(d):
            comp[-n:, k * n : (k + 1) * n] = -inv @ asc[k]
        finite = np.linalg.eigvals(comp)
    else:
        ee = np.eye(n * d)
        ee[-n:, -n:] = lead
        ff = np.zeros((n * d, n * d))
        if d > 1:
            ff[: n * (d - 1), n:] = np.eye(n * (d - 1))
        for k in range(d):
            ff[-n:, k * n : (k + 1) * n] = -asc[k]
        vals = linalg.eig(ff, ee, right=False)
        finite = vals[np.isfinite(vals)]
        finite = finite[np.abs(finite) < 1e12]
    roots = finite * scale
    if polish:
        roots = np.array([_newton_polish(mp, z) for z in roots])
    roots = _conjugate_pair(roots)

    kept: list[Mode] = []
    removed: list[complex] = []
    cr = mp.cleared_roots
    for z in roots:
        if not keep_spurious and len(cr) and np.min(np.abs(cr - z)) <= SPURIOUS_RTOL * max(1.0, abs(z)):
            if _nonsingular_at(mp, z):
                removed.append(z)
                continue
        kept.append(Mode(s=complex(z), provenance=provenance))
    return ModeSet(modes=kept, removed_spurious=np.array(removed, dtype=complex))


def _newton_polish(mp: MatrixPolynomial, z: complex, max_iter: int = 30) -> complex:
    """Newton iteration on det(A(s)) using d/ds log det = tr(A^-1 A')."""
    for _ in range(max_iter):
        m = mp(z)
        try:
            lu, piv = linalg.lu_factor(m)
        except (linalg.LinAlgError, ValueError):
            return z
        if not np.all(np.isfinite(lu)):
            return z
        with np.errstate(all="ignore"):
            tr = np.trace(linalg.lu_solve((lu, piv), mp.derivative(z)))
        if not np.isfinite(tr) or tr == 0:
            return z
        dz = 1.0 / tr
        if abs(dz) > 0.1 * max(1.0, abs(z)):
            return z  # step too large: starting point was not near a root
        z = z - dz
        if abs(dz) <= 1e-13 * max(1.0, abs(z)):
            break
    return z


def _nonsingular_at(mp: MatrixPolynomial, z: complex) -> bool:
    """Smallest-singular-value confirmation for spurious-root removal."""
    if mp.source is None:
        return True
    with np.errstate(all="ignore"):
        m = mp.source(z)
    if not np.all(np.isfinite(m)):
        return True  # entry pole at z: certainly not a system mode
    try:
        smin = np.linalg.svd(m, compute_uv=False)[-1]
    except np.linalg.LinAlgError:
        return True
    return bool(smin > SPURIOUS_SIGMA)


def scalar_modes(
    num: np.ndarray,
    den_roots: np.ndarray,
    rational: Callable[[complex], complex] | None = None,
    provenance: str = "svis",
) -> ModeSet:
    """Modes of a scalar characteristic polynomial with spurious filtering.

    ``den_roots`` are the poles of the rational determinant before clearing;
    numerator roots matching them are removed unless the rational function
    itself (when given) is small there.
    """
    num = ptrim(num)
    if len(num) <= 1:
        raise SingularMatrixError("characteristic polynomial is constant")
    roots = _conjugate_pair(proots(num))
    kept: list[Mode] = []
    removed: list[complex] = []
    den_roots = np.asarray(den_roots, dtype=complex)
    for z in roots:
        if len(den_roots) and np.min(np.abs(den_roots - z)) <= SPURIOUS_RTOL * max(1.0, abs(z)):
            with np.errstate(all="ignore"):
                val = rational(z) if rational is not None else np.inf
            if not np.isfinite(val) or abs(val) > SPURIOUS_SIGMA:
                removed.append(z)
                continue
        kept.append(Mode(s=complex(z), provenance=provenance))
    return ModeSet(modes=kept, removed_spurious=np.array(removed, dtype=complex))
