"""Small-signal admittance and power Jacobian of a PLL-synchronised VSC.

The converter is a dual-loop vector controller: an inner current PI loop,
an outer loop that is either a power controller or a dc-link voltage
controller, and a PI-based PLL.  Its terminal behaviour in polar
coordinates is a diagonal admittance (magnitude and angle channels
decouple), which the output-power relation P = U I cos(theta - phi),
Q = U I sin(theta - phi) turns into a 2x2 Jacobian from (d_theta, dU/U) to
(dP, dQ).

Controller transfer functions (s in rad/s):

    H_i   = K_pi  + K_ii / s          current loop
    H_p   = K_pP  + K_iP / s          power outer loop
    H_dc  = K_pdc + K_idc / s         dc-voltage outer loop
    H_pll = (K_ppll + K_ipll / s) / s PLL (PI block behind the angle
                                      integrator)

``l_f`` is the per-unit filter reactance at nominal frequency; the series
term in the loop equations is s * (l_f / omega0).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import OperatingPointError, ValidationError
from .rational import RationalFn, TransferMatrix

PQ = "pq"
DC_VOLTAGE = "dc_voltage"


@dataclass(frozen=True)
class PIGains:
    kp: float
    ki: float

    def tf(self) -> RationalFn:
        """K_p + K_i/s as a rational function."""
        return RationalFn([self.ki, self.kp], [0.0, 1.0])


@dataclass(frozen=True)
class DeviceModel:
    """Control parameters of one converter.

    ``c_dc`` (dc-link capacitance, seconds at u_dc=1) and ``u_dc`` are
    mandatory for dc-voltage control; there are no defaults because the
    closed-loop damping depends directly on their product.
    """

    control_mode: str
    current: PIGains
    pll: PIGains
    l_f: float
    power: PIGains | None = None
    dc_voltage: PIGains | None = None
    c_f: float = 0.0
    c_dc: float | None = None
    u_dc: float | None = None

    def __post_init__(self):
        if self.control_mode not in (PQ, DC_VOLTAGE):
            raise ValidationError(f"unknown control mode {self.control_mode!r}")
        if not self.l_f > 0:
            raise ValidationError("filter reactance l_f must be positive")
        if self.control_mode == PQ and self.power is None:
            raise ValidationError("pq control requires power-loop gains")
        if self.control_mode == DC_VOLTAGE:
            if self.dc_voltage is None:
                raise ValidationError("dc_voltage control requires dc-loop gains")
            if self.c_dc is None or self.u_dc is None:
                raise ValidationError("dc_voltage control requires explicit c_dc and u_dc")
            if not (self.c_dc > 0 and self.u_dc > 0):
                raise ValidationError("c_dc and u_dc must be positive")

    def with_dclink(self, c_dc: float, u_dc: float | None = None) -> "DeviceModel":
        return replace(self, c_dc=c_dc, u_dc=self.u_dc if u_dc is None else u_dc)

    def same_dynamics(self, other: "DeviceModel", tol: float = 1e-12) -> bool:
        """True when both converters have identical per-unit dynamics."""
        if self.control_mode != other.control_mode:
            return False
        def eq(a, b):
            if a is None or b is None:
                return a is b
            return abs(a.kp - b.kp) <= tol and abs(a.ki - b.ki) <= tol
        return (
            eq(self.current, other.current)
            and eq(self.pll, other.pll)
            and eq(self.power, other.power)
            and eq(self.dc_voltage, other.dc_voltage)
            and abs(self.l_f - other.l_f) <= tol
            and (self.c_dc is None) == (other.c_dc is None)
            and (self.c_dc is None or abs(self.c_dc - other.c_dc) <= tol)
            and (self.u_dc is None or abs(self.u_dc - other.u_dc) <= tol)
        )


def vsc_admittance(model: DeviceModel, u: float = 1.0, omega0: float = 2.0 * np.pi * 50.0) -> TransferMatrix:
    """Diagonal polar admittance diag(Y11, Y22) of the converter.

    Maps (dU, U dtheta) to (dI, I dphi).  ``u`` is the terminal voltage at
    the linearisation point (the PLL aligns the d axis with it).
    """
    if not u > 0:
        raise ValidationError("terminal voltage must be positive")
    s = RationalFn.s()
    lf = model.l_f / omega0
    h_i = model.current.tf()
    h_pll = RationalFn([model.pll.ki, model.pll.kp], [0.0, 0.0, 1.0])  # (kp + ki/s)/s
    series = s * lf + h_i
    if model.control_mode == PQ:
        h_p = model.power.tf()
        den = h_p * h_i * u + series
        y11 = -(h_p * h_i) / den
        y22 = (h_p * h_i - s * lf * h_pll) / (den * (1.0 + u * h_pll)) + h_pll / (
            1.0 + u * h_pll
        )
    else:
        h_dc = model.dc_voltage.tf()
        k = model.u_dc * model.c_dc
        y11 = -(h_i * h_dc) / (s * series * k + h_i * h_dc * u)
        y22 = (h_i * h_pll) / (series * (1.0 + u * h_pll))
    y11 = y11.cancelled()
    y22 = y22.cancelled()
    zero = RationalFn.const(0.0)
    return TransferMatrix([[y11, zero], [zero, y22]])


def vsc_jacobian(
    model: DeviceModel,
    p_b: float,
    q_b: float = 0.0,
    u: float = 1.0,
    omega0: float = 2.0 * np.pi * 50.0,
) -> TransferMatrix:
    """Per-unit power Jacobian from (d_theta, dU/U) to (dP, dQ).

    Linearising P = U I cos(theta - phi), Q = U I sin(theta - phi) at unity
    power factor (theta = phi, Q = 0) gives dP = P (dU/U + dI/I) and
    dQ = P (dtheta - dphi); substituting the admittance channels yields

        [[0,                 P_b (1 + U Y11)],
         [P_b (1 - U Y22),   0             ]]

    The diagonal is identically zero in this operating regime.
    """
    if abs(q_b) > 1e-9:
        raise OperatingPointError(
            f"converter Jacobian assumes unity power factor; got q_b={q_b}"
        )
    y = vsc_admittance(model, u=u, omega0=omega0)
    zero = RationalFn.const(0.0)
    g_pu = (1.0 + u * y[0, 0]) * p_b
    g_qth = (1.0 - u * y[1, 1]) * p_b
    return TransferMatrix([[zero, g_pu], [g_qth, zero]])
