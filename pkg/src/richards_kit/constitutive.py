"""Van Genuchten constitutive relations and their analytic derivatives.

Closed-form saturation s(p) and hydraulic conductivity K(p) as functions
of pressure head, in the rational-power form

    s(p) = alpha * (s_s - s_r) / (alpha + |p|^beta) + s_r
    K(p) = k_s * a / (a + |p|^gamma)

together with ds/dp and dK/dp.  All functions accept scalars or numpy
arrays and are pure; a parameter set is immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike


@dataclass(frozen=True)
class VanGenuchtenParams:
    """Constitutive and medium constants.

    Args:
        alpha: Saturation fitting parameter (pressure^beta units).
        beta: Saturation exponent, > 1.
        gamma: Conductivity exponent, > 1.
        a: Conductivity fitting parameter (pressure^gamma units).
        s_s: Saturated moisture content.
        s_r: Residual moisture content.
        k_s: Saturated hydraulic conductivity (length/time).
        rho: Fluid density.
        phi: Porosity.
        clamp_saturated: When True, p >= 0 returns the saturated values
            (s_s, k_s) with zero derivatives instead of evaluating the
            even-in-|p| formulas.
    """

    alpha: float
    beta: float
    gamma: float
    a: float
    s_s: float
    s_r: float
    k_s: float
    rho: float = 1.0
    phi: float = 1.0
    clamp_saturated: bool = False

    def __post_init__(self) -> None:
        if not (self.alpha > 0 and self.a > 0):
            raise ValueError("alpha and a must be positive")
        if not (self.beta > 1 and self.gamma > 1):
            raise ValueError("beta and gamma must exceed 1")
        if not self.k_s > 0:
            raise ValueError("k_s must be positive")
        if not (0 <= self.s_r < self.s_s <= 1):
            raise ValueError("moisture contents must satisfy 0 <= s_r < s_s <= 1")
        if not (self.rho > 0 and self.phi > 0):
            raise ValueError("rho and phi must be positive")

    @property
    def rho_phi(self) -> float:
        """Product rho * phi multiplying the storage term."""
        return self.rho * self.phi


def _check_finite(p: np.ndarray) -> None:
    if not np.all(np.isfinite(p)):
        raise ValueError("pressure head must be finite")


def saturation(p: ArrayLike, params: VanGenuchtenParams) -> np.ndarray:
    """Moisture content s(p) = alpha (s_s - s_r) / (alpha + |p|^beta) + s_r."""
    p = np.asarray(p, dtype=float)
    _check_finite(p)
    pow_b = np.abs(p) ** params.beta
    s = params.alpha * (params.s_s - params.s_r) / (params.alpha + pow_b) + params.s_r
    if params.clamp_saturated:
        s = np.where(p >= 0.0, params.s_s, s)
    return s


def conductivity(p: ArrayLike, params: VanGenuchtenParams) -> np.ndarray:
    """Hydraulic conductivity K(p) = k_s a / (a + |p|^gamma)."""
    p = np.asarray(p, dtype=float)
    _check_finite(p)
    pow_g = np.abs(p) ** params.gamma
    k = params.k_s * params.a / (params.a + pow_g)
    if params.clamp_saturated:
        k = np.where(p >= 0.0, params.k_s, k)
    return k


def d_saturation(p: ArrayLike, params: VanGenuchtenParams) -> np.ndarray:
    """Derivative ds/dp.

    s'(p) = -alpha beta |p|^(beta-1) sgn(p) (s_s - s_r) / (alpha + |p|^beta)^2,
    with s'(0) = 0 by continuous extension (beta > 1).
    """
    p = np.asarray(p, dtype=float)
    _check_finite(p)
    ab = np.abs(p)
    pow_bm1 = ab ** (params.beta - 1.0)
    denom = (params.alpha + ab * pow_bm1) ** 2
    ds = (
        -params.alpha
        * params.beta
        * pow_bm1
        * np.sign(p)
        * (params.s_s - params.s_r)
        / denom
    )
    if params.clamp_saturated:
        ds = np.where(p >= 0.0, 0.0, ds)
    return ds


def d_conductivity(p: ArrayLike, params: VanGenuchtenParams) -> np.ndarray:
    """Derivative dK/dp.

    K'(p) = -a gamma k_s |p|^(gamma-1) sgn(p) / (a + |p|^gamma)^2,
    with K'(0) = 0 by continuous extension (gamma > 1).
    """
    p = np.asarray(p, dtype=float)
    _check_finite(p)
    ab = np.abs(p)
    pow_gm1 = ab ** (params.gamma - 1.0)
    denom = (params.a + ab * pow_gm1) ** 2
    dk = -params.a * params.gamma * params.k_s * pow_gm1 * np.sign(p) / denom
    if params.clamp_saturated:
        dk = np.where(p >= 0.0, 0.0, dk)
    return dk


def params_from_mapping(fields: dict) -> VanGenuchtenParams:
    """Build a parameter set from config-file fields.

    Required keys: alpha, beta, gamma, a, s_s, s_r, k_s, rho, phi.
    Optional: clamp_saturated.
    """
    required = ("alpha", "beta", "gamma", "a", "s_s", "s_r", "k_s", "rho", "phi")
    missing = [k for k in required if k not in fields]
    if missing:
        raise KeyError(f"missing constitutive parameter(s): {', '.join(missing)}")
    kwargs = {k: float(fields[k]) for k in required}
    if "clamp_saturated" in fields:
        kwargs["clamp_saturated"] = bool(fields["clamp_saturated"])
    return VanGenuchtenParams(**kwargs)


# Haverkamp sand column, the classic 1D infiltration benchmark
# (pressure head in cm, time in s).
HAVERKAMP_PARAMS = VanGenuchtenParams(
    alpha=1.611e6,
    beta=3.96,
    gamma=4.74,
    a=1.175e6,
    s_s=0.287,
    s_r=0.075,
    k_s=0.00944,
    rho=1.0,
    phi=1.0,
)
