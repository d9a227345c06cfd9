"""3GPP antenna element and uniform planar array patterns.

Angles are in degrees throughout. ``theta`` is the zenith angle (0 points
up, 90 is the horizon) and ``phi`` the azimuth. Functions taking a
:class:`Direction` expect it in the array's local frame (``phi`` measured
from the array boresight); :func:`to_local` converts global angles.

The array lies in the local y-z plane and faces +x. Element ``(p, q)`` sits
at row ``p`` (vertical, spacing ``dz``) and column ``q`` (horizontal,
spacing ``dy``); flattened index is ``p * cols + q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class ElementParams:
    g_max: float
    theta_3db: float
    phi_3db: float
    sla_v: float = 30.0
    a_m: float = 30.0

    def __post_init__(self):
        for name in ("theta_3db", "phi_3db", "sla_v", "a_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


# Table values for gNB and UE elements; ISOTROPIC has no attenuation anywhere.
GNB_ELEMENT = ElementParams(g_max=8.0, theta_3db=65.0, phi_3db=65.0)
UE_ELEMENT = ElementParams(g_max=5.0, theta_3db=90.0, phi_3db=90.0)
ISOTROPIC = ElementParams(g_max=0.0, theta_3db=math.inf, phi_3db=math.inf)


@dataclass(frozen=True)
class Direction:
    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 180.0:
            raise ValueError(f"zenith angle {self.theta} outside [0, 180]")


@dataclass(frozen=True)
class ArrayConfig:
    rows: int
    cols: int
    dy: float = 0.5
    dz: float = 0.5
    element: ElementParams = GNB_ELEMENT
    boresight_azimuth: float = 0.0
    boresight_elevation: float = 90.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"array must be at least 1x1, got {self.rows}x{self.cols}")
        if not (self.dy > 0 and self.dz > 0):
            raise ValueError("element spacing must be positive")
        if not 0.0 <= self.boresight_azimuth < 360.0:
            raise ValueError(f"boresight azimuth {self.boresight_azimuth} outside [0, 360)")

    @property
    def n_elements(self) -> int:
        return self.rows * self.cols

    def pointed(self, azimuth: float) -> "ArrayConfig":
        return replace(self, boresight_azimuth=float(azimuth) % 360.0)


@dataclass(frozen=True)
class SteeringVector:
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex).ravel()
        norm = np.linalg.norm(w)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"steering vector must be unit-norm, got norm {norm}")
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True)
class FieldPattern:
    f_theta: float
    f_phi: float

    @property
    def power(self) -> float:
        return self.f_theta**2 + self.f_phi**2


def wrap_azimuth(phi):
    """Wrap azimuth(s) into [-180, 180)."""
    return (np.asarray(phi, dtype=float) + 180.0) % 360.0 - 180.0


def _check_range(x, lo, hi, what):
    a = np.asarray(x, dtype=float)
    if np.any(a < lo) or np.any(a > hi) or np.any(np.isnan(a)):
        raise ValueError(f"{what} outside [{lo}, {hi}]")
    return a


def _scalar_or_array(a):
    return float(a) if np.ndim(a) == 0 else a


def element_gain_vertical(theta, params: ElementParams):
    """Vertical cut attenuation in dB, in [-sla_v, 0]."""
    t = _check_range(theta, 0.0, 180.0, "zenith angle")
    return _scalar_or_array(-np.minimum(12.0 * ((t - 90.0) / params.theta_3db) ** 2, params.sla_v))


def element_gain_horizontal(phi, params: ElementParams):
    """Horizontal cut attenuation in dB, in [-a_m, 0]."""
    p = _check_range(phi, -180.0, 180.0, "azimuth")
    return _scalar_or_array(-np.minimum(12.0 * (p / params.phi_3db) ** 2, params.a_m))


def element_gain_db(theta, phi, params: ElementParams):
    """Vectorized 3D element gain in dBi; no domain checks, ``phi`` is wrapped."""
    t = np.asarray(theta, dtype=float)
    p = wrap_azimuth(phi)
    vert = np.minimum(12.0 * ((t - 90.0) / params.theta_3db) ** 2, params.sla_v)
    horiz = np.minimum(12.0 * (p / params.phi_3db) ** 2, params.a_m)
    return params.g_max - np.minimum(vert + horiz, params.a_m)


def element_gain(direction: Direction, params: ElementParams) -> float:
    """3D element gain in dBi, bounded by ``[g_max - a_m, g_max]``."""
    a_v = element_gain_vertical(direction.theta, params)
    a_h = element_gain_horizontal(direction.phi, params)
    return params.g_max - min(-(a_v + a_h), params.a_m)


def to_local(cfg: ArrayConfig, theta, phi):
    """Rotate global (zenith, azimuth) angles into the array frame.

    Boresight elevation other than 90 is treated as a mechanical downtilt of
    ``boresight_elevation - 90`` degrees.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if cfg.boresight_elevation == 90.0:
        return theta, wrap_azimuth(phi - cfg.boresight_azimuth)
    th = np.radians(theta)
    ph = np.radians(phi - cfg.boresight_azimuth)
    x, y, z = np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)
    tilt = np.radians(cfg.boresight_elevation - 90.0)
    xl = x * np.cos(tilt) - z * np.sin(tilt)
    zl = x * np.sin(tilt) + z * np.cos(tilt)
    theta_l = np.degrees(np.arccos(np.clip(zl, -1.0, 1.0)))
    phi_l = np.degrees(np.arctan2(y, xl))
    return theta_l, wrap_azimuth(phi_l)


def _phase_factors(cfg: ArrayConfig, theta, phi):
    th = np.radians(np.asarray(theta, dtype=float))
    ph = np.radians(np.asarray(phi, dtype=float))
    psi_y = 2 * np.pi * cfg.dy * np.sin(th) * np.sin(ph)
    psi_z = 2 * np.pi * cfg.dz * np.cos(th)
    return psi_y, psi_z


def manifold(cfg: ArrayConfig, theta, phi) -> np.ndarray:
    """Unit-modulus spatial signatures, shape ``(..., rows*cols)``.

    Angles are local to the array.
    """
    psi_y, psi_z = _phase_factors(cfg, theta, phi)
    q = np.arange(cfg.cols)
    p = np.arange(cfg.rows)
    col = np.exp(1j * psi_y[..., None] * q)
    row = np.exp(1j * psi_z[..., None] * p)
    out = row[..., :, None] * col[..., None, :]
    return out.reshape(out.shape[:-2] + (cfg.n_elements,))


def steering_vector(cfg: ArrayConfig, direction: Direction) -> SteeringVector:
    a = manifold(cfg, direction.theta, direction.phi)
    return SteeringVector(a / math.sqrt(cfg.n_elements))


def _check_weights(cfg: ArrayConfig, weights) -> np.ndarray:
    w = weights.weights if isinstance(weights, SteeringVector) else np.asarray(weights, dtype=complex)
    if w.size != cfg.n_elements:
        raise ValueError(f"weight length {w.size} does not match {cfg.rows}x{cfg.cols} array")
    return w


# Floor for |w^H a|^2 so that exact nulls stay finite in dB.
_LIN_FLOOR = 1e-30


def array_factor_db(cfg: ArrayConfig, weights, theta, phi):
    """Vectorized array factor in dB over local angles."""
    w = _check_weights(cfg, weights)
    a = manifold(cfg, theta, phi) / math.sqrt(cfg.n_elements)
    proj = a @ w.conj()
    return 10 * np.log10(np.maximum(np.abs(proj) ** 2 * cfg.n_elements, _LIN_FLOOR))


def array_factor(cfg: ArrayConfig, weights, direction: Direction) -> float:
    """Array factor in dB; equals ``10 log10(N)`` in the steered direction."""
    return float(array_factor_db(cfg, weights, direction.theta, direction.phi))


def array_radiation_pattern(cfg: ArrayConfig, weights, direction: Direction) -> float:
    return element_gain(direction, cfg.element) + array_factor(cfg, weights, direction)


def field_pattern(cfg: ArrayConfig, weights, direction: Direction, zeta: float = 0.0) -> FieldPattern:
    """Polarization split of the array pattern; the one dB-to-linear step."""
    amp = math.sqrt(10 ** (array_radiation_pattern(cfg, weights, direction) / 10))
    z = math.radians(zeta)
    return FieldPattern(amp * math.cos(z), amp * math.sin(z))


def element_field(params: ElementParams, theta, phi, zeta: float = 0.0) -> np.ndarray:
    """Per-direction element field vectors ``[F_theta, F_phi]``, shape ``(..., 2)``.

    Array gain is left to the spatial signatures and beamforming weights,
    so only the element pattern enters here.
    """
    amp = np.sqrt(10 ** (element_gain_db(theta, phi, params) / 10))
    z = math.radians(zeta)
    return np.stack([amp * math.cos(z), amp * math.sin(z)], axis=-1)


def sector_for_direction(n_sectors: int, azimuth_to_peer: float) -> int:
    """Index of the sector whose boresight (``i * 360 / n``) is nearest."""
    if n_sectors < 1:
        raise ValueError("need at least one sector")
    az = float(azimuth_to_peer) % 360.0
    best, best_dist = 0, math.inf
    for i in range(n_sectors):
        diff = abs(az - i * 360.0 / n_sectors) % 360.0
        dist = min(diff, 360.0 - diff)
        # strict comparison keeps the lower index on ties
        if dist < best_dist - 1e-12:
            best, best_dist = i, dist
    return best


def sectors_for_azimuths(n_sectors: int, azimuths) -> np.ndarray:
    """Vectorized :func:`sector_for_direction`."""
    az = np.asarray(azimuths, dtype=float) % 360.0
    bores = np.arange(n_sectors) * 360.0 / n_sectors
    diff = np.abs(az[..., None] - bores) % 360.0
    dist = np.minimum(diff, 360.0 - diff)
    # round away float noise so exact ties resolve to the lower index
    return np.argmin(np.round(dist, 9), axis=-1)


def pattern_grid(cfg: ArrayConfig, steer: Direction, resolution: float):
    """Array radiation pattern sampled on a (theta, phi) grid.

    Returns ``(theta, phi, gain_db)`` flat arrays covering theta in
    [0, 180] and phi in [-180, 180].
    """
    # dividing 180 keeps both axes on the same step (and implies dividing 360)
    if not resolution > 0 or abs(180.0 / resolution - round(180.0 / resolution)) > 1e-9:
        raise ValueError(f"resolution {resolution} must divide 180")
    n_t = int(round(180.0 / resolution))
    n_p = int(round(360.0 / resolution))
    thetas = np.linspace(0.0, 180.0, n_t + 1)
    phis = np.linspace(-180.0, 180.0, n_p + 1)
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    w = steering_vector(cfg, steer)
    gain = element_gain_db(tt, pp, cfg.element) + array_factor_db(cfg, w, tt, pp)
    return tt.ravel(), pp.ravel(), gain.ravel()
