"""Cluster-based narrowband channel between two planar arrays.

A realization stores ray angles as offsets from the LoS departure and
arrival directions, so it can be re-anchored as the endpoints move without
redrawing the small-scale state. Channel matrices are ``(N_rx, N_tx)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .antenna import (
    ISOTROPIC,
    ArrayConfig,
    Direction,
    FieldPattern,
    SteeringVector,
    element_field,
    manifold,
    to_local,
    wrap_azimuth,
)
from .config import ScenarioProfile


def los_probability(profile: ScenarioProfile, distance_2d):
    d = np.asarray(distance_2d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("2D distance must be positive")
    near = np.minimum(profile.los_d1 / d, 1.0)
    decay = np.exp(-d / profile.los_d2)
    p = near * (1.0 - decay) + decay
    return float(p) if p.ndim == 0 else p


def los_state(profile: ScenarioProfile, distance_2d: float, rng: np.random.Generator) -> bool:
    return bool(rng.random() < los_probability(profile, distance_2d))


def path_loss(profile: ScenarioProfile, los: bool, distance_3d):
    """Path loss in dB. NLoS never drops below the LoS value at the same distance."""
    d = np.asarray(distance_3d, dtype=float)
    if np.any(d < 1.0):
        raise ValueError("3D distance must be at least 1 m")
    f_ghz = profile.carrier_hz / 1e9

    def fit(coef):
        a, b, c = coef
        return a + b * np.log10(d) + c * math.log10(f_ghz)

    pl = fit(profile.pl_los)
    if not los:
        pl = np.maximum(pl, fit(profile.pl_nlos))
    return float(pl) if pl.ndim == 0 else pl


@dataclass(frozen=True)
class Ray:
    gain: complex
    aod: Direction
    aoa: Direction
    delay: float


def _fold(theta, phi):
    """Map zenith angles back into [0, 180], flipping azimuth where they cross a pole."""
    t = np.mod(theta, 360.0)
    over = t > 180.0
    t = np.where(over, 360.0 - t, t)
    p = np.where(over, phi + 180.0, phi)
    return t, wrap_azimuth(p)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    los: bool
    cluster_powers: np.ndarray
    ray_cluster: np.ndarray
    gains: np.ndarray
    delays: np.ndarray
    zod_offset: np.ndarray
    aod_offset: np.ndarray
    zoa_offset: np.ndarray
    aoa_offset: np.ndarray
    aod_los: Direction = Direction(90.0, 0.0)
    aoa_los: Direction = Direction(90.0, 180.0)
    path_loss_db: float = 0.0
    shadowing_db: float = 0.0

    @property
    def n_rays(self) -> int:
        return self.gains.size

    def anchored(self, aod_los: Direction, aoa_los: Direction) -> "ChannelRealization":
        return replace(self, aod_los=aod_los, aoa_los=aoa_los)

    @cached_property
    def departure(self) -> tuple[np.ndarray, np.ndarray]:
        """Global (zenith, azimuth) departure angles of every ray."""
        return _fold(self.aod_los.theta + self.zod_offset, self.aod_los.phi + self.aod_offset)

    @cached_property
    def arrival(self) -> tuple[np.ndarray, np.ndarray]:
        return _fold(self.aoa_los.theta + self.zoa_offset, self.aoa_los.phi + self.aoa_offset)

    @property
    def rays(self) -> list[Ray]:
        zod, aod = self.departure
        zoa, aoa = self.arrival
        return [
            Ray(complex(g), Direction(float(a), float(b)), Direction(float(c), float(e)), float(t))
            for g, a, b, c, e, t in zip(self.gains, zod, aod, zoa, aoa, self.delays)
        ]

    @property
    def clusters(self) -> list[tuple[float, list[Ray]]]:
        rays = self.rays
        return [
            (float(p), [r for r, c in zip(rays, self.ray_cluster) if c == n])
            for n, p in enumerate(self.cluster_powers)
        ]


def generate_realization(
    profile: ScenarioProfile,
    los: bool,
    rng: np.random.Generator,
    aod_los: Direction = Direction(90.0, 0.0),
    aoa_los: Direction = Direction(90.0, 180.0),
) -> ChannelRealization:
    """Draw clusters and rays.

    Cluster delays and powers follow an exponential delay-power profile with
    per-cluster lognormal jitter. Under LoS, cluster 0 is a single
    deterministic ray along the LoS direction carrying ``K/(K+1)`` of the
    power.
    """
    n = profile.n_clusters_los if los else profile.n_clusters_nlos
    m = profile.rays_per_cluster
    ds, r_tau = profile.delay_spread, profile.delay_scaling

    n_scat = n - 1 if los else n
    tau = np.sort(-r_tau * ds * np.log(rng.uniform(size=n_scat)))
    tau = tau - tau[0] if n_scat else tau
    jitter = rng.normal(0.0, profile.cluster_shadow_std, size=n_scat)
    p = np.exp(-tau * (r_tau - 1.0) / (r_tau * ds)) * 10 ** (-jitter / 10)
    if los:
        k = 10 ** (profile.k_factor_db / 10)
        p = p / p.sum() / (k + 1.0) if n_scat else p
        powers = np.concatenate([[1.0 if n_scat == 0 else k / (k + 1.0)], p])
        delays_c = np.concatenate([[0.0], tau])
    else:
        powers = p / p.sum()
        delays_c = tau
    powers = powers / powers.sum()

    # cluster centres around the LoS direction, rows are (zod, aod, zoa, aoa)
    spreads = np.array([profile.cluster_zsd, profile.cluster_asd, profile.cluster_zsa, profile.cluster_asa])
    centres = rng.normal(size=(4, n_scat)) * spreads[:, None]
    if los:
        centres = np.concatenate([np.zeros((4, 1)), centres], axis=1)

    # LoS cluster carries one ray; every scattered cluster carries m rays
    per_cluster = np.full(n, m)
    if los:
        per_cluster[0] = 1
    ray_cluster = np.repeat(np.arange(n), per_cluster)
    n_rays = ray_cluster.size
    scattered = np.ones(n_rays, dtype=bool)
    if los:
        scattered[0] = False

    ray_spreads = np.array([profile.ray_zsd, profile.ray_asd, profile.ray_zsa, profile.ray_asa])
    jitter_rays = rng.normal(size=(4, n_rays)) * ray_spreads[:, None] * scattered
    zod_off, aod_off, zoa_off, aoa_off = wrap_azimuth(centres[:, ray_cluster] + jitter_rays)

    phases = np.where(scattered, rng.uniform(0.0, 2 * np.pi, size=n_rays), 0.0)
    amp = np.sqrt(powers[ray_cluster] / per_cluster[ray_cluster])
    gains = amp * np.exp(1j * phases)

    return ChannelRealization(
        los=los,
        cluster_powers=powers,
        ray_cluster=ray_cluster,
        gains=gains,
        delays=delays_c[ray_cluster],
        zod_offset=zod_off,
        aod_offset=aod_off,
        zoa_offset=zoa_off,
        aoa_offset=aoa_off,
        aod_los=aod_los,
        aoa_los=aoa_los,
    )


def _fields(fields) -> np.ndarray:
    if len(fields) and isinstance(fields[0], FieldPattern):
        return np.array([[f.f_theta, f.f_phi] for f in fields], dtype=float)
    return np.asarray(fields, dtype=float).reshape(-1, 2)


def channel_entry(real: ChannelRealization, tx_field, rx_field, u_t, u_r) -> complex:
    """One element pair's channel coefficient.

    ``tx_field``/``rx_field`` hold one field vector per ray (FieldPattern or
    ``(M, 2)`` array); ``u_t``/``u_r`` the per-ray spatial-signature phase of
    the transmit and receive element.
    """
    ft, fr = _fields(tx_field), _fields(rx_field)
    u_t, u_r = np.asarray(u_t, dtype=complex), np.asarray(u_r, dtype=complex)
    m = real.n_rays
    if not (len(ft) == len(fr) == u_t.size == u_r.size == m):
        raise ValueError(f"expected {m} per-ray values for every factor")
    pol = np.einsum("mi,mi->m", fr, ft)
    return complex(np.sum(pol * real.gains * u_r * u_t.conj()))


def ray_fields(real: ChannelRealization, tx_cfg: ArrayConfig, rx_cfg: ArrayConfig,
               tx_zeta: float = 0.0, rx_zeta: float = 0.0, isotropic: bool = False):
    """Per-ray element fields and spatial signatures for both ends.

    Returns ``(F_t, F_r, A_t, A_r)`` with shapes ``(M, 2)`` and ``(M, N)``.
    """
    zod, aod = real.departure
    zoa, aoa = real.arrival
    t_th, t_ph = to_local(tx_cfg, zod, aod)
    r_th, r_ph = to_local(rx_cfg, zoa, aoa)
    tx_el = ISOTROPIC if isotropic else tx_cfg.element
    rx_el = ISOTROPIC if isotropic else rx_cfg.element
    f_t = element_field(tx_el, t_th, t_ph, tx_zeta)
    f_r = element_field(rx_el, r_th, r_ph, rx_zeta)
    return f_t, f_r, manifold(tx_cfg, t_th, t_ph), manifold(rx_cfg, r_th, r_ph)


def channel_matrix(real: ChannelRealization, tx_cfg: ArrayConfig, rx_cfg: ArrayConfig,
                   tx_zeta: float = 0.0, rx_zeta: float = 0.0, isotropic: bool = False) -> np.ndarray:
    """Assemble the full ``(N_rx, N_tx)`` matrix in one contraction over rays."""
    f_t, f_r, a_t, a_r = ray_fields(real, tx_cfg, rx_cfg, tx_zeta, rx_zeta, isotropic)
    c = real.gains * np.einsum("mi,mi->m", f_r, f_t)
    return a_r.T @ (c[:, None] * a_t.conj())


def _weights(w) -> np.ndarray:
    return w.weights if isinstance(w, SteeringVector) else np.asarray(w, dtype=complex)


def beamforming_gain_linear(h: np.ndarray, tx_weights, rx_weights) -> float:
    wt, wr = _weights(tx_weights), _weights(rx_weights)
    if h.shape != (wr.size, wt.size):
        raise ValueError(f"channel is {h.shape}, weights are rx={wr.size}, tx={wt.size}")
    return float(abs(wr.conj() @ h @ wt) ** 2)


def beamformed_gain(real: ChannelRealization, tx_cfg: ArrayConfig, rx_cfg: ArrayConfig,
                    tx_weights, rx_weights, tx_zeta: float = 0.0, rx_zeta: float = 0.0,
                    isotropic: bool = False) -> float:
    """``10 log10 |w_r^H H w_t|^2`` in dB, element patterns included via the fields."""
    h = channel_matrix(real, tx_cfg, rx_cfg, tx_zeta, rx_zeta, isotropic)
    g = beamforming_gain_linear(h, tx_weights, rx_weights)
    return 10 * math.log10(max(g, 1e-300))


def dominant_singular_pair(h: np.ndarray):
    """Dominant singular vectors of ``h``: ``(tx_weights, rx_weights, sigma_max**2)``."""
    h = np.asarray(h, dtype=complex)
    if not np.any(np.abs(h) > 0) or not np.all(np.isfinite(h)):
        raise ValueError("channel matrix is degenerate")
    u, s, vh = np.linalg.svd(h)
    return SteeringVector(vh[0].conj()), SteeringVector(u[:, 0]), float(s[0] ** 2)


def optimal_beamforming(real: ChannelRealization, tx_cfg: ArrayConfig, rx_cfg: ArrayConfig):
    """Eigen-beamforming pair for the isotropic-element channel."""
    h = channel_matrix(real, tx_cfg, rx_cfg, isotropic=True)
    tx_w, rx_w, _ = dominant_singular_pair(h)
    return tx_w, rx_w


@dataclass(frozen=True)
class LinkBudget:
    beamformed_gain_db: float
    rx_power_dbm: float
    serving: bool = False


def link_budget(tx_power_dbm: float, gain_db: float, path_loss_db: float,
                shadowing_db: float, serving: bool = False) -> LinkBudget:
    return LinkBudget(gain_db, tx_power_dbm + gain_db - path_loss_db - shadowing_db, serving)


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, *keys)``."""
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))
