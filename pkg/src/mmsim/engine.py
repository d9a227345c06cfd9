"""Time-stepped evaluation loop: link states, SINR, association, throughput."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._kernels import los_amplitudes
from .antenna import Direction, sectors_for_azimuths
from .channel import (
    ChannelRealization,
    channel_matrix,
    dominant_singular_pair,
    generate_realization,
    los_state,
    path_loss,
    stream,
)
from .config import SimConfig
from .scenario import OUTAGE, Deployment, associate, build_deployment, step_mobility

# stream tags for independent random sub-streams
_DEPLOY, _MOBILITY, _SMALL_SCALE, _LOS, _SHADOW = range(5)

THERMAL_NOISE_DBM_HZ = -174.0


def noise_dbm(cfg: SimConfig) -> float:
    return THERMAL_NOISE_DBM_HZ + 10 * math.log10(cfg.bandwidth_hz) + cfg.noise_figure_db


@dataclass
class Geometry:
    """Pairwise gNB-to-UE geometry, every array shaped ``(n_gnb, n_ue)``."""

    d2: np.ndarray
    d3: np.ndarray
    az: np.ndarray  # departure azimuth at the gNB
    zod: np.ndarray
    aoa: np.ndarray  # arrival azimuth at the UE
    zoa: np.ndarray

    @classmethod
    def of(cls, dep: Deployment) -> "Geometry":
        g = np.array([n.position for n in dep.gnbs], dtype=float)
        u = np.array([n.position for n in dep.ues], dtype=float).reshape(-1, 3)
        delta = u[None, :, :] - g[:, None, :]
        d2 = np.hypot(delta[..., 0], delta[..., 1])
        d3 = np.linalg.norm(delta, axis=-1)
        az = np.degrees(np.arctan2(delta[..., 1], delta[..., 0])) % 360.0
        zod = np.degrees(np.arccos(np.clip(delta[..., 2] / d3, -1.0, 1.0)))
        return cls(d2, d3, az, zod, (az + 180.0) % 360.0, 180.0 - zod)


@dataclass
class SinrTable:
    """Per (UE, candidate gNB) quantities, arrays shaped ``(n_ue, n_gnb)``."""

    sinr_db: np.ndarray
    signal_dbm: np.ndarray
    interference_dbm: np.ndarray
    gain_db: np.ndarray
    noise_dbm: float


def _link_powers_mw(dep: Deployment, channels, geo: Geometry) -> np.ndarray:
    n_g, n_u = geo.d2.shape
    out = np.zeros((n_g, n_u))
    for g, gnb in enumerate(dep.gnbs):
        if gnb.tx_power == -math.inf:
            continue
        for u in range(n_u):
            real = channels[g, u]
            out[g, u] = 10 ** ((gnb.tx_power - real.path_loss_db - real.shadowing_db) / 10)
    return out


def _element_vec(el) -> np.ndarray:
    return np.array([el.g_max, el.theta_3db, el.phi_3db, el.sla_v, el.a_m])


def _array_vec(arr) -> np.ndarray:
    return np.array([arr.rows, arr.cols, arr.dy, arr.dz], dtype=float)


def _amplitudes_los(dep: Deployment, channels, geo: Geometry, schedule):
    """Beamformed amplitudes with LoS-steered beams on the facing sector/panel.

    Returns ``(sig, inter)``: ``sig[g, u]`` for g serving u, and
    ``inter[g, u, c]`` for g transmitting to its scheduled UE while u listens
    towards candidate c.
    """
    n_g, n_u = geo.d2.shape
    gnb0, ue0 = dep.gnbs[0], dep.ues[0]
    gnb_orient = np.array([n.orientation for n in dep.gnbs])[:, None]
    sector = sectors_for_azimuths(gnb0.n_sectors, geo.az - gnb_orient)
    sector_bore = gnb_orient + sector * 360.0 / gnb0.n_sectors  # (g, u): sector of g facing u
    ue_orient = np.array([n.orientation for n in dep.ues])[None, :]
    panel = sectors_for_azimuths(ue0.n_panels, geo.aoa - ue_orient)
    panel_bore = ue_orient + panel * 360.0 / ue0.n_panels  # (g, u): panel of u facing g

    reals = [channels[g, u] for g in range(n_g) for u in range(n_u)]
    link = np.repeat(np.arange(n_g * n_u), [r.n_rays for r in reals])
    return los_amplitudes(
        link // n_u, link % n_u,
        np.concatenate([r.gains for r in reals]).astype(complex),
        np.concatenate([r.departure[0] for r in reals]),
        np.concatenate([r.departure[1] for r in reals]),
        np.concatenate([r.arrival[0] for r in reals]),
        np.concatenate([r.arrival[1] for r in reals]),
        np.ascontiguousarray(sector_bore, dtype=float), geo.zod, geo.az,
        np.ascontiguousarray(panel_bore, dtype=float), geo.zoa, geo.aoa,
        np.asarray(schedule, dtype=np.int64),
        _element_vec(gnb0.array.element), _array_vec(gnb0.array),
        _element_vec(ue0.array.element), _array_vec(ue0.array),
    )


def _amplitudes_optimal(dep: Deployment, channels, geo: Geometry, schedule):
    """Same contract as :func:`_amplitudes_los` with SVD beams on isotropic arrays."""
    n_g, n_u = geo.d2.shape
    tx_cfgs = [n.sectors[0] for n in dep.gnbs]
    rx_cfgs = [n.panels[0] for n in dep.ues]
    h = {}
    wt = {}
    wr = {}
    sig = np.zeros((n_g, n_u), dtype=complex)
    for g in range(n_g):
        for u in range(n_u):
            hm = channel_matrix(channels[g, u], tx_cfgs[g], rx_cfgs[u], isotropic=True)
            t, r, s2 = dominant_singular_pair(hm)
            h[g, u], wt[g, u], wr[g, u] = hm, t.weights, r.weights
            sig[g, u] = math.sqrt(s2)
    inter = np.zeros((n_g, n_u, n_g), dtype=complex)
    for g in range(n_g):
        if schedule[g] < 0:
            continue
        w_sched = wt[g, schedule[g]]
        for u in range(n_u):
            hw = h[g, u] @ w_sched
            for c in range(n_g):
                inter[g, u, c] = wr[c, u].conj() @ hw
    return sig, inter


def evaluate_sinr(dep: Deployment, channels, cfg: SimConfig, schedule=None) -> SinrTable:
    """SINR of every UE towards every candidate gNB.

    ``channels[g, u]`` are anchored realizations carrying path loss and
    shadowing. ``schedule[g]`` is the UE index gNB ``g`` currently beams at,
    or -1 when it is silent; only scheduled gNBs interfere.
    """
    n_g, n_u = len(dep.gnbs), len(dep.ues)
    missing = [(g, u) for g in range(n_g) for u in range(n_u) if (g, u) not in channels]
    if missing:
        raise KeyError(f"missing channel realizations for links {missing[:3]}")
    if schedule is None:
        schedule = [-1] * n_g
    geo = Geometry.of(dep)
    if cfg.beamforming == "optimal_isotropic":
        sig, inter = _amplitudes_optimal(dep, channels, geo, schedule)
        pol = 1.0
    else:
        sig, inter = _amplitudes_los(dep, channels, geo, schedule)
        pol = math.cos(math.radians(cfg.ue_zeta - cfg.gnb_zeta))
    rx_mw = _link_powers_mw(dep, channels, geo)
    gain = np.abs(sig) ** 2 * pol**2
    signal = (rx_mw * gain).T  # (u, c)
    cross = rx_mw[:, :, None] * np.abs(inter) ** 2 * pol**2  # (g, u, c)
    own = np.eye(n_g, dtype=bool)[:, None, :]
    interference = np.where(own, 0.0, cross).sum(axis=0)  # (u, c)
    n_mw = 10 ** (noise_dbm(cfg) / 10)
    with np.errstate(divide="ignore"):
        return SinrTable(
            sinr_db=10 * np.log10(np.maximum(signal / (n_mw + interference), 1e-300)),
            signal_dbm=10 * np.log10(np.maximum(signal, 1e-300)),
            interference_dbm=10 * np.log10(interference),
            gain_db=10 * np.log10(np.maximum(gain.T, 1e-300)),
            noise_dbm=noise_dbm(cfg),
        )


def throughput_model(sinr_db, n_attached: int, cfg: SimConfig):
    """Shannon-capped rate in bit/s under an equal time share; ``None`` means outage."""
    if sinr_db is None:
        return 0.0
    if n_attached < 1:
        raise ValueError("n_attached must be at least 1")
    # log2(1 + 10^(x/10)) without overflow for very large SINR
    spectral = float(np.logaddexp2(0.0, sinr_db * math.log2(10) / 10))
    shannon = cfg.bandwidth_hz / n_attached * spectral * cfg.efficiency
    return min(cfg.source_rate, cfg.max_phy_rate / n_attached, shannon)


@dataclass
class LinkState:
    los: bool
    los_epoch: int
    shadowing_db: float
    real: ChannelRealization
    small_epoch: int


class Simulation:
    """Mutable run state: deployment plus per-link channel state."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.profile = cfg.profile()
        self.dep = build_deployment(cfg, stream(cfg.seed, _DEPLOY))
        self.mobility_rng = stream(cfg.seed, _MOBILITY)
        self.links: dict[tuple[int, int], LinkState] = {}
        self.step_index = 0

    def _epoch(self, period: float) -> int:
        return math.floor(self.dep.time / period + 1e-9)

    def refresh_channels(self) -> dict:
        """Update LoS, shadowing and small-scale state; return anchored realizations."""
        cfg, prof, seed = self.cfg, self.profile, self.cfg.seed
        geo = Geometry.of(self.dep)
        los_epoch = self._epoch(cfg.los_period)
        small_epoch = self._epoch(cfg.coherence_period)
        channels = {}
        for g in range(len(self.dep.gnbs)):
            for u in range(len(self.dep.ues)):
                state = self.links.get((g, u))
                aod = Direction(float(geo.zod[g, u]), float(geo.az[g, u]))
                aoa = Direction(float(geo.zoa[g, u]), float(geo.aoa[g, u]))
                if state is None or state.los_epoch != los_epoch:
                    los = los_state(prof, geo.d2[g, u], stream(seed, _LOS, g, u, los_epoch))
                    if state is None or los != state.los:
                        std = prof.shadow_std_los if los else prof.shadow_std_nlos
                        shadow = float(stream(seed, _SHADOW, g, u, los_epoch).normal(0.0, std))
                        state = LinkState(los, los_epoch, shadow, None, -1)
                    else:
                        state.los_epoch = los_epoch
                if state.real is None or state.small_epoch != small_epoch:
                    rng = stream(seed, _SMALL_SCALE, g, u, small_epoch)
                    state.real = generate_realization(prof, state.los, rng)
                    state.small_epoch = small_epoch
                self.links[g, u] = state
                channels[g, u] = replace(
                    state.real, aod_los=aod, aoa_los=aoa,
                    path_loss_db=path_loss(prof, state.los, geo.d3[g, u]),
                    shadowing_db=state.shadowing_db,
                )
        return channels

    def schedule(self) -> list[int]:
        """Round-robin pick of one attached UE per gNB for this step."""
        out = []
        for g in range(len(self.dep.gnbs)):
            attached = [u for u, ue in enumerate(self.dep.ues) if ue.serving == g]
            out.append(attached[self.step_index % len(attached)] if attached else -1)
        return out


@dataclass(frozen=True)
class MetricsRecord:
    time: float
    ue_id: int
    serving: int
    sinr_db: float
    offered_rate: float
    achieved_rate: float
    handover: bool


def run(cfg: SimConfig, on_step=None) -> tuple[list[MetricsRecord], dict]:
    """Simulate ``cfg`` and return per-step per-UE records plus a summary.

    ``on_step(sim, channels, table)`` is called after each SINR evaluation.
    """
    sim = Simulation(cfg)
    records: list[MetricsRecord] = []
    gains, los = [], []
    for k in range(cfg.n_steps):
        sim.step_index = k
        sim.dep = step_mobility(sim.dep, cfg.step_dt, sim.mobility_rng, cfg.walk_epoch)
        channels = sim.refresh_channels()
        if k == 0:
            # initial attach on interference-free SINR
            snr = evaluate_sinr(sim.dep, channels, cfg)
            sim.dep, _ = associate(sim.dep, snr.sinr_db, cfg.outage_db, cfg.hysteresis_db)
        table = evaluate_sinr(sim.dep, channels, cfg, sim.schedule())
        if on_step is not None:
            on_step(sim, channels, table)
        gains.append(table.gain_db)
        los.append([[sim.links[g, u].los for g in range(len(sim.dep.gnbs))] for u in range(len(sim.dep.ues))])
        sim.dep, handover = associate(sim.dep, table.sinr_db, cfg.outage_db, cfg.hysteresis_db)
        load = np.bincount([ue.serving for ue in sim.dep.ues if ue.serving != OUTAGE],
                           minlength=len(sim.dep.gnbs))
        t = round(sim.dep.time, 9)
        for u, ue in enumerate(sim.dep.ues):
            if ue.serving == OUTAGE:
                sinr, rate = float(table.sinr_db[u].max()), 0.0
            else:
                sinr = float(table.sinr_db[u, ue.serving])
                rate = throughput_model(sinr, int(load[ue.serving]), cfg)
            records.append(MetricsRecord(t, ue.id, ue.serving, sinr, ue.source_rate, rate, bool(handover[u])))
    summary = summarize(records)
    if summary:
        summary.update(gain_stats(np.array(gains), np.array(los, dtype=bool)))
    return records, summary


def gain_stats(gain_db: np.ndarray, los: np.ndarray) -> dict:
    """Mean isolated-link beamforming gain over every (step, UE, gNB) pair.

    This is the interference-free gain of the mutually steered pair, so it
    compares beamforming modes on identical links.
    """
    def mean(mask):
        return float(gain_db[mask].mean()) if mask.any() else None

    return {
        "beamforming_gain_mean_db": mean(np.ones_like(los)),
        "beamforming_gain_mean_los_db": mean(los),
        "beamforming_gain_mean_nlos_db": mean(~los),
    }


PERCENTILES = list(range(1, 100))


def summarize(records: list[MetricsRecord]) -> dict:
    """Run-level statistics; empty when there are no records."""
    if not records:
        return {}
    ue_ids = sorted({r.ue_id for r in records})
    rates = {u: [] for u in ue_ids}
    served_rates = {u: [] for u in ue_ids}
    for r in records:
        rates[r.ue_id].append(r.achieved_rate)
        if r.serving != OUTAGE:
            served_rates[r.ue_id].append(r.achieved_rate)
    per_ue = np.array([np.mean(rates[u]) for u in ue_ids])
    served = [np.mean(v) for v in served_rates.values() if v]
    sinr_served = np.array([r.sinr_db for r in records if r.serving != OUTAGE])
    sinr_all = np.array([r.sinr_db for r in records])
    outage = np.mean([r.serving == OUTAGE for r in records])
    return {
        "n_records": len(records),
        "n_ue": len(ue_ids),
        "throughput_mean_bps": float(per_ue.mean()),
        "throughput_mean_excl_outage_bps": float(np.mean(served)) if served else 0.0,
        "throughput_p10_bps": float(np.percentile(per_ue, 10)),
        "throughput_p50_bps": float(np.percentile(per_ue, 50)),
        "per_ue_throughput_bps": {str(u): float(v) for u, v in zip(ue_ids, per_ue)},
        "sinr_mean_db": float(sinr_served.mean()) if sinr_served.size else None,
        "sinr_mean_all_db": float(sinr_all.mean()),
        "sinr_cdf_db": (
            {str(p): float(v) for p, v in zip(PERCENTILES, np.percentile(sinr_served, PERCENTILES))}
            if sinr_served.size else {}
        ),
        "outage_fraction": float(outage),
        "handover_count": int(sum(r.handover for r in records)),
    }
