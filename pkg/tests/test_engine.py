import math
from dataclasses import replace

import numpy as np
import pytest

from mmsim.antenna import Direction, steering_vector, to_local
from mmsim.campaign import rate_checks, records_csv
from mmsim.channel import ChannelRealization, channel_matrix, dominant_singular_pair, generate_realization
from mmsim.config import SimConfig
from mmsim.engine import (
    PERCENTILES,
    MetricsRecord,
    Geometry,
    Simulation,
    _amplitudes_los,
    evaluate_sinr,
    noise_dbm,
    run,
    summarize,
    throughput_model,
)
from mmsim.scenario import (
    OUTAGE, Deployment, GnbNode, UeNode, arrays_for, select_panel_and_sector, step_mobility,
)

CFG = SimConfig()


def single_ray(los=True):
    z = np.zeros(1)
    return ChannelRealization(los, np.ones(1), np.zeros(1, dtype=int), np.ones(1, dtype=complex), z, z, z, z, z)


def small_dep(cfg, gnb_xy, ue_xy, headings=None, n_sectors=3, n_panels=2, serving=None):
    gnb_arr, ue_arr = arrays_for(cfg)
    gnbs = [GnbNode(i, (x, y, 10.0), n_sectors, gnb_arr) for i, (x, y) in enumerate(gnb_xy)]
    headings = headings or [0.0] * len(ue_xy)
    serving = serving or [OUTAGE] * len(ue_xy)
    ues = [
        UeNode(i, (x, y, 1.5), (3 * math.cos(math.radians(h)), 3 * math.sin(math.radians(h))),
               n_panels, ue_arr, s)
        for i, ((x, y), h, s) in enumerate(zip(ue_xy, headings, serving))
    ]
    return Deployment(100.0, gnbs, ues)


def anchored(dep, real, pl=100.0):
    geo = Geometry.of(dep)
    out = {}
    for g in range(len(dep.gnbs)):
        for u in range(len(dep.ues)):
            out[g, u] = replace(real, aod_los=Direction(float(geo.zod[g, u]), float(geo.az[g, u])),
                                aoa_los=Direction(float(geo.zoa[g, u]), float(geo.aoa[g, u])),
                                path_loss_db=pl)
    return out


def test_noise_floor():
    assert noise_dbm(CFG) == pytest.approx(-77.0, abs=1e-9)


def test_snr_example():
    dep = small_dep(CFG, [(0, 0)], [(40, 10)])
    ch = anchored(dep, single_ray())
    gain = evaluate_sinr(dep, ch, CFG).gain_db[0, 0]
    # choose the path loss that puts the received signal at -60 dBm
    ch = anchored(dep, single_ray(), pl=30.0 + gain + 60.0)
    table = evaluate_sinr(dep, ch, CFG)
    assert table.signal_dbm[0, 0] == pytest.approx(-60.0, abs=1e-9)
    assert table.sinr_db[0, 0] == pytest.approx(17.0, abs=0.1)


def test_los_gain_matches_full_matrix():
    cfg = SimConfig()
    sim = Simulation(cfg)
    ch = sim.refresh_channels()
    dep = sim.dep
    geo = Geometry.of(dep)
    sched = [0, 1, 2, 3, 4]
    sig, inter = _amplitudes_los(dep, ch, geo, sched)

    def beam(arr, theta, phi):
        lt, lp = to_local(arr, theta, phi)
        return steering_vector(arr, Direction(float(lt), float(lp))).weights

    for g in range(5):
        gnb = dep.gnbs[g]
        t = sched[g]
        tx_int = gnb.sectors[select_panel_and_sector(dep.ues[t], gnb)[1]]
        wt_int = beam(tx_int, geo.zod[g, t], geo.az[g, t])
        for u in (0, 7, 19):
            ue = dep.ues[u]
            tx = gnb.sectors[select_panel_and_sector(ue, gnb)[1]]
            wt = beam(tx, geo.zod[g, u], geo.az[g, u])
            for c in range(5):
                rx = ue.panels[select_panel_and_sector(ue, dep.gnbs[c])[0]]
                wr = beam(rx, geo.zoa[c, u], geo.aoa[c, u])
                ref = wr.conj() @ channel_matrix(ch[g, u], tx_int, rx) @ wt_int
                assert abs(inter[g, u, c] - ref) <= 1e-10 * max(abs(ref), 1e-12)
                if c == g:
                    ref = wr.conj() @ channel_matrix(ch[g, u], tx, rx) @ wt
                    assert abs(sig[g, u] - ref) <= 1e-10 * abs(ref)


def test_optimal_mode_uses_dominant_singular_value():
    cfg = SimConfig(beamforming="optimal_isotropic", n_ue=3)
    sim = Simulation(cfg)
    ch = sim.refresh_channels()
    table = evaluate_sinr(sim.dep, ch, cfg)
    g, u = 2, 1
    h = channel_matrix(ch[g, u], sim.dep.gnbs[g].sectors[0], sim.dep.ues[u].panels[0], isotropic=True)
    _, _, s2 = dominant_singular_pair(h)
    assert table.gain_db[u, g] == pytest.approx(10 * math.log10(s2), abs=1e-9)


def test_symmetric_geometry_gives_equal_sinr():
    # 180-degree rotation about (50, 0) swaps the two cells; 4 sectors and
    # opposite UE headings make the antenna layouts map onto each other
    real = generate_realization(CFG.profile(), False, np.random.default_rng(4))
    dep = small_dep(CFG, [(0, 0), (100, 0)], [(30, 8), (70, -8)], headings=[0.0, 180.0],
                    n_sectors=4, serving=[0, 1])
    table = evaluate_sinr(dep, anchored(dep, real), CFG, schedule=[0, 1])
    assert table.sinr_db[0, 0] == pytest.approx(table.sinr_db[1, 1], abs=1e-9)
    assert table.sinr_db[0, 1] == pytest.approx(table.sinr_db[1, 0], abs=1e-9)


def test_silencing_interferers_restores_snr():
    sim = Simulation(SimConfig(n_ue=8))
    ch = sim.refresh_channels()
    iso = evaluate_sinr(sim.dep, ch, sim.cfg)
    full = evaluate_sinr(sim.dep, ch, sim.cfg, schedule=[0, 1, 2, 3, 4])
    assert np.all(full.sinr_db <= iso.sinr_db + 1e-12)
    for c in range(5):
        # every gNB but c silent: candidate c's SINR equals its isolated SNR
        gnbs = [g if g.id == c else replace(g, tx_power=-math.inf) for g in sim.dep.gnbs]
        quiet = evaluate_sinr(replace(sim.dep, gnbs=gnbs), ch, sim.cfg, schedule=[0, 1, 2, 3, 4])
        assert np.array_equal(quiet.sinr_db[:, c], iso.sinr_db[:, c])


def test_removing_an_interferer_never_hurts():
    sim = Simulation(SimConfig(n_ue=10))
    ch = sim.refresh_channels()
    sched = [0, 1, 2, 3, 4]
    full = evaluate_sinr(sim.dep, ch, sim.cfg, schedule=sched)
    for drop in range(5):
        fewer = evaluate_sinr(sim.dep, ch, sim.cfg, schedule=[-1 if g == drop else s for g, s in enumerate(sched)])
        assert np.all(fewer.sinr_db >= full.sinr_db - 1e-12)


def test_missing_realization():
    sim = Simulation(SimConfig(n_ue=2))
    ch = sim.refresh_channels()
    del ch[1, 1]
    with pytest.raises(KeyError):
        evaluate_sinr(sim.dep, ch, sim.cfg)


def test_throughput_examples():
    assert throughput_model(1e6, 1, CFG) == 1e8
    assert throughput_model(math.inf, 1, CFG) == 1e8
    assert throughput_model(None, 1, CFG) == 0.0
    # 0 dB: min(1e8, 3.2e9, 0.6 * 1e9 * log2(2))
    assert throughput_model(0.0, 1, CFG) == 1e8
    # 40 attached: max PHY share 80 Mbit/s binds before the source rate
    assert throughput_model(60.0, 40, CFG) == pytest.approx(8e7)
    # -3 dB with 10 attached: 1e8 * 0.6 * log2(1 + 10^-0.3)
    assert throughput_model(-3.0, 10, CFG) == pytest.approx(1e8 * 0.6 * math.log2(1 + 10 ** -0.3))
    with pytest.raises(ValueError):
        throughput_model(10.0, 0, CFG)


def test_zero_duration():
    records, summary = run(SimConfig(sim_duration=0))
    assert records == [] and summary == {}
    assert summarize([]) == {}


def test_determinism():
    cfg = SimConfig(sim_duration=0.5, n_ue=6, seed=9)
    a, sa = run(cfg)
    b, sb = run(cfg)
    assert records_csv(a) == records_csv(b)
    assert sa == sb
    c, _ = run(cfg.model_copy(update={"seed": 10}))
    assert records_csv(a) != records_csv(c)


def test_run_invariants():
    cfg = SimConfig(sim_duration=1.0, n_ue=30, d=200, seed=3)
    records, summary = run(cfg)
    assert len(records) == cfg.n_steps * cfg.n_ue
    checks = rate_checks(records, cfg)
    assert checks["ue_cap_ok"] and checks["cell_cap_ok"]
    for r in records:
        assert r.offered_rate == cfg.source_rate
        assert 0.0 <= r.achieved_rate <= cfg.source_rate
        if r.serving == OUTAGE:
            assert r.achieved_rate == 0.0
        else:
            assert math.isfinite(r.sinr_db)
    assert set(summary["sinr_cdf_db"]) == {str(p) for p in PERCENTILES}
    assert 0.0 <= summary["outage_fraction"] <= 1.0
    assert summary["throughput_mean_bps"] <= summary["throughput_mean_excl_outage_bps"] + 1e-6


def test_cell_cap_binds_with_many_users():
    cfg = SimConfig(sim_duration=0.3, n_ue=60, source_rate=1e9, max_phy_rate=1e9)
    records, _ = run(cfg)
    checks = rate_checks(records, cfg)
    assert checks["cell_cap_ok"]
    assert checks["max_cell_rate_bps"] > 0.5e9


def test_on_step_hook_and_schedule():
    seen = []
    cfg = SimConfig(sim_duration=0.3, n_ue=5)
    run(cfg, on_step=lambda sim, ch, table: seen.append((sim.step_index, sim.schedule(), table.sinr_db.shape)))
    assert [s[0] for s in seen] == [0, 1, 2]
    assert all(shape == (5, 5) for _, _, shape in seen)


def test_channel_cadence():
    cfg = SimConfig(n_ue=3, coherence_period=0.2, los_period=1.0)
    sim = Simulation(cfg)
    first = sim.refresh_channels()
    gains = {k: v.gains.copy() for k, v in first.items()}
    shadows = {k: s.shadowing_db for k, s in sim.links.items()}
    sim.dep = step_mobility(sim.dep, 0.1, sim.mobility_rng)
    second = sim.refresh_channels()
    # same coherence epoch: small-scale state kept, re-anchored to new geometry
    assert all(np.array_equal(second[k].gains, gains[k]) for k in gains)
    sim.dep = step_mobility(sim.dep, 0.1, sim.mobility_rng)
    third = sim.refresh_channels()
    assert any(not np.array_equal(third[k].gains, gains[k]) for k in gains)
    # shadowing only changes with the LoS state
    for k, s in sim.links.items():
        if s.los_epoch == 0:
            assert s.shadowing_db == shadows[k]


def test_summary_counts_outage_both_ways():
    recs = [MetricsRecord(0.1, 0, 0, 10.0, 1e8, 1e8, False), MetricsRecord(0.1, 1, OUTAGE, -9.0, 1e8, 0.0, False),
            MetricsRecord(0.2, 0, 1, 12.0, 1e8, 5e7, True), MetricsRecord(0.2, 1, 0, 3.0, 1e8, 1e8, False)]
    s = summarize(recs)
    assert s["throughput_mean_bps"] == pytest.approx((7.5e7 + 5e7) / 2)
    assert s["throughput_mean_excl_outage_bps"] == pytest.approx((7.5e7 + 1e8) / 2)
    assert s["outage_fraction"] == 0.25
    assert s["handover_count"] == 1
    assert s["sinr_mean_db"] == pytest.approx(25.0 / 3)
