"""Compiled per-ray beam-response loops used by the engine."""

import math

import numpy as np
from numba import njit

_DB_TO_AMP = math.log(10.0) / 20.0


@njit(cache=True)
def _wrap(phi):
    return (phi + 180.0) % 360.0 - 180.0


@njit(cache=True)
def _element_amp(theta, phi_local, el):
    # el = (g_max, theta_3db, phi_3db, sla_v, a_m)
    vert = min(12.0 * ((theta - 90.0) / el[1]) ** 2, el[3])
    horiz = min(12.0 * (phi_local / el[2]) ** 2, el[4])
    return math.exp((el[0] - min(vert + horiz, el[4])) * _DB_TO_AMP)


@njit(cache=True)
def _geometric(psi, k):
    # sum_{n<k} exp(j n psi)
    step = complex(math.cos(psi), math.sin(psi))
    term = 1.0 + 0.0j
    acc = 0.0j
    for _ in range(k):
        acc += term
        term *= step
    return acc


@njit(cache=True)
def response(sin_t, cos_t, theta, sin_p, cos_p, phi, bore, sin_b, cos_b, target_y, target_z, el, arr):
    """Element amplitude times ``w^H a`` for one ray.

    ``target_y = sin(theta0) sin(phi0)`` and ``target_z = cos(theta0)`` describe
    the steering direction in the array frame; ``arr = (rows, cols, dy, dz)``.
    """
    rows, cols = int(arr[0]), int(arr[1])
    sin_local = sin_p * cos_b - cos_p * sin_b
    psi_y = 2.0 * math.pi * arr[2] * (sin_t * sin_local - target_y)
    psi_z = 2.0 * math.pi * arr[3] * (cos_t - target_z)
    af = _geometric(psi_y, cols) * _geometric(psi_z, rows) / math.sqrt(rows * cols)
    return _element_amp(theta, _wrap(phi - bore), el) * af


@njit(cache=True)
def los_amplitudes(link_g, link_u, gains, tx_theta, tx_phi, rx_theta, rx_phi,
                   sector_bore, zod, az, panel_bore, zoa, aoa, schedule,
                   g_el, g_arr, u_el, u_arr):
    """Beamformed amplitudes for LoS-steered beams.

    ``sig[g, u]`` is the response of link g->u with both ends steered at each
    other; ``inter[g, u, c]`` is the response of link g->u with g steered at
    its scheduled UE and u steered at candidate c.
    """
    n_g, n_u = sector_bore.shape
    d2r = math.pi / 180.0
    # per-link steering targets and boresight trig
    sb_s = np.sin(sector_bore * d2r)
    sb_c = np.cos(sector_bore * d2r)
    pb_s = np.sin(panel_bore * d2r)
    pb_c = np.cos(panel_bore * d2r)
    tx_ty = np.sin(zod * d2r) * np.sin((az - sector_bore) * d2r)
    tx_tz = np.cos(zod * d2r)
    rx_ty = np.sin(zoa * d2r) * np.sin((aoa - panel_bore) * d2r)
    rx_tz = np.cos(zoa * d2r)

    sig = np.zeros((n_g, n_u), dtype=np.complex128)
    inter = np.zeros((n_g, n_u, n_g), dtype=np.complex128)
    for i in range(gains.size):
        g, u = link_g[i], link_u[i]
        st, ct = math.sin(tx_theta[i] * d2r), math.cos(tx_theta[i] * d2r)
        sp, cp = math.sin(tx_phi[i] * d2r), math.cos(tx_phi[i] * d2r)
        tx_sig = response(st, ct, tx_theta[i], sp, cp, tx_phi[i], sector_bore[g, u],
                          sb_s[g, u], sb_c[g, u], tx_ty[g, u], tx_tz[g, u], g_el, g_arr).conjugate()
        t = schedule[g]
        if t >= 0:
            tx_int = response(st, ct, tx_theta[i], sp, cp, tx_phi[i], sector_bore[g, t],
                              sb_s[g, t], sb_c[g, t], tx_ty[g, t], tx_tz[g, t], g_el, g_arr).conjugate()
        else:
            tx_int = 0.0j
        st, ct = math.sin(rx_theta[i] * d2r), math.cos(rx_theta[i] * d2r)
        sp, cp = math.sin(rx_phi[i] * d2r), math.cos(rx_phi[i] * d2r)
        for c in range(n_g):
            if t < 0 and c != g:
                continue
            rx = response(st, ct, rx_theta[i], sp, cp, rx_phi[i], panel_bore[c, u],
                          pb_s[c, u], pb_c[c, u], rx_ty[c, u], rx_tz[c, u], u_el, u_arr)
            inter[g, u, c] += gains[i] * tx_int * rx
            if c == g:
                sig[g, u] += gains[i] * tx_sig * rx
    return sig, inter
