"""Compiled inner loops for the e-e rate quadrature.

These mirror the numpy reference in :mod:`graphene_dsmc.ee` node for node;
the tests compare both.
"""

from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(cache=True, inline="always")
def _pi_tilde(q, k_F):
    if q <= 2.0 * k_F * (1.0 + 1e-9):
        return 1.0
    return (1.0 + math.pi * q / (8.0 * k_F) - math.sqrt(q * q - 4.0 * k_F * k_F) / (2.0 * q)
            - q / (4.0 * k_F) * math.asin(2.0 * k_F / q))


@numba.njit(cache=True, inline="always")
def _one_plus_cos(ax, ay, an, bx, by, bn):
    if an == 0.0 or bn == 0.0:
        return 2.0
    c = (ax * bx + ay * by) / (an * bn)
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    return 1.0 + c


@numba.njit(cache=True, fastmath=True, nogil=True)
def intra_rate_sum(k1x, k1y, centers, f, m, C_eps, k_F):
    """sum_ij f_ij * sum_k [g(beta_{k-1}) + g(beta_k)] over a periodic beta mesh."""
    n1 = math.hypot(k1x, k1y)
    d_beta = 2.0 * math.pi / m
    cosb = np.empty(m)
    sinb = np.empty(m)
    for j in range(m):
        cosb[j] = math.cos(j * d_beta)
        sinb[j] = math.sin(j * d_beta)
    total_sum = 0.0
    for i in range(centers.shape[0]):
        fi = f[i]
        if fi == 0.0:
            continue
        k2x = centers[i, 0]
        k2y = centers[i, 1]
        n2 = math.hypot(k2x, k2y)
        Kx = k1x + k2x
        Ky = k1y + k2y
        a = 0.5 * (n1 + n2)
        c = min(0.5 * math.hypot(Kx, Ky), a)
        b = math.sqrt(max(a * a - c * c, 0.0))
        if 2.0 * c < 1e-12 * (n1 + n2):
            ct, st = 1.0, 0.0
        else:
            th = math.atan2(Ky, Kx)
            ct, st = math.cos(th), math.sin(th)
        acc = 0.0
        for j in range(m):
            x = a * cosb[j]
            y = b * sinb[j]
            px = 0.5 * Kx + x * ct - y * st
            py = 0.5 * Ky + x * st + y * ct
            qx = Kx - px
            qy = Ky - py
            np_ = math.sqrt(px * px + py * py)
            nq = math.sqrt(qx * qx + qy * qy)
            dx = k1x - px
            dy = k1y - py
            q = math.sqrt(dx * dx + dy * dy)
            dx = k1x - qx
            dy = k1y - qy
            qp = math.sqrt(dx * dx + dy * dy)
            v = (_one_plus_cos(k1x, k1y, n1, px, py, np_) * _one_plus_cos(k2x, k2y, n2, qx, qy, nq)
                 / (q + C_eps * _pi_tilde(q, k_F)))
            vp = (_one_plus_cos(k1x, k1y, n1, qx, qy, nq) * _one_plus_cos(k2x, k2y, n2, px, py, np_)
                  / (qp + C_eps * _pi_tilde(qp, k_F)))
            arc = math.sqrt((a * sinb[j]) ** 2 + (b * cosb[j]) ** 2)
            acc += (v * v + vp * vp - v * vp) * arc
        total_sum += fi * 2.0 * acc
    return total_sum


@numba.njit(cache=True, nogil=True)
def intra_rate_sum_many(k1, centers, f, m, C_eps, k_F):
    out = np.empty(k1.shape[0])
    for n in range(k1.shape[0]):
        out[n] = intra_rate_sum(k1[n, 0], k1[n, 1], centers, f, m, C_eps, k_F)
    return out
