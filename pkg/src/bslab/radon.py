"""Plane-integral transform: forward, filtered backprojection, translation
representation of wave Cauchy data, and Sobolev data norms.

Conventions: Rf(p, w) integrates f over the plane {x . w = p}; it is even,
Rf(p, w) = Rf(-p, -w).  Direction quadrature comes from a DirectionSet; the
in-plane frame for each direction is the deterministic `plane_frame`, whose
antipodal convention makes evenness exact at matched nodes.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import map_coordinates

from .core import BUMP_PEAK, Sinogram, bump_plane_integral, plane_frame

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# forward transform


def _plane_points(p, omega, extent, h_plane):
    e1, e2 = plane_frame(omega)
    a = np.arange(-extent, extent + h_plane / 2, h_plane)
    p = np.asarray(p, dtype=float)
    pts = (
        p[:, None, None, None] * np.asarray(omega)[None, None, None, :]
        + a[None, :, None, None] * e1[None, None, None, :]
        + a[None, None, :, None] * e2[None, None, None, :]
    )
    return pts


def radon_forward(values, grid, p, dirset, h_plane=None, extent=None):
    """Plane integrals of a sampled field by trilinear in-plane quadrature.

    values : (nx, ny, nz) samples on `grid` of a function supported inside
    the grid (out-of-grid reads are zero).
    """
    if h_plane is None:
        h_plane = grid.h
    if extent is None:
        extent = grid.radius
    p = np.asarray(p, dtype=float)
    out = np.empty((len(p), len(dirset)))
    for j, omega in enumerate(dirset.dirs):
        pts = _plane_points(p, omega, extent, h_plane)
        idx = grid.world_to_index(pts.reshape(-1, 3))
        vals = map_coordinates(values, idx.T, order=1, mode="constant", cval=0.0,
                               prefilter=False)
        out[:, j] = vals.reshape(pts.shape[:-1]).sum(axis=(1, 2)) * h_plane**2
    return Sinogram(p, dirset, out, {"h_plane": h_plane, "extent": extent})


def radon_forward_callable(f, p, dirset, extent, h_plane):
    """Plane integrals of a callable f(pts[..., 3]) (no interpolation error)."""
    p = np.asarray(p, dtype=float)
    out = np.empty((len(p), len(dirset)))
    for j, omega in enumerate(dirset.dirs):
        pts = _plane_points(p, omega, extent, h_plane)
        out[:, j] = np.asarray(f(pts)).sum(axis=(1, 2)) * h_plane**2
    return Sinogram(p, dirset, out, {"h_plane": h_plane, "extent": extent})


def weighted_radon(f, weight, p, dirset, extent, h_plane):
    """Plane integrals of f against a direction-dependent weight.

    f : callable (pts) -> values;  weight : callable (pts, omega) -> values.
    """
    p = np.asarray(p, dtype=float)
    out = np.empty((len(p), len(dirset)))
    for j, omega in enumerate(dirset.dirs):
        pts = _plane_points(p, omega, extent, h_plane)
        out[:, j] = np.asarray(f(pts) * weight(pts, omega)).sum(axis=(1, 2)) * h_plane**2
    return Sinogram(p, dirset, out, {"h_plane": h_plane, "extent": extent,
                                     "weighted": True})


def radon_bumps_exact(spatial_terms, p, dirset):
    """Exact sinogram of sum(amp * bump(|x-c|/w)/bump(0)) terms.

    spatial_terms : iterable of (center, width, amplitude).
    """
    p = np.asarray(p, dtype=float)
    out = np.zeros((len(p), len(dirset)))
    for c, w, amp in spatial_terms:
        c = np.asarray(c, dtype=float)
        cw = dirset.dirs @ c
        for j in range(len(dirset)):
            out[:, j] += (amp / BUMP_PEAK) * bump_plane_integral(p - cw[j], w)
    return Sinogram(p, dirset, out, {"exact": True})


def potential_slice_terms(q, t):
    """(center, width, amplitude) triples of the spatial slice q(t, .)."""
    return [(b.center, b.width, b.amplitude * b.temporal(t)) for b in q.bumps]


# ---------------------------------------------------------------------------
# spectral derivatives along the offset axis


def _rolloff(r, start=0.8):
    w = np.ones_like(r)
    hi = r >= 1.0
    mid = (r > start) & ~hi
    w[hi] = 0.0
    w[mid] = 0.5 * (1.0 + np.cos(math.pi * (r[mid] - start) / (1.0 - start)))
    return w


def spectral_derivative(values, dp, order=1, axis=0, rolloff=0.8, pad=True):
    """FFT derivative along `axis` with a raised-cosine high-frequency roll-off.

    Data must decay inside the window (compact support with margins); the
    window is zero-padded to suppress wraparound.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    npad = 2 * n if pad else n
    F = np.fft.rfft(values, n=npad, axis=axis)
    xi = TWO_PI * np.fft.rfftfreq(npad, d=dp)
    xin = math.pi / dp
    mult = (1j * xi) ** order * _rolloff(xi / xin, rolloff)
    shape = [1] * values.ndim
    shape[axis] = len(xi)
    out = np.fft.irfft(F * mult.reshape(shape), n=npad, axis=axis)
    sl = [slice(None)] * values.ndim
    sl[axis] = slice(0, n)
    return out[tuple(sl)]


def deconvolve_axis(values, du, kernel_u, kernel_vals, axis=0, cap_ratio=1e-3,
                    rolloff=0.8):
    """Divide out a convolution kernel along one axis, with a spectral cap.

    The kernel transfer function is computed from its sampled profile; the
    division is limited to |transfer| >= cap_ratio * max|transfer| and a
    raised-cosine roll-off suppresses everything near the grid Nyquist.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    npad = 2 * n
    xi = TWO_PI * np.fft.rfftfreq(npad, d=du)
    # continuous-normalization transfer: integral of k(u) e^{-i xi u} du
    ku = np.asarray(kernel_u, dtype=float)
    kv = np.asarray(kernel_vals, dtype=float)
    transfer = np.trapezoid(kv[None, :] * np.exp(-1j * xi[:, None] * ku[None, :]), ku,
                            axis=1)
    tmax = np.max(np.abs(transfer))
    safe = np.abs(transfer) >= cap_ratio * tmax
    inv = np.zeros_like(transfer)
    inv[safe] = 1.0 / transfer[safe]
    xin = math.pi / du
    mult = inv * _rolloff(xi / xin, rolloff)
    F = np.fft.rfft(values, n=npad, axis=axis)
    shape = [1] * values.ndim
    shape[axis] = len(xi)
    out = np.fft.irfft(F * mult.reshape(shape), n=npad, axis=axis)
    sl = [slice(None)] * values.ndim
    sl[axis] = slice(0, n)
    return out[tuple(sl)]


# ---------------------------------------------------------------------------
# filtered backprojection


def _filtered_upsampled(values, p, order, rolloff, up=4):
    """Spectral derivative plus band-limited upsampling of sinogram columns.

    Returns (p_fine, columns) with spacing dp/up over the original window,
    so the subsequent linear interpolation onto x.w carries O((dp/up)^2)
    error instead of O(dp^2).
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    dp = float(p[1] - p[0])
    npad = 2 * n
    F = np.fft.rfft(values, n=npad, axis=0)
    xi = TWO_PI * np.fft.rfftfreq(npad, d=dp)
    xin = math.pi / dp
    if order:
        F = F * ((1j * xi) ** order * _rolloff(xi / xin, rolloff))[:, None]
    nbig = npad * up
    Fbig = np.zeros((nbig // 2 + 1,) + values.shape[1:], dtype=complex)
    Fbig[: F.shape[0]] = F
    big = np.fft.irfft(Fbig, n=nbig, axis=0) * up
    p_fine = p[0] + (dp / up) * np.arange((n - 1) * up + 1)
    return p_fine, big[: len(p_fine)]


def fbp_inverse(sino: Sinogram, grid, rolloff=0.8, upsample=4):
    """f(x) = -(1/8 pi^2) * integral over S^2 of (d^2/dp^2 Rf)(x.w, w) dw."""
    pf, d2 = _filtered_upsampled(sino.values, sino.p, 2, rolloff, upsample)
    X, Y, Z = grid.meshgrid()
    out = np.zeros(grid.dims)
    for j, omega in enumerate(sino.dirset.dirs):
        proj = X * omega[0] + Y * omega[1] + Z * omega[2]
        out += sino.dirset.weights[j] * np.interp(proj, pf, d2[:, j],
                                                  left=0.0, right=0.0)
    return -out / (8.0 * math.pi**2)


# ---------------------------------------------------------------------------
# translation representation of Cauchy data


def translation_rep(sino_f1: Sinogram, sino_f2: Sinogram, rolloff=0.8):
    """k(s, w) = (1/4 pi)(-d_s^2 R f1 + d_s R f2) for Cauchy data (f1, f2)."""
    dp = float(sino_f1.p[1] - sino_f1.p[0])
    d2 = spectral_derivative(sino_f1.values, dp, order=2, axis=0, rolloff=rolloff)
    d1 = spectral_derivative(sino_f2.values, dp, order=1, axis=0, rolloff=rolloff)
    vals = (-d2 + d1) / (4.0 * math.pi)
    return Sinogram(sino_f1.p, sino_f1.dirset, vals, {"kind": "translation_rep"})


def translation_rep_inverse(k: Sinogram, grid, rolloff=0.8, upsample=4):
    """Recover Cauchy data: f1 = (1/2 pi) int k(x.w, w) dw,
    f2 = -(1/2 pi) int (d_s k)(x.w, w) dw."""
    pf, k_up = _filtered_upsampled(k.values, k.p, 0, rolloff, upsample)
    _, d1 = _filtered_upsampled(k.values, k.p, 1, rolloff, upsample)
    X, Y, Z = grid.meshgrid()
    f1 = np.zeros(grid.dims)
    f2 = np.zeros(grid.dims)
    for j, omega in enumerate(k.dirset.dirs):
        proj = X * omega[0] + Y * omega[1] + Z * omega[2]
        w = k.dirset.weights[j]
        f1 += w * np.interp(proj, pf, k_up[:, j], left=0.0, right=0.0)
        f2 -= w * np.interp(proj, pf, d1[:, j], left=0.0, right=0.0)
    return f1 / TWO_PI, f2 / TWO_PI


def shift_rep(k: Sinogram, t):
    """Free evolution acts on the representation by translation: k(s - t, w)."""
    dp = float(k.p[1] - k.p[0])
    n = len(k.p)
    npad = 2 * n
    xi = TWO_PI * np.fft.rfftfreq(npad, d=dp)
    F = np.fft.rfft(k.values, n=npad, axis=0)
    out = np.fft.irfft(F * np.exp(-1j * xi * t)[:, None], n=npad, axis=0)[:n]
    return Sinogram(k.p, k.dirset, out, dict(k.meta, shifted=float(t)))


# ---------------------------------------------------------------------------
# Sobolev norms of data


def sobolev_norm_1d(values, du, m, axis=0):
    """Discrete H^m norm along one axis: sum (1+xi^2)^m |g^|^2 dxi / (2 pi).

    g^ is the DFT approximation du * FFT(g); Parseval-consistent, so m=0
    reproduces the L2 norm of the sampled window.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[axis]
    F = np.fft.fft(values, axis=axis) * du
    xi = TWO_PI * np.fft.fftfreq(n, d=du)
    shape = [1] * values.ndim
    shape[axis] = n
    w = (1.0 + xi * xi) ** m
    dxi = TWO_PI / (n * du)
    return np.sqrt(np.sum(w.reshape(shape) * np.abs(F) ** 2, axis=axis) * dxi / TWO_PI)


def data_norm(cube, m=1):
    """L-infinity over sigma' of the L2(S^2; H^m_sigma) norm of a data cube."""
    dsig = float(cube.sigma[1] - cube.sigma[0])
    per_dir = sobolev_norm_1d(cube.values, dsig, m, axis=1)  # (n_sigmap, m_dirs)
    per_sp = np.sqrt(per_dir**2 @ cube.dirset.weights)
    return float(np.max(per_sp))
