"""Scattering data synthesis.

Asymptotic wave profiles read off sources or recorded far fields, pointwise
scattering amplitudes, backscattering data cubes, and the four components of
the pseudolinearized data map.  Amplitudes pair the scattered wave against a
mollified measuring plane; the incident-incident part is quadratured exactly
(no solver run), the scattered parts come from recorded solver fields grouped
so that every cube anti-diagonal shares one solve.
"""

import hashlib
import math
import os

import numpy as np
from scipy.ndimage import map_coordinates

from .born import _axis_step, born_cube, born_scattered, _gather_plane
from .core import DataCube, Grid3, Sinogram, SpaceTimeField
from .solver import (CFL_DEFAULT, solve_scattered, solve_scattered_plus,
                     stable_dt)

C3 = 1.0 / (4.0 * math.pi)
C3_MINUS = -C3


def measurement_window(q, mollifier):
    """Offset half-width that sees all of q's data: t1 + 2 rho + 10 eta."""
    return q.t_support[1] + 2.0 * q.rho + 10.0 * mollifier.eta


# -- asymptotic wave profiles -------------------------------------------------

def _spectral_ds(rows, ds):
    # d/ds along axis 0; rows must vanish near both ends (checked by callers)
    n = rows.shape[0]
    xi = 2.0 * np.pi * np.fft.rfftfreq(n, d=ds)
    return np.fft.irfft(1j * xi[:, None] * np.fft.rfft(rows, axis=0), n=n,
                        axis=0)


def wave_profile_from_source(p, s_grid, dirset):
    """Wave profile of the free wave driven by the space-time source p.

    u#(s, w) = c3m * d/ds Int p(w.x - s, x) dx.  The volume integral is a
    per-node time read of the recorded source, the s-derivative is spectral,
    so the s grid must cover the whole profile support predicted from the
    nonzero part of p (an error reports the needed span otherwise).
    """
    s_grid = np.asarray(s_grid, dtype=float)
    if len(s_grid) < 2:
        raise ValueError("s grid needs at least two samples")
    ds = _axis_step(s_grid, "s")
    nt = len(p.values)
    flat = p.values.reshape(nt, -1)
    nz_t = np.flatnonzero(np.any(flat != 0.0, axis=1))
    out = np.zeros((len(s_grid), len(dirset)))
    meta = {"kind": "wave_profile", "method": "source"}
    if len(nz_t) == 0:
        return Sinogram(s_grid, dirset, out, meta)
    t_lo = p.t0 + p.dt * nz_t[0]
    t_hi = p.t0 + p.dt * nz_t[-1]
    nz_x = np.flatnonzero(np.any(flat != 0.0, axis=0))
    pts = p.grid.points()[nz_x]
    flat = np.ascontiguousarray(flat[:, nz_x])
    cols = np.arange(len(nz_x))
    for j, omega in enumerate(dirset.dirs):
        c = pts @ omega
        lo_need, hi_need = c.min() - t_hi, c.max() - t_lo
        if s_grid[0] > lo_need + 1e-12 or s_grid[-1] < hi_need - 1e-12:
            raise ValueError(
                f"s grid [{s_grid[0]:.4f}, {s_grid[-1]:.4f}] does not cover "
                f"the profile support [{lo_need:.4f}, {hi_need:.4f}]")
        for i0 in range(0, len(s_grid), 32):
            sb = s_grid[i0:i0 + 32]
            tq = (c[None, :] - sb[:, None] - p.t0) / p.dt
            k0 = np.clip(np.floor(tq).astype(int), 0, nt - 2)
            w = tq - k0
            a = flat[k0, cols]
            row = a + w * (flat[k0 + 1, cols] - a)
            row[(tq < 0.0) | (tq > nt - 1)] = 0.0
            out[i0:i0 + 32, j] = row.sum(axis=1)
    out *= p.grid.h ** 3
    return Sinogram(s_grid, dirset, C3_MINUS * _spectral_ds(out, ds), meta)


def wave_profile_far_field(u, s_grid, dirset, *, shell_radius=None,
                           clear_radius=None):
    """Read the wave profile off a recorded field: |x| * u_t at |x| = t + s.

    u must be recorded on its full box.  Five sampling shells spanning a 4h
    band below shell_radius (default: just inside the box) are averaged; the
    call fails with a geometry report if the shells leave the box, reach
    inside clear_radius (where the wave is not yet free), or the run is too
    short for some requested s.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    g = u.grid
    h = g.h
    r_top = g.radius - h if shell_radius is None else float(shell_radius)
    if r_top > g.radius - h + 1e-12:
        raise ValueError(
            f"sampling shells at radius {r_top:.4f} leave the recorded box "
            f"(usable up to {g.radius - h:.4f})")
    radii = r_top - h * np.arange(5)
    r_in, r_out = radii[-1], radii[0]
    if r_in <= 0.0:
        raise ValueError("recorded box too small for a sampling shell")
    if clear_radius is not None and r_in <= clear_radius:
        raise ValueError(
            f"sampling shells [{r_in:.4f}, {r_out:.4f}] reach into the "
            f"non-free region (radius {clear_radius:.4f}); use a larger box")
    nt = len(u.values)
    if nt < 5:
        raise ValueError("need at least five recorded levels for u_t")
    # differentiate only on a shell-bounding subbox to keep the copy small
    sl = g.index_box((0.0, 0.0, 0.0), r_out + 2 * h)
    gs = g.subgrid(sl)
    v = u.values[(slice(None),) + sl]
    ut = (8.0 * (v[3:-1] - v[1:-3]) - (v[4:] - v[:-4])) / (12.0 * u.dt)
    t_d0 = u.t0 + 2.0 * u.dt
    s_lo = r_out - (t_d0 + (nt - 5) * u.dt)
    s_hi = r_in - t_d0
    if s_grid[0] < s_lo - 1e-12 or s_grid[-1] > s_hi + 1e-12:
        raise ValueError(
            f"recorded window only covers s in [{s_lo:.4f}, {s_hi:.4f}], "
            f"requested [{s_grid[0]:.4f}, {s_grid[-1]:.4f}]; run longer or "
            "move the shells")
    out = np.zeros((len(s_grid), len(dirset)))
    coords = np.empty((4, len(s_grid) * 5))
    for j, omega in enumerate(dirset.dirs):
        sp_idx = gs.world_to_index(radii[:, None] * np.asarray(omega,
                                                               dtype=float))
        tq = (radii[None, :] - s_grid[:, None] - t_d0) / u.dt
        coords[0] = tq.ravel()
        for a in range(3):
            coords[1 + a] = np.tile(sp_idx[:, a], len(s_grid))
        vals = map_coordinates(ut, coords, order=1, mode="nearest",
                               prefilter=False)
        out[:, j] = (vals.reshape(len(s_grid), 5) * radii).mean(axis=1)
    return Sinogram(s_grid, dirset, out,
                    {"kind": "wave_profile", "method": "far_field",
                     "radii": tuple(float(r) for r in radii)})


# -- pointwise amplitudes -----------------------------------------------------

def _pair_frame(omega, omegap):
    d = np.asarray(omega, dtype=float) - np.asarray(omegap, dtype=float)
    nd = float(np.linalg.norm(d))
    if nd < 1e-6:
        raise ValueError("omega' coincides with omega; the forward pairing "
                         "is singular")
    e = d / nd
    a = np.array([1.0, 0.0, 0.0])
    if abs(e @ a) > 0.9:
        a = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(e, a)
    e1 /= np.linalg.norm(e1)
    return nd, e, e1, np.cross(e, e1)


def incident_pair_term(q, s, omega, sp, omegap, mollifier, *, quad_t=None,
                       quad_y=None):
    """Exact pairing Int q(t,x) d_eta(t+s-x.w) d_eta(t+s'-x.w') dx dt.

    Both factors live on moving planes; resolving x along e = (w-w')/|w-w'|
    reduces the pairing to a mollifier-square quadrature in the two plane
    phases against flat cross-sections of q, with overall weight 1/|w-w'|.
    """
    nd, e, e1, e2 = _pair_frame(omega, omegap)
    eta = mollifier.eta
    hq = eta / 5.0 if quad_t is None else quad_t
    r = q.support_radius
    hy = min(eta / 2.0, r / 10.0) if quad_y is None else quad_y
    uu = np.arange(-mollifier.support, mollifier.support + hq / 2, hq)
    du = mollifier(uu)
    keep = du != 0.0
    uu, du = uu[keep], du[keep]
    yv = np.arange(-r - hy, r + hy + hy / 2, hy)
    Y1, Y2 = np.meshgrid(yv, yv, indexing="ij")
    ypts = (Y1[..., None] * e1 + Y2[..., None] * e2).reshape(-1, 3)
    yw = ypts @ np.asarray(omega, dtype=float)
    g = nd / 2.0
    acc = 0.0
    for u, wu in zip(uu, du):
        xi = (s - sp - (u - uu)) / nd
        sel = np.abs(xi) <= r + hy
        if not sel.any():
            continue
        xi_s, wv = xi[sel], du[sel]
        t = (u - s + g * xi_s)[:, None] + yw[None, :]
        pts = xi_s[:, None, None] * e + ypts[None, :, :]
        vals = q(t.ravel(), pts.reshape(-1, 3)).reshape(t.shape)
        acc += wu * float(wv @ vals.sum(axis=1))
    return acc * hq * hq * hy * hy / nd


_QUAD_REF_H = 0.05  # pairing quadrature steps are eta/4 at this solver step


def _field_stride(mollifier, h, cfl=CFL_DEFAULT):
    # recorded dt shrinks with h so the pairing integrals converge with it
    target = (mollifier.eta / 4.0) * (h / _QUAD_REF_H)
    return max(1, int(math.floor(target / stable_dt(h, cfl))))


def _memo_key(parts):
    return hashlib.sha256(repr(parts).encode()).hexdigest()[:32]


def _memo_fetch(path):
    if path is None or not os.path.exists(path):
        return None
    with np.load(path) as z:
        grid = Grid3(tuple(float(v) for v in z["origin"]), float(z["h"]),
                     tuple(int(v) for v in z["dims"]))
        return SpaceTimeField(grid, float(z["t0"]), float(z["dt"]),
                              z["values"].astype(float),
                              {"kind": str(z["kind"]), "memo": True})


def _memo_store(path, field, kind):
    tmp = f"{path}.{os.getpid()}.tmp.npz"
    np.savez(tmp, origin=np.asarray(field.grid.origin),
             h=field.grid.h, dims=np.asarray(field.grid.dims),
             t0=field.t0, dt=field.dt,
             values=np.asarray(field.values, dtype=np.float64), kind=kind)
    os.replace(tmp, path)


def _memo_path(memo_dir, parts):
    if memo_dir is None:
        return None
    os.makedirs(memo_dir, exist_ok=True)
    return os.path.join(memo_dir, _memo_key(parts) + ".npz")


def _round3(v):
    return tuple(round(float(x), 10) for x in v)


def _minus_field(q, s, omega, mollifier, h, *, record_pad=0.0, t_end=None,
                 memo_dir=None):
    stride = _field_stride(mollifier, h)
    path = _memo_path(memo_dir, ("minus", q.content_hash(), round(float(s), 10),
                                 _round3(omega), mollifier.eta, h, stride,
                                 round(record_pad, 10),
                                 None if t_end is None else round(t_end, 10)))
    hit = _memo_fetch(path)
    if hit is not None:
        return hit
    field = solve_scattered(q, s, omega, mollifier, h, record="qbox",
                            stride=stride, record_pad=record_pad, t_end=t_end)
    if path is not None:
        _memo_store(path, field, "scattered_minus")
    return field


def _plus_field(q, sp, omegap, mollifier, h, *, record_pad=0.0, t_start=None,
                memo_dir=None):
    stride = _field_stride(mollifier, h)
    path = _memo_path(memo_dir, ("plus", q.content_hash(), round(float(sp), 10),
                                 _round3(omegap), mollifier.eta, h, stride,
                                 round(record_pad, 10),
                                 None if t_start is None else round(t_start, 10)))
    hit = _memo_fetch(path)
    if hit is not None:
        return hit
    field = solve_scattered_plus(q, sp, omegap, mollifier, h, record="qbox",
                                 stride=stride, record_pad=record_pad,
                                 t_start=t_start)
    if path is not None:
        _memo_store(path, field, "scattered_plus")
    return field


def _pair_field_with_plane(weight_q, field, sp, omegap, mollifier):
    # Int weight * u * d_eta(t + sp - x.w') over the recorded window
    pts = field.grid.points()
    cwp = pts @ np.asarray(omegap, dtype=float)
    acc = 0.0
    for k in range(len(field.values)):
        t = field.t0 + field.dt * k
        qs = weight_q(t, pts)
        if not np.any(qs):
            continue
        w = mollifier(t + sp - cwp)
        if not np.any(w):
            continue
        acc += float(np.sum(qs * field.values[k].reshape(-1) * w))
    return acc * field.grid.h ** 3 * field.dt


def scattering_amplitude(q, s, omega, sp, omegap, mollifier, *,
                         backend="fdtd", h=0.05, field=None):
    """Amplitude A(s', w', s, w) of the mollified two-plane pairing.

    The incident-incident part is quadratured exactly; the scattered part
    pairs a recorded minus-solution (or its near-front expansion for
    backend="born") against the measuring plane profile.  Forward geometry
    w' = w is rejected.
    """
    if backend not in ("fdtd", "born"):
        raise ValueError("backend must be 'fdtd' or 'born'")
    _pair_frame(omega, omegap)  # reject forward geometry before any work
    a00 = incident_pair_term(q, s, omega, sp, omegap, mollifier)
    if q.sup_norm() == 0.0:
        return float(a00)
    if field is None:
        if backend == "fdtd":
            field = _minus_field(q, s, omega, mollifier, h)
        else:
            field = born_scattered(q, s, omega, mollifier, N=1, h_grid=h)
    return float(a00 + _pair_field_with_plane(q, field, sp, omegap, mollifier))


# -- cube assembly ------------------------------------------------------------

def _measure_cols(r_w, eta, h):
    dp = (eta / 4.0) * (h / _QUAD_REF_H)
    npl = 2 * int(math.ceil((r_w + dp) / dp)) + 1
    return dp * (np.arange(npl) - (npl - 1) // 2), dp


def _group_values(grid2):
    # map rounded value -> list of flat (i, j) index pairs
    flat = np.round(grid2, 9)
    groups = {}
    for i in range(grid2.shape[0]):
        for j in range(grid2.shape[1]):
            groups.setdefault(flat[i, j], []).append((i, j))
    return groups


def _pairing_cube(weight_q, solve_q, sigmap, sigma, dirset, mollifier, *, h,
                  memo_dir=None):
    """Cube of Int weight * u_minus(solve_q; s, w) * d_eta(t + s' + x.w).

    s = sigma' + sigma and s' = sigma' - sigma, so one solve per distinct
    (s, w) serves its whole anti-diagonal through plane integrals of
    weight * u and 1-D mollifier sums over the plane offsets.
    """
    sigmap = np.asarray(sigmap, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    out = np.zeros((len(sigmap), len(sigma), len(dirset)))
    if solve_q.sup_norm() == 0.0 or weight_q.sup_norm() == 0.0:
        return out
    r_w = weight_q.support_radius
    pad = max(0.0, r_w - solve_q.support_radius) + h
    t_hi = max(solve_q.t_support[1], weight_q.t_support[1])
    p_cols, dp = _measure_cols(r_w, mollifier.eta, h)
    extent = r_w + 2 * h
    groups = _group_values(sigmap[:, None] + sigma[None, :])
    for jd, omega in enumerate(dirset.dirs):
        for s, entries in groups.items():
            fld = _minus_field(solve_q, s, omega, mollifier, h,
                               record_pad=pad, t_end=t_hi, memo_dir=memo_dir)
            g = fld.grid
            pts = g.points()
            nt = len(fld.values)
            W = np.zeros((nt, len(p_cols)))
            live = np.zeros(nt, dtype=bool)
            for k in range(nt):
                t = fld.t0 + fld.dt * k
                qs = weight_q(t, pts)
                if not np.any(qs):
                    continue
                live[k] = True
                vol = (qs * fld.values[k].reshape(-1)).reshape(g.dims)
                W[k] = _gather_plane(vol, g, p_cols, omega, h, extent)
            if not live.any():
                continue
            tk = fld.t0 + fld.dt * np.arange(nt)
            for i, j in entries:
                spv = sigmap[i] - sigma[j]
                ker = mollifier(tk[:, None] + spv + p_cols[None, :])
                out[i, j, jd] = np.sum(W * ker) * fld.dt * dp
    return out


def _pairing_cube_plus(weight_q, solve_q, sigmap, sigma, dirset, mollifier, *,
                       h, memo_dir=None):
    """Cube of Int weight * d_eta(t + s - x.w) * u_plus(solve_q; s', -w).

    Grouped by s' = sigma' - sigma: one plus-solve serves its diagonal, and
    the incident profile restricted to the plane x.w = p is d_eta(t + s - p).
    """
    sigmap = np.asarray(sigmap, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    out = np.zeros((len(sigmap), len(sigma), len(dirset)))
    if solve_q.sup_norm() == 0.0 or weight_q.sup_norm() == 0.0:
        return out
    r_w = weight_q.support_radius
    pad = max(0.0, r_w - solve_q.support_radius) + h
    t_lo = min(solve_q.t_support[0], weight_q.t_support[0]) - 2 * h
    p_cols, dp = _measure_cols(r_w, mollifier.eta, h)
    extent = r_w + 2 * h
    groups = _group_values(sigmap[:, None] - sigma[None, :])
    for jd, omega in enumerate(dirset.dirs):
        omegap = -np.asarray(omega, dtype=float)
        for sp, entries in groups.items():
            fld = _plus_field(solve_q, sp, omegap, mollifier, h,
                              record_pad=pad, t_start=t_lo, memo_dir=memo_dir)
            g = fld.grid
            pts = g.points()
            nt = len(fld.values)
            W = np.zeros((nt, len(p_cols)))
            live = np.zeros(nt, dtype=bool)
            for k in range(nt):
                t = fld.t0 + fld.dt * k
                qs = weight_q(t, pts)
                if not np.any(qs):
                    continue
                live[k] = True
                vol = (qs * fld.values[k].reshape(-1)).reshape(g.dims)
                W[k] = _gather_plane(vol, g, p_cols, omega, h, extent)
            if not live.any():
                continue
            tk = fld.t0 + fld.dt * np.arange(nt)
            for i, j in entries:
                sv = sigmap[i] + sigma[j]
                ker = mollifier(tk[:, None] + sv - p_cols[None, :])
                out[i, j, jd] = np.sum(W * ker) * fld.dt * dp
    return out


def _read_field(field, t, pts_idx):
    # linear in t between recorded levels, exact node reads in space
    tq = (t - field.t0) / field.dt
    nt = len(field.values)
    if tq < -1e-9 or tq > nt - 1 + 1e-9:
        return 0.0
    k0 = min(max(int(math.floor(tq)), 0), nt - 2) if nt > 1 else 0
    w = tq - k0
    a = map_coordinates(field.values[k0], pts_idx, order=1, mode="constant",
                        cval=0.0, prefilter=False)
    if nt == 1 or w == 0.0:
        return a
    b = map_coordinates(field.values[k0 + 1], pts_idx, order=1,
                        mode="constant", cval=0.0, prefilter=False)
    return a + w * (b - a)


def _cross_cube(weight_q, q1, q2, sigmap, sigma, dirset, mollifier, *, h,
                memo_dir=None):
    """Cube of Int weight * u_minus(q1; s, w) * u_plus(q2; s', -w)."""
    sigmap = np.asarray(sigmap, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    out = np.zeros((len(sigmap), len(sigma), len(dirset)))
    if (weight_q.sup_norm() == 0.0 or q1.sup_norm() == 0.0
            or q2.sup_norm() == 0.0):
        return out
    r_w = weight_q.support_radius
    pad1 = max(0.0, r_w - q1.support_radius) + h
    pad2 = max(0.0, r_w - q2.support_radius) + h
    t_hi = max(q1.t_support[1], weight_q.t_support[1])
    t_lo = min(q2.t_support[0], weight_q.t_support[0]) - 2 * h
    groups = _group_values(sigmap[:, None] + sigma[None, :])
    for jd, omega in enumerate(dirset.dirs):
        omegap = -np.asarray(omega, dtype=float)
        plus_cache = {}
        for s, entries in groups.items():
            f1 = _minus_field(q1, s, omega, mollifier, h, record_pad=pad1,
                              t_end=t_hi, memo_dir=memo_dir)
            g1 = f1.grid
            pts = g1.points()
            nt = len(f1.values)
            for i, j in entries:
                spv = round(float(sigmap[i] - sigma[j]), 9)
                f2 = plus_cache.get(spv)
                if f2 is None:
                    f2 = _plus_field(q2, spv, omegap, mollifier, h,
                                     record_pad=pad2, t_start=t_lo,
                                     memo_dir=memo_dir)
                    plus_cache[spv] = f2
                idx2 = f2.grid.world_to_index(pts).T
                acc = 0.0
                for k in range(nt):
                    t = f1.t0 + f1.dt * k
                    qs = weight_q(t, pts)
                    if not np.any(qs):
                        continue
                    v2 = _read_field(f2, t, idx2)
                    acc += float(np.sum(qs * f1.values[k].reshape(-1) * v2))
                out[i, j, jd] = acc * g1.h ** 3 * f1.dt
    return out


def backscatter_cube(q, sigmap, sigma, dirset, mollifier, *, backend="born",
                     h=0.05, field_h=0.05, memo_dir=None):
    """Backscattering data cube A~(sigma', sigma, w) = A(s', -w, s, w).

    s = sigma' + sigma, s' = sigma' - sigma.  backend="born" synthesizes the
    whole cube from the near-front expansion; backend="fdtd" keeps the exact
    incident-incident term and replaces the expansion terms with solver runs,
    one per distinct (s, w), shared across each anti-diagonal.
    """
    sigmap = np.asarray(sigmap, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if backend == "born":
        return born_cube(q, sigmap, sigma, dirset, mollifier, field_h=field_h)
    if backend != "fdtd":
        raise ValueError("backend must be 'born' or 'fdtd'")
    base = born_cube(q, sigmap, sigma, dirset, mollifier, field_h=field_h,
                     terms="incident")
    pair = _pairing_cube(q, q, sigmap, sigma, dirset, mollifier, h=h,
                         memo_dir=memo_dir)
    meta = {"backend": "fdtd", "h": h, "t_step": base.meta["t_step"],
            "p_step": base.meta["p_step"], "potential": q.content_hash()}
    return DataCube(sigmap, sigma, dirset, base.values + pair,
                    mollifier.eta, meta)


def m_component(q1, q2, dq, sigmap, sigma, dirset, mollifier, which="total",
                *, h=0.05, field_h=0.05, memo_dir=None):
    """One piece (or the sum) of the pseudolinearized data map at probe dq.

    With backgrounds q1, q2 the data difference is the total applied to
    dq = q1 - q2; the 00 piece is the linear incident-incident term and the
    10 / 01 / 11 pieces carry one or two scattered factors, so their size is
    controlled by the background amplitudes.
    """
    if which not in ("00", "10", "01", "11", "total"):
        raise ValueError("which must be '00', '10', '01', '11' or 'total'")
    sigmap = np.asarray(sigmap, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    need = ("00", "10", "01", "11") if which == "total" else (which,)
    vals = np.zeros((len(sigmap), len(sigma), len(dirset)))
    if "00" in need:
        vals = vals + born_cube(dq, sigmap, sigma, dirset, mollifier,
                                field_h=field_h, terms="incident").values
    if "10" in need:
        vals = vals + _pairing_cube(dq, q1, sigmap, sigma, dirset, mollifier,
                                    h=h, memo_dir=memo_dir)
    if "01" in need:
        vals = vals + _pairing_cube_plus(dq, q2, sigmap, sigma, dirset,
                                         mollifier, h=h, memo_dir=memo_dir)
    if "11" in need:
        vals = vals + _cross_cube(dq, q1, q2, sigmap, sigma, dirset,
                                  mollifier, h=h, memo_dir=memo_dir)
    meta = {"backend": "fdtd", "which": which, "h": h,
            "background": (q1.content_hash(), q2.content_hash()),
            "probe": dq.content_hash()}
    return DataCube(sigmap, sigma, dirset, vals, mollifier.eta, meta)
