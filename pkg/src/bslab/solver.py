"""Leapfrog solver for the wave equation with a time-dependent potential.

Scattered-field formulation: for an incident mollified plane wave
u_inc(t, x) = delta_eta(t + s - x.omega) (an exact free solution), the
scattered part solves

    (d_tt - Laplace + q) u_sc = -q u_inc,   u_sc = 0 for early t,

on a zero-Dirichlet box sized so reflections never reach the region of
interest: box_radius >= rho + (t_end - t_start) + 5 eta.  The incident wave
is analytic (never simulated), so runs start at the first interaction time
and the box stays small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import Grid3, Mollifier, SpaceTimeField

CFL_DEFAULT = 0.5


def stable_dt(h, cfl=CFL_DEFAULT):
    """Time step satisfying the 3-D stability bound dt <= cfl * h / sqrt(3)."""
    return cfl * h / math.sqrt(3.0)


def first_interaction_time(q, s, mollifier):
    """Earliest t at which the incident profile can overlap supp q."""
    return max(q.t_support[0], -s - q.support_radius - mollifier.support)


@dataclass
class _Recorder:
    slices: tuple
    stride: int
    grid: Grid3
    frames: list
    times: list

    def take(self, n, t, u):
        if n % self.stride == 0:
            self.frames.append(u[self.slices].copy())
            self.times.append(t)


def _box_for(q_rho, duration, eta, h, extra=0.0):
    radius = q_rho + duration + 5.0 * eta + extra
    return Grid3.from_radius(radius + h, h)


def _prepare_bump_arrays(q, grid, slices):
    """Per-bump spatial profiles on the potential subbox."""
    sub = grid.subgrid(slices)
    X, Y, Z = sub.meshgrid()
    pts = np.stack([X, Y, Z], axis=-1)
    return [b.spatial(pts) for b in q.bumps]


def _qsum_into(out_sub, q, phis, t):
    out_sub.fill(0.0)
    for b, phi in zip(q.bumps, phis):
        g = b.temporal(t)
        if g != 0.0:
            out_sub += (b.amplitude * g) * phi


def solve_scattered(
    q,
    s,
    omega,
    mollifier: Mollifier,
    h,
    *,
    cfl=CFL_DEFAULT,
    t_end=None,
    record="qbox",
    stride=1,
    record_pad=0.0,
    pair_times=(),
    energy_every=0,
    box_radius=None,
):
    """Propagate the scattered field for one incident parameter pair (s, omega).

    Parameters
    ----------
    record : 'qbox' (subbox covering supp q), 'full', or 'none'.
    stride : record every `stride`-th level.
    record_pad : widen the qbox record region by this length.
    pair_times : times at which to snapshot two consecutive full-grid levels
        (for time-derivative reads); nearest levels are used.
    energy_every : if > 0, sample the discrete energy invariant every k steps.

    Returns a SpaceTimeField of recorded slices; meta carries dt, the run
    window, the full grid, pair snapshots and energy samples.
    """
    omega = np.asarray(omega, dtype=float)
    dt = stable_dt(h, cfl)
    t_q0, t_q1 = q.t_support
    if t_end is None:
        t_end = t_q1
    t_first = first_interaction_time(q, s, mollifier)
    t_start = t_first - 2.0 * dt

    meta = {
        "s": float(s), "omega": tuple(omega), "eta": mollifier.eta, "h": h,
        "dt": dt, "cfl": cfl, "t_first": t_first, "kind": "scattered_minus",
    }

    rec_radius = q.support_radius + 2 * h + record_pad

    if t_first >= t_q1:
        # incident support arrives after the potential has switched off
        grid = Grid3.from_radius(rec_radius, h)
        vals = np.zeros((1,) + grid.dims)
        meta.update({"t_end": t_end, "trivial": True, "pairs": [], "full_grid": grid})
        return SpaceTimeField(grid, t_start, dt, vals, meta)

    nt = int(math.ceil((t_end - t_start) / dt)) + 1
    duration = dt * (nt - 1)
    if box_radius is None:
        grid = _box_for(q.rho, duration, mollifier.eta, h)
    else:
        grid = Grid3.from_radius(box_radius, h)
    meta.update({"t_end": t_end, "box_radius": grid.radius, "trivial": False})

    qsl = grid.index_box((0.0, 0.0, 0.0), q.support_radius + h)
    phis = _prepare_bump_arrays(q, grid, qsl)
    qsum = np.zeros(grid.dims)
    qsum_sub = qsum[qsl]

    X, Y, Z = grid.meshgrid()
    xdotw = X * omega[0] + Y * omega[1] + Z * omega[2]
    del X, Y, Z

    prof_u, prof_v = mollifier.grid
    p0 = float(prof_u[0])
    inv_dp = 1.0 / float(prof_u[1] - prof_u[0])

    if record == "full":
        rsl = tuple(slice(0, d) for d in grid.dims)
    elif record == "qbox":
        rsl = grid.index_box((0.0, 0.0, 0.0), rec_radius)
    elif record == "none":
        rsl = tuple(slice(0, 1) for _ in range(3))
    else:
        raise ValueError(f"unknown record mode {record!r}")
    rec = _Recorder(rsl, stride, grid.subgrid(rsl), [], [])

    pair_levels = {min(max(int(round((t - t_start) / dt)), 0), nt - 2)
                   for t in pair_times}
    pairs = []

    u_prev = np.zeros(grid.dims)
    u = np.zeros(grid.dims)
    dt2 = dt * dt
    inv_h2 = 1.0 / (h * h)

    energies = []
    energy_t = []

    rec.take(0, t_start, u_prev)
    if nt > 1:
        rec.take(1, t_start + dt, u)

    for n in range(1, nt - 1):
        t_n = t_start + n * dt
        _qsum_into(qsum_sub, q, phis, t_n)
        _kernels.step_scattered(
            u_prev, u, qsum, xdotw, t_n + s, prof_v, p0, inv_dp, dt2, inv_h2
        )
        u_prev, u = u, u_prev  # u_prev = level n, u = level n+1
        if n & 31 == 0 and not math.isfinite(float(np.max(np.abs(u)))):
            raise FloatingPointError("solver produced non-finite values (instability)")
        rec.take(n + 1, t_n + dt, u)
        if energy_every and n % energy_every == 0:
            energies.append(_kernels.energy_invariant(u_prev, u, qsum, dt, h))
            energy_t.append(t_n + 0.5 * dt)
        if n in pair_levels:
            pairs.append((t_n, u_prev.copy(), u.copy()))

    meta["pairs"] = pairs
    meta["full_grid"] = grid
    if energy_every:
        meta["energy"] = np.asarray(energies)
        meta["energy_t"] = np.asarray(energy_t)
    vals = np.stack(rec.frames, axis=0) if rec.frames else np.zeros((0,) + rec.grid.dims)
    return SpaceTimeField(rec.grid, rec.times[0] if rec.times else t_start,
                          dt * stride, vals, meta)


def solve_scattered_plus(q, sp, omegap, mollifier, h, *, t_start=None, **kw):
    """Outgoing-at-negative-times solution via time reversal.

    u_plus(t, x; s', w') = u_minus(-t, x; -s', -w') for the time-reversed
    potential q(-t, x); implemented by one minus-solve and a sample flip.
    t_start extends the recording below the default (the lower end of q's
    time support), for pairings weighted by something supported earlier.
    """
    t_end_rev = -q.t_support[0] if t_start is None else -float(t_start)
    field = solve_scattered(q.time_reversed(), -sp, -np.asarray(omegap), mollifier, h,
                            t_end=t_end_rev, **kw)
    out = field.time_reversed()
    out.meta = dict(field.meta)
    out.meta.update({"kind": "scattered_plus", "s": float(sp),
                     "omega": tuple(np.asarray(omegap, dtype=float))})
    return out


def solve_free(u0, v0, grid, nt, *, cfl=CFL_DEFAULT, energy_every=1, record="none",
               stride=1):
    """Free evolution (q = 0) from initial displacement u0 and velocity v0.

    The second level is built by a discrete Taylor step consistent with the
    leapfrog stencil, so the energy invariant is constant from the first
    pair on.
    """
    h = grid.h
    dt = stable_dt(h, cfl)
    dt2 = dt * dt
    inv_h2 = 1.0 / (h * h)

    u_prev = np.asarray(u0, dtype=float).copy()
    lap = np.zeros_like(u_prev)
    c = u_prev[1:-1, 1:-1, 1:-1]
    lap[1:-1, 1:-1, 1:-1] = (
        u_prev[:-2, 1:-1, 1:-1] + u_prev[2:, 1:-1, 1:-1]
        + u_prev[1:-1, :-2, 1:-1] + u_prev[1:-1, 2:, 1:-1]
        + u_prev[1:-1, 1:-1, :-2] + u_prev[1:-1, 1:-1, 2:]
        - 6.0 * c
    ) * inv_h2
    u = u_prev + dt * np.asarray(v0, dtype=float) + 0.5 * dt2 * lap
    u[0, :, :] = u[-1, :, :] = 0.0
    u[:, 0, :] = u[:, -1, :] = 0.0
    u[:, :, 0] = u[:, :, -1] = 0.0
    del lap

    if record == "full":
        rsl = tuple(slice(0, d) for d in grid.dims)
    else:
        rsl = tuple(slice(0, 1) for _ in range(3))
    rec = _Recorder(rsl, stride, grid.subgrid(rsl), [], [])
    rec.take(0, 0.0, u_prev)
    rec.take(1, dt, u)

    energies = []
    energy_t = []
    if energy_every:
        energies.append(_kernels.energy_invariant_free(u_prev, u, dt, h))
        energy_t.append(0.5 * dt)

    for n in range(1, nt - 1):
        _kernels.step_free(u_prev, u, dt2, inv_h2)
        u_prev, u = u, u_prev
        if n & 31 == 0 and not math.isfinite(float(np.max(np.abs(u)))):
            raise FloatingPointError("solver produced non-finite values (instability)")
        rec.take(n + 1, (n + 1) * dt, u)
        if energy_every and n % energy_every == 0:
            energies.append(_kernels.energy_invariant_free(u_prev, u, dt, h))
            energy_t.append((n + 0.5) * dt)

    meta = {
        "dt": dt, "cfl": cfl, "h": h, "kind": "free",
        "energy": np.asarray(energies), "energy_t": np.asarray(energy_t),
        "final_pair": (u_prev, u),
    }
    vals = np.stack(rec.frames, axis=0) if rec.frames else np.zeros((0,) + rec.grid.dims)
    return SpaceTimeField(rec.grid, 0.0, dt * stride, vals, meta)


def solve_source(source, t_support, space_radius, h, t_end, *, cfl=CFL_DEFAULT,
                 box_radius=None, pair_times=(), record="none", stride=1):
    """Forced free wave (d_tt - Laplace) u = source(t, x), zero initial data.

    `source` is a callable (t, pts[..., 3]) -> array, supported in
    |x| <= space_radius and t in t_support.
    """
    dt = stable_dt(h, cfl)
    t_start = t_support[0] - 2.0 * dt
    nt = int(math.ceil((t_end - t_start) / dt)) + 1
    duration = dt * (nt - 1)
    if box_radius is None:
        radius = space_radius + duration + 2 * h
        grid = Grid3.from_radius(radius, h)
    else:
        grid = Grid3.from_radius(box_radius, h)

    ssl = grid.index_box((0.0, 0.0, 0.0), space_radius + h)
    sub = grid.subgrid(ssl)
    X, Y, Z = sub.meshgrid()
    spts = np.stack([X, Y, Z], axis=-1)
    src = np.zeros(grid.dims)
    src_sub = src[ssl]

    if record == "full":
        rsl = tuple(slice(0, d) for d in grid.dims)
    elif record == "qbox":
        rsl = grid.index_box((0.0, 0.0, 0.0), space_radius + 2 * h)
    else:
        rsl = tuple(slice(0, 1) for _ in range(3))
    rec = _Recorder(rsl, stride, grid.subgrid(rsl), [], [])

    pair_levels = {min(max(int(round((t - t_start) / dt)), 0), nt - 2)
                   for t in pair_times}
    pairs = []

    u_prev = np.zeros(grid.dims)
    u = np.zeros(grid.dims)
    dt2 = dt * dt
    inv_h2 = 1.0 / (h * h)

    rec.take(0, t_start, u_prev)
    rec.take(1, t_start + dt, u)

    for n in range(1, nt - 1):
        t_n = t_start + n * dt
        if t_support[0] <= t_n <= t_support[1]:
            src_sub[...] = source(t_n, spts)
        else:
            src_sub.fill(0.0)
        _kernels.step_source(u_prev, u, src, dt2, inv_h2)
        u_prev, u = u, u_prev  # u_prev = level n, u = level n+1
        rec.take(n + 1, t_n + dt, u)
        if n in pair_levels:
            pairs.append((t_n, u_prev.copy(), u.copy()))

    meta = {"dt": dt, "cfl": cfl, "h": h, "kind": "source", "t_start": t_start,
            "box_radius": grid.radius, "pairs": pairs, "full_grid": grid}
    vals = np.stack(rec.frames, axis=0) if rec.frames else np.zeros((0,) + rec.grid.dims)
    return SpaceTimeField(rec.grid, rec.times[0] if rec.times else t_start,
                          dt * stride, vals, meta)


def energy_series(field: SpaceTimeField, q=None):
    """Discrete invariant for each consecutive recorded pair (stride-1 runs)."""
    dt = field.dt
    h = field.grid.h
    out = []
    if q is None:
        for n in range(field.nt - 1):
            out.append(_kernels.energy_invariant_free(
                field.values[n], field.values[n + 1], dt, h))
    else:
        X, Y, Z = field.grid.meshgrid()
        pts = np.stack([X, Y, Z], axis=-1)
        ts = field.times()
        for n in range(field.nt - 1):
            qs = np.ascontiguousarray(q(ts[n], pts))
            out.append(_kernels.energy_invariant(
                field.values[n], field.values[n + 1], qs, dt, h))
    return np.asarray(out)
