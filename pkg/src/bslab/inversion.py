"""Reconstruction from backscattering data and stability measurements.

Each sigma' slice of the data cube is (up to the delta-pair weight and the
mollifier smoothing) a Radon sinogram of the time slice t = -sigma', so the
potential is recovered slice by slice with filtered backprojection.  On top
of that sit a linear forward model for sampled potentials, a fixed-point
refinement loop, and the stability-constant probes.
"""

import math
from dataclasses import dataclass

import numpy as np

from .born import _axis_step
from .core import (DataCube, Mollifier, Sinogram, SpaceTimeField,
                   linf_l2_norm)
from .radon import data_norm, fbp_inverse, radon_forward
from .scattering import backscatter_cube, m_component

TWO_PI = 2.0 * math.pi


def delta_delta_weight(cos_angle, *, normalized=True):
    """Weight of the product of the two measuring-plane deltas.

    The planes t+s-x.w = 0 and t+s'-x.w' = 0 meet in a codimension-two
    plane; the raw coarea density of delta*delta on it is
    (4 - (1 + w.w')^2)^(-1/2), which is 1/2 at backscattering w' = -w.
    normalized=True rescales by that backscattering value, giving
    2 (4 - (1 + w.w')^2)^(-1/2), equal to one at w' = -w.
    """
    c = float(cos_angle)
    if not -1.0 <= c <= 1.0:
        raise ValueError("cos_angle must lie in [-1, 1]")
    det = 4.0 - (1.0 + c) ** 2
    if det <= 0.0:
        raise ValueError("forward geometry w' = w has no transversal "
                         "intersection")
    w = det ** -0.5
    return 2.0 * w if normalized else w


# -- mollification kernel of the incident-incident data -------------------------

def _mollifier_transfer(mollifier, xi):
    # continuous Fourier transform of the mollifier profile on frequencies xi
    u, vals = mollifier.grid
    return np.trapezoid(vals[None, :] * np.exp(-1j * np.multiply.outer(xi, u)),
                        u, axis=1)


def _pair_kernel_transfer(mollifier, k1, k2):
    """Transfer of the (sigma', sigma) smoothing of the delta-delta data.

    The mollified pairing reads d_eta(a+b) d_eta(a-b) against shifts a
    along sigma' and b along sigma; in rotated arguments the transfer
    factorizes as m^((k1+k2)/2) m^((k1-k2)/2).
    """
    K1, K2 = np.meshgrid(k1, k2, indexing="ij")
    half_sum = _mollifier_transfer(mollifier, ((K1 + K2) / 2.0).ravel())
    half_diff = _mollifier_transfer(mollifier, ((K1 - K2) / 2.0).ravel())
    return (half_sum * half_diff).reshape(K1.shape)


def _apply_pair_kernel(values, dsp, dsig, mollifier, *, inverse,
                       cap_ratio=0.2, rolloff=0.8):
    """Forward or capped-inverse smoothing kernel on the (sigma', sigma) axes.

    With a single sigma' row the kernel degenerates to its sigma marginal,
    transfer m^(k/2)^2.  The inverse caps the amplification at 1/cap_ratio
    so discretization junk beyond the mollifier band stays unamplified.
    """
    from .radon import _rolloff as roll

    nsp, nsig = values.shape[0], values.shape[1]
    p2 = 2 * nsig
    k2 = TWO_PI * np.fft.rfftfreq(p2, d=dsig)
    if nsp == 1:
        T = _mollifier_transfer(mollifier, k2 / 2.0) ** 2
        T = T[None, :]
        p1 = 1
    else:
        p1 = 2 * nsp
        k1 = TWO_PI * np.fft.fftfreq(p1, d=dsp)
        T = _pair_kernel_transfer(mollifier, k1, k2)
    if inverse:
        tmax = np.max(np.abs(T))
        safe = np.abs(T) >= cap_ratio * tmax
        mult = np.zeros_like(T)
        mult[safe] = 1.0 / T[safe]
        mult = mult * roll(k2[None, :] / (math.pi / dsig), rolloff)
        if nsp > 1:
            mult = mult * roll(np.abs(k1)[:, None] / (math.pi / dsp), rolloff)
    else:
        mult = T
    F = np.fft.rfftn(values, s=(p1, p2), axes=(0, 1))
    out = np.fft.irfftn(F * mult[..., None], s=(p1, p2), axes=(0, 1))
    return out[:nsp, :nsig]


# -- slice-wise linear reconstruction --------------------------------------------

def linearized_reconstruct(cube, grid, *, rho=1.0, deconvolve=True,
                           t_support=None, rolloff=0.8, upsample=4,
                           cap_ratio=0.2):
    """Invert the data cube slice by slice onto grid, times t = -sigma'.

    Each sigma' slice, divided by the backscattering delta-pair weight (and
    optionally deconvolved from the mollifier smoothing), is a sinogram of
    the time slice t = -sigma'; filtered backprojection recovers it.  The
    output vanishes outside |x| <= rho.  Passing the true potential's
    t_support validates the sigma' coverage of the slices.
    """
    sigmap = np.asarray(cube.sigmap, dtype=float)
    dsp = _axis_step(sigmap, "sigma'") if len(sigmap) > 1 else 0.0
    if t_support is not None:
        lo_need, hi_need = -t_support[1], -t_support[0]
        if sigmap[0] > lo_need + 1e-12 or sigmap[-1] < hi_need - 1e-12:
            raise ValueError(
                f"sigma' grid [{sigmap[0]:.4f}, {sigmap[-1]:.4f}] does not "
                f"cover the slices of [{lo_need:.4f}, {hi_need:.4f}]")
    vals = cube.values / delta_delta_weight(-1.0, normalized=False)
    if deconvolve and cube.eta > 0.0:
        mol = Mollifier(cube.eta)
        dsig = _axis_step(np.asarray(cube.sigma, dtype=float), "sigma")
        vals = _apply_pair_kernel(vals, dsp or 1.0, dsig, mol, inverse=True,
                                  cap_ratio=cap_ratio, rolloff=rolloff)
    pts = grid.points()
    mask = (np.sum(pts * pts, axis=1) <= rho * rho).reshape(grid.dims)
    out = np.empty((len(sigmap),) + grid.dims)
    for i, sp in enumerate(sigmap):
        sino = Sinogram(np.asarray(cube.sigma, dtype=float), cube.dirset,
                        vals[i], {"kind": "data_slice"})
        out[len(sigmap) - 1 - i] = fbp_inverse(sino, grid, rolloff,
                                               upsample) * mask
    meta = {"kind": "reconstruction", "method": "linearized",
            "eta": cube.eta, "rho": rho, "deconvolve": bool(deconvolve)}
    return SpaceTimeField(grid, -sigmap[-1], dsp, out, meta)


def linearized_forward(field, sigmap, sigma, dirset, mollifier):
    """Predict the incident-incident data of a sampled potential.

    The exact model: one half of the Radon transform of the slice
    t = -sigma', smoothed by the two-mollifier pair kernel on the
    (sigma', sigma) axes.  Every -sigma' must land on the field's time
    lattice; the sigma grid should reach past the support so the smoothing
    reads only zeros beyond it.
    """
    sigmap = np.asarray(sigmap, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    vals = np.zeros((len(sigmap), len(sigma), len(dirset)))
    meta = {"kind": "data_cube", "backend": "linearized",
            "t_step": None, "p_step": float(sigma[1] - sigma[0])
            if len(sigma) > 1 else None}
    if not field.values.any():
        return DataCube(sigmap, sigma, dirset, vals, mollifier.eta, meta)
    nt = len(field.values)
    for i, sp in enumerate(sigmap):
        k = (-sp - field.t0) / field.dt if field.dt else 0.0
        kr = int(round(k))
        if not 0 <= kr <= nt - 1 or abs(k - kr) > 1e-6:
            raise ValueError(
                f"slice t = {-sp:.6f} is not on the field's time lattice")
        vals[i] = radon_forward(field.values[kr], field.grid, sigma,
                                dirset).values
    dsp = _axis_step(sigmap, "sigma'") if len(sigmap) > 1 else 0.0
    dsig = _axis_step(sigma, "sigma")
    vals = _apply_pair_kernel(vals, dsp or 1.0, dsig, mollifier,
                              inverse=False)
    vals *= delta_delta_weight(-1.0, normalized=False)
    return DataCube(sigmap, sigma, dirset, vals, mollifier.eta, meta)


# -- fixed-point refinement --------------------------------------------------------

@dataclass
class IterationResult:
    field: SpaceTimeField
    residuals: list
    diverged: bool


def born_iterate(data, q0, iters, *, grid, rho=1.0, deconvolve=True,
                 rolloff=0.8, upsample=4):
    """Refine a reconstruction: q_{k+1} = q_k + reconstruct(data - predict(q_k)).

    q0 is a potential (sampled onto the slice lattice) or an already sampled
    SpaceTimeField on the right grid.  The residual log holds the data-norm
    of data - predict(q_k) for every iterate including the last; if the
    residual grows two steps running the loop halts and the best iterate is
    returned with the diverged flag set.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    sigmap = np.asarray(data.sigmap, dtype=float)
    dsp = _axis_step(sigmap, "sigma'") if len(sigmap) > 1 else 0.0
    mol = Mollifier(data.eta)
    if isinstance(q0, SpaceTimeField):
        if q0.grid.dims != grid.dims or len(q0.values) != len(sigmap):
            raise ValueError("initial field does not match the grid and "
                             "sigma' lattice")
        v = q0
    else:
        pts = grid.points()
        slices = np.stack([np.asarray(q0(-sp, pts), dtype=float)
                           .reshape(grid.dims) for sp in sigmap[::-1]])
        v = SpaceTimeField(grid, -sigmap[-1], dsp, slices,
                           {"kind": "iterate"})
    residuals = []
    best = v
    diverged = False
    for _ in range(iters):
        resid = data - linearized_forward(v, sigmap, data.sigma, data.dirset,
                                          mol)
        r = data_norm(resid)
        residuals.append(r)
        if r <= min(residuals):
            best = v
        if len(residuals) >= 3 and residuals[-1] > residuals[-2] > residuals[-3]:
            diverged = True
            break
        upd = linearized_reconstruct(resid, grid, rho=rho,
                                     deconvolve=deconvolve, rolloff=rolloff,
                                     upsample=upsample)
        v = SpaceTimeField(grid, v.t0, v.dt, v.values + upd.values,
                           {"kind": "iterate"})
    if not diverged:
        resid = data - linearized_forward(v, sigmap, data.sigma, data.dirset,
                                          mol)
        residuals.append(data_norm(resid))
        if residuals[-1] <= min(residuals):
            best = v
        if len(residuals) >= 3 and residuals[-1] > residuals[-2] > residuals[-3]:
            diverged = True
    final = v if not diverged else best
    if diverged or residuals[-1] > residuals[0]:
        final = best
    return IterationResult(final, residuals, diverged)


# -- stability measurements ---------------------------------------------------------

def reconstruction_report(field, q):
    """Per-slice L2 errors of a reconstruction against the true potential."""
    pts = field.grid.points()
    h = field.grid.h
    times = field.t0 + field.dt * np.arange(len(field.values))
    errs = np.empty(len(times))
    norms = np.empty(len(times))
    for k, t in enumerate(times):
        truth = np.asarray(q(t, pts), dtype=float)
        d = field.values[k].reshape(-1) - truth
        errs[k] = math.sqrt(float(d @ d)) * h ** 1.5
        norms[k] = math.sqrt(float(truth @ truth)) * h ** 1.5
    peak = float(np.max(norms))
    return {"times": times, "slice_errors": errs, "slice_norms": norms,
            "rel_linf_l2": float(np.max(errs)) / peak if peak > 0 else
            float(np.max(errs))}


def lipschitz_ratio(q1, q2, cube1, cube2, *, grid=None, times=None, m=1):
    """Stability quotient |q1-q2|_{LinfL2} / |data1-data2| in the H^m norm."""
    den = data_norm(cube1 - cube2, m=m)
    if den < 1e-14:
        raise ValueError("data cubes are identical; the stability ratio is "
                         "undefined")
    dq = q1 - q2
    if grid is None:
        from .core import Grid3
        r = dq.support_radius
        grid = Grid3.from_radius(r, 2.0 * r / 40.0)
    if times is None:
        t0, t1 = dq.t_support
        times = np.arange(t0, t1 + 0.025, 0.05)
    pts = grid.points()
    vals = np.stack([np.asarray(dq(t, pts), dtype=float) for t in times])
    return linf_l2_norm(vals, grid.h) / den


def pseudolin_residual(q1, q2, sigmap, sigma, dirset, mollifier, *, h=0.05,
                       field_h=0.05, memo_dir=None):
    """Relative gap between the data difference and its bilinear form.

    Left side: two independent data syntheses.  Right side: the four-piece
    pairing of q1 - q2 with the scattering solutions of q1 and q2.  Returns
    the relative L2 discrepancy over the sample set (absolute when the left
    side vanishes).
    """
    c1 = backscatter_cube(q1, sigmap, sigma, dirset, mollifier,
                          backend="fdtd", h=h, field_h=field_h,
                          memo_dir=memo_dir)
    c2 = backscatter_cube(q2, sigmap, sigma, dirset, mollifier,
                          backend="fdtd", h=h, field_h=field_h,
                          memo_dir=memo_dir)
    rhs = m_component(q1, q2, q1 - q2, sigmap, sigma, dirset, mollifier,
                      "total", h=h, field_h=field_h, memo_dir=memo_dir)
    lhs = c1.values - c2.values
    num = math.sqrt(float(np.sum((lhs - rhs.values) ** 2)))
    den = math.sqrt(float(np.sum(lhs * lhs)))
    return num / den if den > 0.0 else num
