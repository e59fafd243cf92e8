"""Five-dimensional off-shell field content on uniform grids.

Grid layout: arrays are indexed ``[i0, i1, i2, i3, itau, comp]`` with four
spacetime axes, the evolution-parameter axis, and a trailing component
axis of size 5 ordered (a^0, a^1, a^2, a^3, a^5).  The wave operator is
the 5-axis cross stencil of second-order central differences with
signature (-1, +1, +1, +1, sigma), sigma the fifth-coordinate signature.
This module checks and constructs prescribed fields; it does not
time-step them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (GridTooSmall, NonConvergentTail, NonUniformSampling,
                     NotAGaugeFunction)

__all__ = [
    "Grid4",
    "Current5",
    "ModeField",
    "wave_residual",
    "mode_residual",
    "fourier_modes",
    "modes_to_samples",
    "zero_mode_reduce",
    "gauge_transform",
    "gauge_divergence",
    "grid_field_strength",
    "save_grid_field",
    "load_grid_field",
    "stencil_symbol",
    "spatial_stencil_symbol",
    "discrete_frequency_for",
]

N_COMP = 5
ETA_DIAG = np.array([-1.0, 1.0, 1.0, 1.0])
_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class Grid4:
    """Uniform rectangular sampling of (x^0..x^3) plus a tau axis."""

    shape: tuple
    origin: tuple
    spacing: tuple
    ntau: int
    tau0: float
    dtau: float
    sigma: int = 1

    def __post_init__(self):
        if len(self.shape) != 4 or len(self.origin) != 4 or len(self.spacing) != 4:
            raise ValueError("shape, origin, spacing must all have 4 entries")
        if any(n < 4 for n in self.shape) or self.ntau < 4:
            raise GridTooSmall("every axis needs at least 4 points")
        if any(h <= 0 for h in self.spacing) or self.dtau <= 0:
            raise NonUniformSampling("spacings must be positive")
        if self.sigma not in (1, -1):
            raise ValueError("sigma must be +1 or -1")

    @property
    def full_shape(self):
        return tuple(self.shape) + (self.ntau,)

    def axis(self, a):
        """Coordinate values along spacetime axis a (0..3) or the tau axis (4)."""
        if a == 4:
            return self.tau0 + self.dtau * np.arange(self.ntau)
        return self.origin[a] + self.spacing[a] * np.arange(self.shape[a])

    def meshgrid(self):
        """Broadcastable coordinate arrays (X0, X1, X2, X3, TAU)."""
        axes = [self.axis(a) for a in range(5)]
        return np.meshgrid(*axes, indexing="ij", sparse=True)

    def steps(self):
        return tuple(self.spacing) + (self.dtau,)

    def signature(self):
        return np.concatenate([ETA_DIAG, [float(self.sigma)]])


@dataclass(frozen=True)
class Current5:
    """Five-current built from callables j^mu(x, tau) and rho(x, tau)."""

    j: object            # callable (x, tau) -> (4,)
    rho: object          # callable (x, tau) -> float

    def sample(self, grid: Grid4) -> np.ndarray:
        out = np.empty(grid.full_shape + (N_COMP,))
        axes = [grid.axis(a) for a in range(4)]
        taus = grid.axis(4)
        for idx in np.ndindex(*grid.shape):
            x = np.array([axes[a][idx[a]] for a in range(4)])
            for it, tau in enumerate(taus):
                out[idx + (it,)][:4] = self.j(x, tau)
                out[idx + (it, 4)] = self.rho(x, tau)
        return out


@dataclass
class ModeField:
    """One tau-Fourier mode: frequency s, complex 5-component amplitude."""

    s: float
    amplitude: np.ndarray        # (n0, n1, n2, n3, 5) complex
    sigma: int = 1

    def __post_init__(self):
        if self.sigma not in (1, -1):
            raise ValueError("sigma must be +1 or -1")


def _second_diff(f, axis, h):
    """Central second difference along one axis; output trimmed on that axis."""
    sl = [slice(None)] * f.ndim
    lo, mid, hi = list(sl), list(sl), list(sl)
    lo[axis] = slice(0, -2)
    mid[axis] = slice(1, -1)
    hi[axis] = slice(2, None)
    return (f[tuple(hi)] - 2.0 * f[tuple(mid)] + f[tuple(lo)]) / h ** 2


def _trim_interior(f, axes):
    sl = [slice(None)] * f.ndim
    for a in axes:
        sl[a] = slice(1, -1)
    return f[tuple(sl)]


def _dalembert_5d(a, grid: Grid4):
    """Discrete d_alpha d^alpha a on the interior (all five axes trimmed)."""
    steps = grid.steps()
    sig = grid.signature()
    out = None
    for axis in range(5):
        term = sig[axis] * _second_diff(a, axis, steps[axis])
        term = _trim_interior(term, [ax for ax in range(5) if ax != axis])
        out = term if out is None else out + term
    return out


def _box4(a, grid: Grid4):
    """Discrete d_mu d^mu on the four spacetime axes only."""
    out = None
    for axis in range(4):
        term = ETA_DIAG[axis] * _second_diff(a, axis, grid.spacing[axis])
        term = _trim_interior(term, [ax for ax in range(4) if ax != axis])
        out = term if out is None else out + term
    return out


def gauge_divergence(a, grid: Grid4):
    """Discrete d_alpha a^alpha (plain five-divergence) on the interior."""
    steps = grid.steps()
    out = None
    for axis in range(5):
        comp = a[..., axis if axis < 4 else 4]
        sl_hi = [slice(None)] * 5
        sl_lo = [slice(None)] * 5
        sl_hi[axis] = slice(2, None)
        sl_lo[axis] = slice(0, -2)
        term = (comp[tuple(sl_hi)] - comp[tuple(sl_lo)]) / (2.0 * steps[axis])
        term = _trim_interior(term, [ax for ax in range(5) if ax != axis])
        # the tau component of the divergence carries the fifth raising
        if axis == 4 and grid.sigma == -1:
            term = -term
        out = term if out is None else out + term
    return out


def wave_residual(a, j, grid: Grid4, gauge_warn_tol=1e-6):
    """Residual of -d_alpha d^alpha a^beta = j^beta on the interior.

    Returns (residual, gauge_violation).  ``gauge_violation`` is the max
    of the discrete five-divergence of a; a warning-level breach of the
    gauge condition does not abort the computation.
    """
    a = np.asarray(a)
    j = np.asarray(j)
    if a.shape != grid.full_shape + (N_COMP,):
        raise ValueError("field array does not match grid shape")
    resid = np.empty_like(_trim_interior(a, range(5)))
    for c in range(N_COMP):
        box = _dalembert_5d(a[..., c], grid)
        resid[..., c] = -box - _trim_interior(j[..., c], range(5))
    gauge_violation = float(np.max(np.abs(gauge_divergence(a, grid))))
    return resid, gauge_violation


def mode_residual(mode: ModeField, j_mode, grid: Grid4):
    """Residual of [sigma s^2 - d_mu d^mu] a(x, s) = j(x, s), spatial interior."""
    amp = np.asarray(mode.amplitude)
    j_mode = np.asarray(j_mode)
    if amp.shape[:4] != tuple(grid.shape):
        raise ValueError("mode amplitude does not match grid shape")
    out = np.empty_like(_trim_interior(amp, range(4)))
    mass = mode.sigma * mode.s ** 2
    for c in range(amp.shape[-1]):
        box = _box4(amp[..., c], grid)
        out[..., c] = (mass * _trim_interior(amp[..., c], range(4))
                       - box - _trim_interior(j_mode[..., c], range(4)))
    return out


def fourier_modes(a, grid: Grid4):
    """Decompose a (.., ntau, comp) sampling into tau-Fourier modes.

    Convention: samples are reconstructed as
        a(tau_n) = sum_k amp_k exp(-i s_k tau_n),
    with s_k on the discrete frequency lattice 2 pi fftfreq(ntau, dtau).
    The round trip :func:`modes_to_samples` is exact to rounding.
    """
    a = np.asarray(a)
    ntau = grid.ntau
    if a.shape[4] != ntau:
        raise NonUniformSampling("tau axis of field does not match the grid")
    coeff = np.fft.ifft(a, axis=4)
    freqs = 2.0 * np.pi * np.fft.fftfreq(ntau, grid.dtau)
    modes = []
    for k, s_k in enumerate(freqs):
        amp = coeff[:, :, :, :, k, :] * np.exp(1j * s_k * grid.tau0)
        modes.append(ModeField(s=float(s_k), amplitude=amp, sigma=grid.sigma))
    return modes


def modes_to_samples(modes, grid: Grid4):
    """Inverse of :func:`fourier_modes`."""
    taus = grid.axis(4)
    out = None
    for mode in modes:
        wave = np.exp(-1j * mode.s * taus)            # (ntau,)
        term = mode.amplitude[:, :, :, :, None, :] * wave[None, None, None, None, :, None]
        out = term if out is None else out + term
    return out


def zero_mode_reduce(a, j, grid: Grid4, tail_tol=1e-10):
    """Tau-integrated potentials and current, with the continuity residual.

    Returns (A, J, continuity_residual) where A^mu = integral a^mu dtau,
    J^mu = integral j^mu dtau by composite trapezoid on the grid, and the
    continuity residual is the discrete four-divergence of J on the
    interior.  Raises NonConvergentTail unless both tau-boundary slices are
    below ``tail_tol`` times the peak.
    """
    a = np.asarray(a)
    j = np.asarray(j)
    for name, f in (("a", a), ("j", j)):
        peak = np.max(np.abs(f))
        if peak == 0:
            continue
        tail = max(np.max(np.abs(f[:, :, :, :, 0, :])),
                   np.max(np.abs(f[:, :, :, :, -1, :])))
        if tail > tail_tol * peak:
            raise NonConvergentTail(
                f"tau tail of {name} is {tail:.3e} (> {tail_tol:.0e} of peak {peak:.3e})")
    A = _trapz(a[..., :4], dx=grid.dtau, axis=4)
    J = _trapz(j[..., :4], dx=grid.dtau, axis=4)
    div = None
    for axis in range(4):
        sl_hi = [slice(None)] * 4
        sl_lo = [slice(None)] * 4
        sl_hi[axis] = slice(2, None)
        sl_lo[axis] = slice(0, -2)
        term = (J[..., axis][tuple(sl_hi)] - J[..., axis][tuple(sl_lo)]) \
            / (2.0 * grid.spacing[axis])
        term = _trim_interior(term, [ax for ax in range(4) if ax != axis])
        div = term if div is None else div + term
    return A, J, div


def _grad5(lam, grid: Grid4):
    """Central-difference raised gradient of a scalar grid field.

    Returns d^alpha Lambda as a (.., 5) array.  The fifth component is the
    plain tau derivative: raising the index applies the fifth signature
    twice (once for the coordinate, once for the metric), so it cancels.
    Boundary entries are zero-filled and only meaningful after interior
    trimming.
    """
    steps = grid.steps()
    raising = np.concatenate([ETA_DIAG, [1.0]])
    out = np.zeros(lam.shape + (N_COMP,), dtype=np.result_type(lam, float))
    for axis in range(5):
        sl_hi = [slice(None)] * 5
        sl_lo = [slice(None)] * 5
        sl_mid = [slice(None)] * 5
        sl_hi[axis] = slice(2, None)
        sl_lo[axis] = slice(0, -2)
        sl_mid[axis] = slice(1, -1)
        grad = np.zeros_like(lam, dtype=out.dtype)
        grad[tuple(sl_mid)] = (lam[tuple(sl_hi)] - lam[tuple(sl_lo)]) / (2.0 * steps[axis])
        out[..., axis] = raising[axis] * grad
    return out


def grid_field_strength(a, grid: Grid4):
    """Discrete upper-index field tensor f^{beta alpha} = D_beta a^alpha - D_alpha a^beta.

    Output shape (.., 5, 5) on the full grid; entries within one cell of
    any boundary are zero-filled and should be ignored (use
    ``_trim_interior`` semantics when comparing).  As in :func:`_grad5`,
    the fifth derivative slot is the plain tau derivative.
    """
    steps = grid.steps()
    raising = np.concatenate([ETA_DIAG, [1.0]])
    d_a = np.zeros(a.shape + (5,), dtype=np.result_type(a, float))  # [.., comp, beta]
    for axis in range(5):
        sl_hi = [slice(None)] * 5
        sl_lo = [slice(None)] * 5
        sl_mid = [slice(None)] * 5
        sl_hi[axis] = slice(2, None)
        sl_lo[axis] = slice(0, -2)
        sl_mid[axis] = slice(1, -1)
        grad = np.zeros_like(a, dtype=d_a.dtype)
        grad[tuple(sl_mid) + (slice(None),)] = (
            a[tuple(sl_hi) + (slice(None),)] - a[tuple(sl_lo) + (slice(None),)]
        ) / (2.0 * steps[axis])
        d_a[..., axis] = raising[axis] * grad
    # f[.., beta, alpha] = D_beta a^alpha - D_alpha a^beta
    return np.swapaxes(d_a, -1, -2) - d_a


def gauge_transform(a, lam, grid: Grid4, residual_tol=1e-8):
    """Shift a by the raised discrete gradient of a gauge scalar.

    ``lam`` is a scalar sampled on the full grid.  Its discrete wave
    residual must not exceed ``residual_tol`` (relative to the gradient
    scale), else NotAGaugeFunction is raised.  Because the shift uses the
    same central-difference operators as :func:`grid_field_strength`, the
    field tensor is invariant to rounding on the common interior.
    """
    a = np.asarray(a)
    try:
        lam = np.ascontiguousarray(np.broadcast_to(np.asarray(lam), grid.full_shape))
    except ValueError as exc:
        raise ValueError("gauge scalar does not match grid shape") from exc
    box = _dalembert_5d(lam, grid)
    scale = max(float(np.max(np.abs(lam))), 1e-30)
    resid = float(np.max(np.abs(box))) / scale
    if resid > residual_tol:
        raise NotAGaugeFunction(
            f"discrete wave residual {resid:.3e} exceeds {residual_tol:.0e}")
    return a + _grad5(lam, grid)


def stencil_symbol(k, h):
    """Symbol of the central 3-point second difference: plane waves e^{ikx}
    are exact eigenfunctions with eigenvalue -(2 sin(k h / 2) / h)^2."""
    return 2.0 * np.sin(np.asarray(k) * h / 2.0) / h


def spatial_stencil_symbol(k, grid: Grid4):
    """eta-contracted second-difference symbol sum for a spatial wavevector."""
    kd = np.array([stencil_symbol(k[mu], grid.spacing[mu]) for mu in range(4)])
    return float(np.sum(ETA_DIAG * kd ** 2))


def discrete_frequency_for(spatial_symbol, grid: Grid4):
    """Frequency s whose 3-point stencil symbol matches -sigma * spatial_symbol.

    Solves sigma * (2 sin(s dtau / 2) / dtau)^2 + spatial_symbol = 0 for s,
    giving a grid-exact null mode of the discrete wave operator.
    """
    target = -spatial_symbol / grid.sigma
    if target < 0:
        raise ValueError("no real discrete frequency for this spatial symbol")
    sd = np.sqrt(target)
    arg = sd * grid.dtau / 2.0
    if arg > 1.0:
        raise ValueError("discrete frequency outside the representable band")
    return 2.0 / grid.dtau * np.arcsin(arg)


# ----------------------------------------------------------------------
# Flat binary field serialization with JSON sidecar
# ----------------------------------------------------------------------

def save_grid_field(path_prefix, array, grid: Grid4, names=None):
    """Write ``array`` as little-endian float64 with a JSON sidecar.

    Complex arrays gain a trailing axis of size 2 (re, im), recorded in the
    sidecar.  Returns the pair of written paths.
    """
    path_prefix = Path(path_prefix)
    arr = np.asarray(array)
    is_complex = np.iscomplexobj(arr)
    if is_complex:
        arr = np.stack([arr.real, arr.imag], axis=-1)
    arr = np.ascontiguousarray(arr, dtype="<f8")
    bin_path = path_prefix.with_suffix(".f64")
    meta_path = path_prefix.with_suffix(".json")
    arr.tofile(bin_path)
    sidecar = {
        "shape": list(arr.shape),
        "dtype": "float64",
        "endianness": "little",
        "order": "C",
        "complex": is_complex,
        "components": int(arr.shape[-1] if not is_complex else arr.shape[-2]),
        "axes": {
            "origin": list(grid.origin) + [grid.tau0],
            "spacing": list(grid.spacing) + [grid.dtau],
            "points": list(grid.shape) + [grid.ntau],
            "names": names or ["x0", "x1", "x2", "x3", "tau"],
        },
        "sigma": grid.sigma,
    }
    meta_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return bin_path, meta_path


def load_grid_field(path_prefix):
    """Read back a field written by :func:`save_grid_field`.

    Returns (array, grid).
    """
    path_prefix = Path(path_prefix)
    meta = json.loads(path_prefix.with_suffix(".json").read_text())
    raw = np.fromfile(path_prefix.with_suffix(".f64"), dtype="<f8")
    arr = raw.reshape(meta["shape"])
    if meta.get("complex"):
        arr = arr[..., 0] + 1j * arr[..., 1]
    ax = meta["axes"]
    grid = Grid4(shape=tuple(ax["points"][:4]), origin=tuple(ax["origin"][:4]),
                 spacing=tuple(ax["spacing"][:4]), ntau=int(ax["points"][4]),
                 tau0=float(ax["origin"][4]), dtau=float(ax["spacing"][4]),
                 sigma=int(meta.get("sigma", 1)))
    return arr, grid
