"""Geodesic deviation in the extended covariant form, plus stability probes.

The deviation of two nearby dual geodesics is integrated as a first-order
system in (xi, chi) where chi is the extended covariant derivative of xi
along the base curve,

    chi_i = dxi_i/ds + gamma[i,j,k] v_j xi_k + gamma4[i,k] xi_k.

The second extended derivative is purely algebraic in xi (no chi term
remains, which is the point of the extension):

    D2 xi_i = (riemann[i,j,k,l] v_j v_k
               + (rbar_4first + rbar_4mid)[i,k,l] v_k
               + rbar_44[i,l]) xi_l.

``deviation_rhs_raw`` assembles the same quantity from the raw linearised
equation of motion plus transport terms; the difference of the two routes,
and the dependence of the raw route on dxi/ds, are the residuals guarded
by the check suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (DualGeodesicFlow, GeodesicState, IntegratorConfig,
                       Trajectory, integrate)
from .errors import DegenerateTrajectory, TooFewSamples
from .fields import ExtendedMetric, ParticleParams
from .geometry import (ConnectionBlock, CurvatureBlock, connection,
                       connection_curvature, curvature)

__all__ = [
    "DeviationState",
    "covariant_deriv",
    "deviation_rhs",
    "deviation_rhs_raw",
    "DeviationTrajectory",
    "integrate_deviation",
    "pairwise_oracle",
    "pairwise_sweep",
    "PairwiseResult",
    "StabilityReport",
    "stability_indicator",
]

LINEARIZATION_BUDGET = 1e-2


@dataclass(frozen=True)
class DeviationState:
    """Deviation vector (lowered) and its extended covariant derivative."""

    xi: np.ndarray
    dxi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", np.asarray(self.xi, dtype=float))
        object.__setattr__(self, "dxi", np.asarray(self.dxi, dtype=float))
        if not (np.all(np.isfinite(self.xi)) and np.all(np.isfinite(self.dxi))):
            raise ValueError("deviation state must be finite")


def covariant_deriv(conn: ConnectionBlock, v_low, xi, xi_dot, extended=True):
    """Covariant derivative of xi along the base curve.

    Plain form: dxi/ds + gamma v xi.  The extended form adds the gauge-row
    term gamma4 xi with unit coefficient.
    """
    out = np.asarray(xi_dot, dtype=float) + np.einsum("ijk,j,k->i", conn.gamma, v_low, xi)
    if extended:
        out = out + conn.gamma4 @ xi
    return out


def deviation_rhs(curv: CurvatureBlock, v_low, xi) -> np.ndarray:
    """Second extended covariant derivative of xi from the curvature blocks."""
    v = np.asarray(v_low, dtype=float)
    xi = np.asarray(xi, dtype=float)
    return (np.einsum("ijkl,j,k,l->i", curv.riemann, v, v, xi)
            + np.einsum("ikl,k,l->i", curv.rbar_4first + curv.rbar_4mid, v, xi)
            + curv.rbar_44 @ xi)


def deviation_rhs_raw(metric: ExtendedMetric, params: ParticleParams,
                      x, s, v_low, xi, xi_dot) -> np.ndarray:
    """Second extended covariant derivative assembled without curvature blocks.

    Linearises the normal-form equation of motion directly and adds the
    transport terms of the extended derivative.  The result must agree with
    :func:`deviation_rhs` and be independent of ``xi_dot``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v_low, dtype=float)
    xi = np.asarray(xi, dtype=float)
    xd = np.asarray(xi_dot, dtype=float)
    flat = metric.flat

    gl = metric.lower(x, s)
    DG = np.einsum("aA,bcA->abc", flat, metric.dx_upper(x, s))
    SG = metric.ds_upper(x, s)
    DGROW = np.einsum("aA,bA->ab", flat, metric.dx_grow(x, s))
    SGROW = metric.ds_grow(x, s)
    Dgl = np.einsum("aA,ilA->ail", flat, metric.dx_lower(x, s))
    Sgl = metric.ds_lower(x, s)
    DDG = np.einsum("eB,aA,bcAB->eabc", flat, flat, metric.dxdx_upper(x, s))
    DSG = np.einsum("aA,bcA->abc", flat, metric.dxds_upper(x, s))
    SSG = metric.dsds_upper(x, s)
    DDGROW = np.einsum("aB,kA,lAB->akl", flat, flat, metric.dxdx_grow(x, s))
    DSGROW = np.einsum("aA,bA->ab", flat, metric.dxds_grow(x, s))

    gamma = 0.5 * (np.einsum("il,klj->ijk", gl, DG)
                   + np.einsum("il,jlk->ijk", gl, DG)
                   - np.einsum("il,ljk->ijk", gl, DG))
    gamma4 = 0.5 * (gl @ SG + np.einsum("il,kl->ik", gl, DGROW) - gl @ DGROW)
    gamma44 = gl @ SGROW
    dgamma = 0.5 * (np.einsum("ail,klj->aijk", Dgl, DG)
                    + np.einsum("ail,jlk->aijk", Dgl, DG)
                    - np.einsum("ail,ljk->aijk", Dgl, DG)
                    + np.einsum("il,aklj->aijk", gl, DDG)
                    + np.einsum("il,ajlk->aijk", gl, DDG)
                    - np.einsum("il,aljk->aijk", gl, DDG))
    sgamma = 0.5 * (np.einsum("il,klj->ijk", Sgl, DG)
                    + np.einsum("il,jlk->ijk", Sgl, DG)
                    - np.einsum("il,ljk->ijk", Sgl, DG)
                    + np.einsum("il,klj->ijk", gl, DSG)
                    + np.einsum("il,jlk->ijk", gl, DSG)
                    - np.einsum("il,ljk->ijk", gl, DSG))
    dgamma4 = 0.5 * (np.einsum("ail,lk->aik", Dgl, SG)
                     + np.einsum("ail,kl->aik", Dgl, DGROW)
                     - np.einsum("ail,lk->aik", Dgl, DGROW)
                     + np.einsum("il,alk->aik", gl, DSG)
                     + np.einsum("il,akl->aik", gl, DDGROW)
                     - np.einsum("il,alk->aik", gl, DDGROW))
    sgamma4 = 0.5 * (np.einsum("il,lk->ik", Sgl, SG)
                     + np.einsum("il,kl->ik", Sgl, DGROW)
                     - np.einsum("il,lk->ik", Sgl, DGROW)
                     + np.einsum("il,lk->ik", gl, SSG)
                     + np.einsum("il,kl->ik", gl, DSGROW)
                     - np.einsum("il,lk->ik", gl, DSGROW))
    dgamma44 = np.einsum("ail,l->ai", Dgl, SGROW) + np.einsum("il,al->ai", gl, DSGROW)

    # raw linearisation of dv_i/ds = -gamma v v - 2 gamma4 v - gamma44
    xi_dd = (-np.einsum("lijk,l,j,k->i", dgamma, xi, v, v)
             - 2.0 * np.einsum("lik,l,k->i", dgamma4, xi, v)
             - np.einsum("li,l->i", dgamma44, xi)
             - 2.0 * np.einsum("ilk,k,l->i", gamma, v, xd)
             - 2.0 * gamma4 @ xd)

    base_acc = (-np.einsum("jkl,k,l->j", gamma, v, v) - 2.0 * gamma4 @ v - gamma44)
    dgamma_dt = sgamma + np.einsum("aijk,a->ijk", dgamma, v)
    dgamma4_dt = sgamma4 + np.einsum("aik,a->ik", dgamma4, v)
    chi = xd + np.einsum("ijk,j,k->i", gamma, v, xi) + gamma4 @ xi

    dchi = (xi_dd
            + np.einsum("ijk,j,k->i", dgamma_dt, v, xi)
            + np.einsum("ijk,j,k->i", gamma, base_acc, xi)
            + np.einsum("ijk,j,k->i", gamma, v, xd)
            + dgamma4_dt @ xi
            + gamma4 @ xd)
    return dchi + np.einsum("ijb,j,b->i", gamma, v, chi) + gamma4 @ chi


class DeviationTrajectory:
    """Sampled deviation solution along a base trajectory."""

    def __init__(self, s, xi, dxi, base: Trajectory):
        self.s = s
        self.xi = xi
        self.dxi = dxi
        self.base = base

    @property
    def norm_xi(self):
        return np.linalg.norm(self.xi, axis=1)


class _DeviationFlow:
    """Linear flow in (xi, chi) along an interpolated base trajectory.

        d xi / ds = chi - T xi,     d chi / ds = B xi - T chi,
        T[i, l] = gamma[i, j, l] v_j + gamma4[i, l],
        B[i, l] = riemann[i, j, k, l] v_j v_k
                  + (rbar_4first + rbar_4mid)[i, k, l] v_k + rbar_44[i, l].

    Base states come from the base trajectory's own dense output; the
    geometry is evaluated exactly at the interpolated state.
    """

    def __init__(self, metric: ExtendedMetric, base: Trajectory):
        self.metric = metric
        self.base = base
        self.dim = metric.dim
        self.nstate = 2 * self.dim

    def rhs(self, s, y):
        d = self.dim
        xi, chi = y[:d], y[d:]
        row = self.base.eval(s)
        x, v = row[:d], row[d:2 * d]
        conn, curv = connection_curvature(self.metric, x, s, want_curvature=True)
        T = np.tensordot(v, conn.gamma, axes=(0, 1)) + conn.gamma4
        B = (np.tensordot(v, np.tensordot(v, curv.riemann, axes=(0, 1)),
                          axes=(0, 1))
             + np.tensordot(v, curv.rbar_4first + curv.rbar_4mid, axes=(0, 1))
             + curv.rbar_44)
        return np.concatenate([chi - T @ xi, B @ xi - T @ chi])

    def diagnostics(self, s, y):
        return {"norm_xi": float(np.linalg.norm(y[:self.dim]))}


def integrate_deviation(params: ParticleParams, metric: ExtendedMetric,
                        base: Trajectory, xi0, xi_dot0=None,
                        config: IntegratorConfig | None = None,
                        n_samples: int = 400) -> DeviationTrajectory:
    """Integrate the deviation system along a precomputed base trajectory.

    ``xi_dot0`` is the raw initial derivative of xi (defaults to zero); it
    is converted to the extended covariant derivative at the initial point.
    """
    d = metric.dim
    xi0 = np.asarray(xi0, dtype=float)
    xi_dot0 = np.zeros(d) if xi_dot0 is None else np.asarray(xi_dot0, dtype=float)
    row0 = base.y[0]
    x0, v0 = row0[:d], row0[d:2 * d]
    scale = 1.0 + float(np.linalg.norm(x0))
    if np.linalg.norm(xi0) > LINEARIZATION_BUDGET * scale:
        raise ValueError("initial deviation exceeds the linearization budget")
    conn0 = connection(metric, x0, base.t0)
    chi0 = covariant_deriv(conn0, v0, xi0, xi_dot0, extended=True)
    flow = _DeviationFlow(metric, base)
    span = base.t_end - base.t0
    traj = integrate(flow, np.concatenate([xi0, chi0]), base.t0, span,
                     config or IntegratorConfig())
    s = np.linspace(base.t0, base.t_end, n_samples)
    rows = traj.eval(s)
    return DeviationTrajectory(s, rows[:, :d], rows[:, d:], base)


@dataclass
class PairwiseResult:
    s: np.ndarray
    mismatch: np.ndarray
    xi_jacobi: np.ndarray
    xi_pair: np.ndarray

    @property
    def max_mismatch(self):
        return float(np.max(self.mismatch))


def pairwise_oracle(params: ParticleParams, metric: ExtendedMetric,
                    state0: GeodesicState, xi0, span,
                    config: IntegratorConfig | None = None,
                    n_samples: int = 400,
                    base: Trajectory | None = None,
                    dev: DeviationTrajectory | None = None) -> PairwiseResult:
    """Two-trajectory oracle for the deviation equation.

    Integrates the base geodesic and an offset geodesic displaced by the
    lowered vector xi0 (same initial lowered velocity), integrates the
    linearised deviation along the base, and returns the pointwise norm of
    y(s) - x(s) - xi(s) in lowered components.  For a correct linearisation
    the mismatch is O(|xi0|^2).
    """
    config = config or IntegratorConfig()
    d = metric.dim
    xi0 = np.asarray(xi0, dtype=float)
    flow = DualGeodesicFlow(params, metric)
    if base is None:
        y_base0 = np.concatenate([state0.x, state0.v_low])
        base = integrate(flow, y_base0, state0.s, span, config)
    dx0 = metric.flat @ xi0
    y_off0 = np.concatenate([state0.x + dx0, state0.v_low])
    off = integrate(flow, y_off0, state0.s, span, config)

    if dev is None:
        dev = integrate_deviation(params, metric, base, xi0, config=config,
                                  n_samples=n_samples)
    s = dev.s
    rows_b = base.eval(s)
    rows_o = off.eval(s)
    # lowered position difference
    diff = (rows_o[:, :d] - rows_b[:, :d]) @ metric.flat.T
    mismatch = np.linalg.norm(diff - dev.xi, axis=1)
    return PairwiseResult(s=s, mismatch=mismatch, xi_jacobi=dev.xi, xi_pair=diff)


def pairwise_sweep(params: ParticleParams, metric: ExtendedMetric,
                   state0: GeodesicState, xi0, span, scales=(1.0, 0.5),
                   config: IntegratorConfig | None = None,
                   n_samples: int = 400):
    """Pairwise-oracle mismatch maxima over a sweep of offset scales.

    The base trajectory is integrated once; the deviation system is
    integrated once and rescaled per offset (the system is linear in
    (xi, chi), so solutions scale exactly with the initial offset).
    Returns (list of max mismatches, list of PairwiseResult).
    """
    config = config or IntegratorConfig()
    xi0 = np.asarray(xi0, dtype=float)
    flow = DualGeodesicFlow(params, metric)
    y_base0 = np.concatenate([state0.x, state0.v_low])
    base = integrate(flow, y_base0, state0.s, span, config)
    dev1 = integrate_deviation(params, metric, base, xi0, config=config,
                               n_samples=n_samples)
    results = []
    for c in scales:
        dev_c = DeviationTrajectory(dev1.s, c * dev1.xi, c * dev1.dxi, base)
        results.append(pairwise_oracle(params, metric, state0, c * xi0, span,
                                       config, n_samples, base=base, dev=dev_c))
    return [r.max_mismatch for r in results], results


@dataclass
class StabilityReport:
    exponent: float
    classification: str
    fit_residual: float

    def to_dict(self):
        return {"exponent": self.exponent, "class": self.classification,
                "fit_residual": self.fit_residual}


def stability_indicator(dev: DeviationTrajectory, exp_threshold=1e-2,
                        growth_threshold=1.5) -> StabilityReport:
    """Least-squares growth exponent of |xi| and a coarse classification.

    Fits log |xi(s)| linearly in s over the second half of the window.
    Slope above ``exp_threshold`` classifies as "exponential"; otherwise
    the window-to-window growth of max |xi| separates "linear" from
    "bounded".
    """
    norms = dev.norm_xi
    s = dev.s
    if len(s) < 10:
        raise TooFewSamples("stability fit needs at least 10 samples")
    if np.any(norms < 1e-300):
        raise DegenerateTrajectory("deviation norm underflowed")
    half = len(s) // 2
    logn = np.log(norms[half:])
    ss = s[half:]
    A = np.vstack([ss, np.ones_like(ss)]).T
    coef, res, *_ = np.linalg.lstsq(A, logn, rcond=None)
    slope = float(coef[0])
    fit_residual = float(np.sqrt(res[0] / len(ss))) if len(res) else 0.0
    if slope > exp_threshold:
        cls = "exponential"
    else:
        third = max(len(s) // 3, 1)
        early = float(np.max(norms[:third]))
        late = float(np.max(norms[-third:]))
        cls = "linear" if late > growth_threshold * early else "bounded"
    return StabilityReport(exponent=slope, classification=cls,
                           fit_residual=fit_residual)
