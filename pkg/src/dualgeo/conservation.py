"""Conserved-quantity diagnostics for covariant flows.

Along a canonical trajectory with fields a^mu(x, tau), a5(x, tau) the
identities tracked here are

    K = (m/2) eta u u - e a5          (u the kinetic velocity)
    m_p^2 = -eta (p - e a) (p - e a)
    dK/dtau + (1/2m) d(m_p^2)/dtau + e d(a5)/dtau = 0

and, in the dual space, the condition for K to be conserved,

    -(1/2) d_s g^{mu nu} v_mu v_nu = (e/m) d_s a^mu v_mu.

Derivatives along trajectories are taken on the trajectory's own uniform
sample grid with fourth-order finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import GeodesicState, PhaseState, Trajectory, lowered_velocity
from .errors import TooFewSamples
from .fields import ExtendedMetric, Gauge5, ParticleParams, eta4
from .numdiff import fd_derivative_order4

__all__ = [
    "k_value",
    "mass_squared",
    "mass_balance_residual",
    "gutzwiller_condition_residual",
    "ConservationReport",
    "conservation_report",
]


def k_value(params: ParticleParams, fields_or_metric, state) -> float:
    """Conserved generator value in either representation.

    For a canonical state with Gauge5 fields (or None):
        K = (m/2) eta u u - e a5, u = (p - e a)/m.
    For a dual state with an ExtendedMetric:
        K = (m/2) g^{mu nu} v_mu v_nu.
    """
    m, e = params.m, params.e
    if isinstance(fields_or_metric, ExtendedMetric):
        metric = fields_or_metric
        if not isinstance(state, GeodesicState):
            raise TypeError("metric form of k_value expects a GeodesicState")
        v = state.v_low
        return 0.5 * m * float(v @ metric.upper(state.x, state.s) @ v)
    gauge = fields_or_metric
    if not isinstance(state, PhaseState):
        raise TypeError("Hamilton form of k_value expects a PhaseState")
    if gauge is None:
        u = state.p / m
        return 0.5 * m * float(u @ eta4 @ u)
    a = gauge.a.value(state.x, state.s)
    a5 = gauge.a5.value(state.x, state.s)
    u = (state.p - e * a) / m
    return 0.5 * m * float(u @ eta4 @ u) - e * a5


def mass_squared(params: ParticleParams, gauge5: Gauge5 | None,
                 state: PhaseState) -> float:
    """Dynamical mass squared -eta (p - e a)(p - e a); negative is off-shell
    spacelike (legal, flagged by the caller if desired)."""
    a = gauge5.a.value(state.x, state.s) if gauge5 is not None else 0.0
    pi = state.p - params.e * a
    return -float(pi @ eta4 @ pi)


def _uniform_samples(traj: Trajectory, n: int):
    if n < 5:
        raise TooFewSamples("need at least 5 samples for 4th-order differencing")
    s = np.linspace(traj.t0, traj.t_end, n)
    return s, traj.eval(s)


def mass_balance_residual(params: ParticleParams, gauge5: Gauge5 | None,
                          traj: Trajectory, n: int = 801):
    """Balance residual e d(a5)/dtau + (1/2m) d(m_p^2)/dtau along a flow.

    Returns (tau, residual, dK_dtau) with all derivatives by fourth-order
    differences on a uniform resampling of the trajectory.
    """
    s, rows = _uniform_samples(traj, n)
    d = rows.shape[1] // 2
    h = s[1] - s[0]
    a5 = np.empty(n)
    mp2 = np.empty(n)
    kv = np.empty(n)
    for i, (si, row) in enumerate(zip(s, rows)):
        st = PhaseState(row[:d], row[d:2 * d], si)
        a5[i] = gauge5.a5.value(st.x, si) if gauge5 is not None else 0.0
        mp2[i] = mass_squared(params, gauge5, st)
        kv[i] = k_value(params, gauge5, st)
    residual = params.e * fd_derivative_order4(a5, h) \
        + fd_derivative_order4(mp2, h) / (2.0 * params.m)
    dk = fd_derivative_order4(kv, h)
    return s, residual, dk


def gutzwiller_condition_residual(metric: ExtendedMetric, gauge_vec,
                                  params: ParticleParams,
                                  state: GeodesicState) -> float:
    """Conservation-condition residual in the dual space at one state:

        -(1/2) d_s g^{mu nu} v_mu v_nu - (e/m) d_s a^mu v_mu.

    Zero iff the explicit parameter dependence of the metric compensates
    that of the gauge vector at this state.
    """
    v = state.v_low
    sg = metric.ds_upper(state.x, state.s)
    resid = -0.5 * float(v @ sg @ v)
    if gauge_vec is not None:
        resid -= params.e / params.m * float(gauge_vec.ds(state.x, state.s) @ v)
    return resid


@dataclass
class ConservationReport:
    k0: float
    max_dk_rel: float
    max_balance_residual: float
    max_condition_residual: float
    conserved: bool
    samples: int

    def to_dict(self):
        return {
            "K0": self.k0,
            "max_dK_rel": self.max_dk_rel,
            "max_balance_residual": self.max_balance_residual,
            "max_condition_residual": self.max_condition_residual,
            "conserved": self.conserved,
            "samples": self.samples,
        }


def conservation_report(params: ParticleParams, gauge5: Gauge5 | None,
                        traj: Trajectory, metric: ExtendedMetric | None = None,
                        n: int = 801, threshold: float = 1e-6) -> ConservationReport:
    """Full conservation diagnostics along a canonical covariant trajectory."""
    s, rows = _uniform_samples(traj, n)
    d = rows.shape[1] // 2
    kv = np.array([k_value(params, gauge5, PhaseState(r[:d], r[d:2 * d], si))
                   for si, r in zip(s, rows)])
    k0 = float(kv[0])
    scale = max(abs(k0), 1e-30)
    max_dk_rel = float(np.max(np.abs(kv - k0)) / scale)
    _, residual, _ = mass_balance_residual(params, gauge5, traj, n=n)
    max_balance = float(np.max(np.abs(residual)))
    max_cond = 0.0
    if metric is not None:
        gauge_vec = gauge5.a if gauge5 is not None else None
        for si, r in zip(s[:: max(1, n // 32)], rows[:: max(1, n // 32)]):
            st_ph = PhaseState(r[:d], r[d:2 * d], si)
            v_low = lowered_velocity(params, metric, gauge_vec, st_ph)
            st = GeodesicState(r[:d], v_low, si)
            max_cond = max(max_cond, abs(gutzwiller_condition_residual(
                metric, gauge_vec, params, st)))
    conserved = max_dk_rel <= threshold and max_balance <= threshold * scale
    return ConservationReport(k0=k0, max_dk_rel=max_dk_rel,
                              max_balance_residual=max_balance,
                              max_condition_residual=max_cond,
                              conserved=conserved, samples=n)
