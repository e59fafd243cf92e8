"""Bundled invariant and acceptance checks.

Each check measures one identity the package is built on and compares it
against its pinned threshold.  ``check_suite("quick")`` runs the desk-scale
set; ``"full"`` adds grid-refinement sweeps, the high-count collapse probe
and the byte-determinism run.  The same functions back the acceptance test
module, so the CLI and pytest agree by construction.
"""

from __future__ import annotations

import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import build_field
from .conservation import (conservation_report, gutzwiller_condition_residual,
                           k_value, mass_balance_residual)
from .deviation import (deviation_rhs, deviation_rhs_raw, integrate_deviation,
                        pairwise_oracle, pairwise_sweep, stability_indicator)
from .dynamics import (DualGeodesicFlow, FlatHamiltonFlow, GeodesicState,
                       IntegratorConfig, LorentzFlow, MappedGeodesicFlow,
                       PhaseState, VelocityState, dual_equivalence,
                       geodesic_rhs_dual, integrate, lorentz_reference,
                       lowered_velocity, mapped_acceleration,
                       random_onshell_velocity, tangent_map)
from .fields import (Gauge5, ParticleParams, ScalarPotential, ScalarTimeField,
                     VectorTimeField, conformal_extended_metric,
                     conformal_metric_nr, delta3, eta4, extend_metric,
                     field_strength)
from .geometry import (connection, connection_fd, curvature,
                       curvature_fd_gamma, m_form)
from .maxwell5d import (Grid4, ModeField, discrete_frequency_for,
                        fourier_modes, gauge_transform, grid_field_strength,
                        mode_residual, modes_to_samples, spatial_stencil_symbol,
                        stencil_symbol, wave_residual, zero_mode_reduce)

__all__ = ["CheckResult", "SuiteReport", "check_suite", "CHECKS"]

SEED = 20260809
CFG = IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12, max_step=0.05)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    mode: str = "max"        # "max": measured <= threshold; "range": in detail
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        extra = f" [{self.detail}]" if self.detail else ""
        return (f"[{flag}] {self.name}: measured={self.measured:.3e} "
                f"threshold={self.threshold:.3e}{extra} ({self.seconds:.2f}s)")


@dataclass
class SuiteReport:
    scale: str
    results: list
    seconds: float

    @property
    def all_passed(self):
        return all(r.passed for r in self.results)

    def lines(self):
        out = [r.line() for r in self.results]
        verdict = "ALL PASS" if self.all_passed else "FAILURES PRESENT"
        out.append(f"== {verdict} ({self.scale}, {len(self.results)} checks, "
                   f"{self.seconds:.1f}s) ==")
        return out


def _osc_setup():
    V = build_field("harmonic", "nr", {"k": 1.0})
    x0 = np.array([0.6, 0.0, 0.0])
    p0 = np.array([0.0, np.sqrt(1.64), 0.0])
    params = ParticleParams(m=1.0, e=0.0)
    flow = FlatHamiltonFlow(params, V, 3)
    energy = flow.energy(0.0, np.concatenate([x0, p0]))
    params_e = params.with_energy(energy)
    metric = conformal_extended_metric(params_e, mode="nr", source=V)
    return V, params_e, metric, x0, p0


def _rel_setup():
    V = build_field("harmonic", "rel", {"k": 1.0})
    x0 = np.array([0.0, 0.6, 0.0, 0.0])
    p0 = np.array([1.5, 1.0, 0.0, 0.0])
    params = ParticleParams(m=1.0, e=0.0)
    flow = FlatHamiltonFlow(params, V, 4)
    energy = flow.energy(0.0, np.concatenate([x0, p0]))
    params_e = params.with_energy(energy)
    metric = conformal_extended_metric(params_e, mode="rel", source=V)
    return V, params_e, metric, x0, p0


def _nr_gauge_setup():
    gauge = build_field("uniform_B", "nr", {"B": 1.3, "well": 0.4})
    params = ParticleParams(m=1.0, e=1.0, energy=2.0)
    metric = conformal_extended_metric(params, mode="nr", source=gauge)
    return gauge, params, metric


def _rel_gauge_setup():
    from .fields import Gauge5
    a5 = build_field("plane_wave_a5", "rel",
                     {"amplitude": 0.15, "k": [0.0, 0.7, 0.2, 0.0], "s0": 0.9}).a5
    avec = build_field("uniform_B", "rel", {"B": 0.8}).a
    gauge = Gauge5(a=avec, a5=a5)
    params = ParticleParams(m=1.0, e=1.0, energy=-0.5)
    metric = conformal_extended_metric(params, mode="rel", source=gauge)
    return gauge, params, metric


# ----------------------------------------------------------------------
# fields
# ----------------------------------------------------------------------

def check_conformal_reciprocity(scale):
    rng = np.random.default_rng(SEED)
    _, params, metric, _, _ = _osc_setup()
    _, _, metric4, _, _ = _rel_setup()
    worst = 0.0
    for met, d in ((metric, 3), (metric4, 4)):
        pts = [(rng.uniform(-0.9, 0.9, d), rng.uniform(0, 1)) for _ in range(100)]
        worst = max(worst, met.inverse_identity_error(pts))
    return worst, 1e-12


def check_field_strength_antisymmetry(scale):
    rng = np.random.default_rng(SEED + 1)
    worst = 0.0
    for fid, mode in (("uniform_B", "nr"), ("uniform_B", "rel"),
                      ("uniform_E", "nr"), ("plane_wave_a5", "rel")):
        gauge = build_field(fid, mode, {})
        for _ in range(25):
            x = rng.uniform(-1.5, 1.5, gauge.dim)
            fs = field_strength(gauge, x, rng.uniform(0, 2))
            worst = max(worst, float(np.max(np.abs(fs.f + fs.f.T))))
    return worst, 0.0


def check_gradient_consistency(scale):
    from . import numdiff
    rng = np.random.default_rng(SEED + 2)
    tol = 1e-6
    worst = 0.0
    cases = [("harmonic", "nr"), ("harmonic", "rel"), ("coulomb", "nr"),
             ("uniform_E", "nr"), ("uniform_B", "nr"), ("uniform_B", "rel"),
             ("plane_wave_a5", "rel"), ("tau_linear_a5", "rel")]
    for fid, mode in cases:
        f = build_field(fid, mode, {})
        d = 3 if mode == "nr" else 4
        for _ in range(100 if scale == "full" else 40):
            x = rng.uniform(0.4, 1.4, d) * rng.choice([-1.0, 1.0], d)
            s = rng.uniform(0, 2)
            if isinstance(f, ScalarPotential):
                got = f.gradient(x)
                ref = numdiff.grad_x(f.value, x)
                err = np.max(np.abs(got - ref) / np.maximum(1.0, np.abs(got)))
            else:
                vec = f.a
                scal = f.a0 if hasattr(f, "a0") else f.a5
                gotv = vec.jac(x, s)
                refv = numdiff.jac_x(lambda q: vec.value(q, s), x)
                gots = scal.grad(x, s)
                refs = numdiff.grad_x(lambda q: scal.value(q, s), x)
                err = max(np.max(np.abs(gotv - refv) / np.maximum(1.0, np.abs(gotv))),
                          np.max(np.abs(gots - refs) / np.maximum(1.0, np.abs(gots))))
            worst = max(worst, float(err))
    return worst, tol


def check_conformal_gauge_agreement(scale):
    # E/(E - V) with V = -e A^0 must coincide with E/(E + e A^0) exactly
    rng = np.random.default_rng(SEED + 3)
    e = 1.3
    a0 = build_field("uniform_B", "nr", {"B": 0.0, "well": 0.8}).a0
    V = ScalarPotential(lambda x: -e * a0.value(x, 0.0),
                        gradient=lambda x: -e * a0.grad(x, 0.0), dim=3)
    params = ParticleParams(m=1.0, e=e, energy=2.0)
    from .fields import Gauge3
    gauge = Gauge3(a0=a0, a=VectorTimeField.zero(3))
    worst = 0.0
    for _ in range(50):
        x = rng.uniform(-1.0, 1.0, 3)
        g_pot = conformal_metric_nr(params, V, x, 0.0)
        g_gau = conformal_metric_nr(params, gauge, x, 0.0)
        worst = max(worst, float(np.max(np.abs(g_pot - g_gau))))
    return worst, 1e-14


# ----------------------------------------------------------------------
# geometry
# ----------------------------------------------------------------------

def check_flat_annihilation(scale):
    from .fields import flat_metric
    rng = np.random.default_rng(SEED + 4)
    worst = 0.0
    for d in (3, 4):
        met = flat_metric(d)
        for _ in range(10):
            x = rng.uniform(-2, 2, d)
            conn = connection(met, x, 0.0)
            curv = curvature(met, x, 0.0)
            mf = m_form(met, x, 0.0)
            worst = max(worst, *(float(np.max(np.abs(a))) for a in
                                 (conn.gamma, conn.gamma4, conn.gamma44,
                                  curv.riemann, curv.rbar_4first,
                                  curv.rbar_4mid, curv.rbar_44, mf.m)))
    return worst, 0.0


def check_connection_fd(scale):
    rng = np.random.default_rng(SEED + 5)
    _, _, met3, _, _ = _osc_setup()
    _, _, metB = _nr_gauge_setup()
    _, _, met5 = _rel_gauge_setup()
    worst = 0.0
    for met in (met3, metB, met5):
        for _ in range(8):
            x = rng.uniform(-0.7, 0.7, met.dim)
            s = rng.uniform(0, 1)
            c1 = connection(met, x, s)
            c2 = connection_fd(met, x, s)
            for a, b in ((c1.gamma, c2.gamma), (c1.gamma4, c2.gamma4),
                         (c1.gamma44, c2.gamma44)):
                worst = max(worst, float(np.max(np.abs(a - b))))
    return worst, 1e-6


def check_curvature_fd(scale):
    rng = np.random.default_rng(SEED + 6)
    _, _, met3, _, _ = _osc_setup()
    _, _, metB = _nr_gauge_setup()
    _, _, met5 = _rel_gauge_setup()
    worst = 0.0
    for met in (met3, metB, met5):
        for _ in range(5):
            x = rng.uniform(-0.7, 0.7, met.dim)
            s = rng.uniform(0, 1)
            k1 = curvature(met, x, s)
            k2 = curvature_fd_gamma(met, x, s)
            for a, b in ((k1.riemann, k2.riemann),
                         (k1.rbar_4first, k2.rbar_4first),
                         (k1.rbar_4mid, k2.rbar_4mid),
                         (k1.rbar_44, k2.rbar_44)):
                worst = max(worst, float(np.max(np.abs(a - b))))
    return worst, 1e-5


def check_riemann_antisymmetry(scale):
    rng = np.random.default_rng(SEED + 7)
    _, _, met3, _, _ = _osc_setup()
    _, _, met5 = _rel_gauge_setup()
    worst = 0.0
    for met in (met3, met5):
        for _ in range(10):
            x = rng.uniform(-0.7, 0.7, met.dim)
            k = curvature(met, x, rng.uniform(0, 1))
            worst = max(worst, float(np.max(np.abs(
                k.riemann + k.riemann.swapaxes(2, 3)))))
            worst = max(worst, float(np.max(np.abs(
                k.rbar_4first + k.rbar_4first.swapaxes(1, 2)))))
    return worst, 1e-13


def check_mform(scale):
    rng = np.random.default_rng(SEED + 8)
    _, params, met, _, _ = _rel_setup()
    worst_sym = 0.0
    worst_fd = 0.0
    h = 1e-6
    for _ in range(20):
        x = rng.uniform(-0.7, 0.7, 4)
        mf = m_form(met, x, 0.0).m
        worst_sym = max(worst_sym, float(np.max(np.abs(mf - mf.swapaxes(1, 2)))))
        gu = met.upper(x, 0.0)
        dg = np.empty((4, 4, 4))
        for a in range(4):
            xp, xm = x.copy(), x.copy()
            xp[a] += h
            xm[a] -= h
            dg[:, :, a] = (met.lower(xp, 0.0) - met.lower(xm, 0.0)) / (2 * h)
        ref = 0.5 * np.einsum("lm,rnl->mrn", gu, dg)
        worst_fd = max(worst_fd, float(np.max(np.abs(mf - ref))))
    return max(worst_sym, worst_fd), 1e-6


def check_quadratic_form_conservation(scale):
    _, params, metric, x0, p0 = _osc_setup()
    v0 = lowered_velocity(params, metric, None, PhaseState(x0, p0, 0.0))
    flow = DualGeodesicFlow(params, metric)
    traj = integrate(flow, np.concatenate([x0, v0]), 0.0, 4 * np.pi, CFG)
    K = traj.diag["K"]
    return float(np.max(np.abs(K - K[0])) / abs(K[0])), 1e-9


# ----------------------------------------------------------------------
# dynamics
# ----------------------------------------------------------------------

def _normal_form_residual(metric, params, gauge_vec, x, v, s):
    """Block geodesic acceleration minus the raw canonical-form expansion."""
    st = GeodesicState(x, v, s)
    _, acc_blocks = geodesic_rhs_dual(params, metric, st)
    flat = metric.flat
    gl = metric.lower(x, s)
    sg = metric.ds_upper(x, s)
    em = params.e / params.m
    conn = connection(metric, x, s)
    acc_raw = -np.einsum("ijk,j,k->i", conn.gamma, v, v)
    M = sg.copy()
    if gauge_vec is not None:
        J = gauge_vec.jac(x, s)
        DA = flat @ (em * J).T          # DA[a, b] = D_a G^b
        M = M + DA - DA.T               # M[l, k] = ds g^{lk} + D_l G^k - D_k G^l
        acc_raw = acc_raw - gl @ (em * gauge_vec.ds(x, s))
    acc_raw = acc_raw - np.einsum("ik,lk,l->i", gl, M, v)
    return float(np.max(np.abs(acc_blocks - acc_raw)))


def check_normal_form_consistency(scale):
    rng = np.random.default_rng(SEED + 9)
    gauge3, params3, met3 = _nr_gauge_setup()
    gauge5, params5, met5 = _rel_gauge_setup()
    worst = 0.0
    for gauge, params, met in ((gauge3, params3, met3), (gauge5, params5, met5)):
        for _ in range(50):
            x = rng.uniform(-0.8, 0.8, met.dim)
            v = rng.normal(size=met.dim)
            s = rng.uniform(0, 2)
            worst = max(worst, _normal_form_residual(met, params, gauge.a, x, v, s))
    return worst, 1e-12


def check_lorentz_collapse_nr(scale):
    rng = np.random.default_rng(SEED + 10)
    gauge, params, metric = _nr_gauge_setup()
    n = 1000
    worst = 0.0
    for _ in range(n):
        x = rng.uniform(-1.0, 1.0, 3)
        s = rng.uniform(0, 2)
        v = random_onshell_velocity(metric, x, s, rng)
        st = VelocityState(x, v, s)
        a1 = mapped_acceleration(params, metric, gauge, st)
        a2 = lorentz_reference(params, gauge, st)
        worst = max(worst, float(np.max(np.abs(a1 - a2))))
    return worst, 1e-10


def check_lorentz_collapse_rel(scale):
    rng = np.random.default_rng(SEED + 11)
    gauge, params, metric = _rel_gauge_setup()
    n = 1000
    worst = 0.0
    for _ in range(n):
        x = rng.uniform(-1.0, 1.0, 4)
        s = rng.uniform(0, 2)
        v = random_onshell_velocity(metric, x, s, rng)
        st = VelocityState(x, v, s)
        a1 = mapped_acceleration(params, metric, gauge, st)
        a2 = lorentz_reference(params, gauge, st)
        worst = max(worst, float(np.max(np.abs(a1 - a2))))
    return worst, 1e-10


def check_dual_equivalence_oscillator(scale):
    V, params, _, x0, p0 = _osc_setup()
    span = 10 * 2 * np.pi
    rep = dual_equivalence(ParticleParams(m=1.0, e=0.0), V, x0, p0, span,
                           CFG, mode="nr")
    return rep.max_position_error, 1e-6


def check_dual_equivalence_rel_potential(scale):
    V, params, _, x0, p0 = _rel_setup()
    span = 10 * 2 * np.pi
    rep = dual_equivalence(ParticleParams(m=1.0, e=0.0), V, x0, p0, span,
                           CFG, mode="rel")
    return rep.max_position_error, 1e-6


def check_dual_equivalence_uniform_b(scale):
    gauge = build_field("uniform_B", "nr", {"B": 1.0})
    x0 = np.array([1.0, 0.0, 0.0])
    p0 = np.array([0.0, 1.0, 0.3])
    rep = dual_equivalence(ParticleParams(m=1.0, e=1.0), gauge, x0, p0,
                           6 * np.pi, CFG, mode="nr")
    return rep.max_position_error, 1e-6


def check_mapped_geodesic_agreement(scale):
    V, params, metric, x0, p0 = _rel_setup()
    flow_h = FlatHamiltonFlow(ParticleParams(m=1.0, e=0.0), V, 4)
    y0 = np.concatenate([x0, p0])
    traj_h = integrate(flow_h, y0, 0.0, 5.0, CFG)
    flow_m = MappedGeodesicFlow(params, metric)
    traj_m = integrate(flow_m, np.concatenate([x0, p0 / params.m]), 0.0, 5.0, CFG)
    s = np.linspace(0, 5.0, 400)
    err = np.max(np.abs(traj_h.eval(s)[:, :4] - traj_m.eval(s)[:, :4]))
    return float(err), 1e-6


def check_hamilton_energy_conservation(scale):
    V, params, _, x0, p0 = _osc_setup()
    flow = FlatHamiltonFlow(ParticleParams(m=1.0, e=0.0), V, 3)
    traj = integrate(flow, np.concatenate([x0, p0]), 0.0, 10 * 2 * np.pi, CFG)
    K = traj.diag["K"]
    return float(np.max(np.abs(K - K[0])) / abs(K[0])), 1e-9


def check_integrator_cross_method(scale):
    gauge = build_field("uniform_B", "nr", {"B": 1.0})
    params = ParticleParams(m=1.0, e=1.0)
    flow = LorentzFlow(params, gauge)
    y0 = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    t_adapt = integrate(flow, y0, 0.0, 2 * np.pi, CFG)
    cfg_rk4 = IntegratorConfig(method="rk4", max_step=2 * np.pi / 2000)
    t_rk4 = integrate(flow, y0, 0.0, 2 * np.pi, cfg_rk4)
    s = np.linspace(0, 2 * np.pi, 200)
    err = np.max(np.abs(t_adapt.eval(s) - t_rk4.eval(s)))
    return float(err), 1e-7


# ----------------------------------------------------------------------
# deviation
# ----------------------------------------------------------------------

def check_deviation_cancellation(scale):
    rng = np.random.default_rng(SEED + 12)
    _, params3, met3, _, _ = _osc_setup()
    gauge3, paramsB, metB = _nr_gauge_setup()
    gauge5, params5, met5 = _rel_gauge_setup()
    worst = 0.0
    for params, met in ((params3, met3), (paramsB, metB), (params5, met5)):
        for _ in range(15):
            d = met.dim
            x = rng.uniform(-0.8, 0.8, d)
            s = rng.uniform(0, 1)
            v = rng.normal(size=d)
            xi = rng.normal(size=d)
            r1 = deviation_rhs_raw(met, params, x, s, v, xi, rng.normal(size=d))
            r2 = deviation_rhs_raw(met, params, x, s, v, xi, rng.normal(size=d))
            worst = max(worst, float(np.max(np.abs(r1 - r2))))
    return worst, 1e-10


def check_deviation_raw_vs_blocks(scale):
    rng = np.random.default_rng(SEED + 13)
    _, params3, met3, _, _ = _osc_setup()
    gauge5, params5, met5 = _rel_gauge_setup()
    worst = 0.0
    for params, met in ((params3, met3), (params5, met5)):
        for _ in range(15):
            d = met.dim
            x = rng.uniform(-0.8, 0.8, d)
            s = rng.uniform(0, 1)
            v = rng.normal(size=d)
            xi = rng.normal(size=d)
            blocks = deviation_rhs(curvature(met, x, s), v, xi)
            raw = deviation_rhs_raw(met, params, x, s, v, xi, rng.normal(size=d))
            worst = max(worst, float(np.max(np.abs(blocks - raw))))
    return worst, 1e-10


def check_deviation_linearity(scale):
    rng = np.random.default_rng(SEED + 14)
    _, _, met, _, _ = _osc_setup()
    worst = 0.0
    for _ in range(20):
        x = rng.uniform(-0.8, 0.8, 3)
        v = rng.normal(size=3)
        xi = rng.normal(size=3)
        k = curvature(met, x, 0.3)
        worst = max(worst, float(np.max(np.abs(
            deviation_rhs(k, v, 2.0 * xi) - 2.0 * deviation_rhs(k, v, xi)))))
    return worst, 0.0


def check_pairwise_oscillator(scale):
    _, params, metric, x0, p0 = _osc_setup()
    v0 = lowered_velocity(params, metric, None, PhaseState(x0, p0, 0.0))
    st0 = GeodesicState(x0, v0, 0.0)
    mms, _ = pairwise_sweep(params, metric, st0, np.array([1e-3, 0, 0]),
                            4 * np.pi, (1.0, 0.5), CFG)
    ratio = mms[0] / mms[1]
    return ratio, (3.2, 4.8)


def check_pairwise_uniform_b_well(scale):
    gauge = build_field("uniform_B", "nr", {"B": 2.0, "well": 0.2})
    params0 = ParticleParams(m=1.0, e=1.0)
    flow = FlatHamiltonFlow(params0, gauge, 3)
    x0 = np.array([0.8, 0.0, 0.0])
    p0 = np.array([0.0, 1.0, 0.2])
    energy = flow.energy(0.0, np.concatenate([x0, p0]))
    params = params0.with_energy(energy)
    metric = conformal_extended_metric(params, mode="nr", source=gauge)
    v0 = lowered_velocity(params, metric, gauge.a, PhaseState(x0, p0, 0.0))
    st0 = GeodesicState(x0, v0, 0.0)
    mms, _ = pairwise_sweep(params, metric, st0, np.array([1e-4, 0, 0]),
                            2 * np.pi, (1.0, 0.5), CFG)
    ratio = mms[0] / mms[1]
    return ratio, (3.2, 4.8)


def check_pairwise_uniform_b_pure_linear(scale):
    # flat conformal factor, linear vector potential: the dual flow is an
    # exactly linear ODE, so the pairwise mismatch sits at the integrator floor
    gauge = build_field("uniform_B", "nr", {"B": 2.0})
    params = ParticleParams(m=1.0, e=1.0, energy=0.5)
    metric = conformal_extended_metric(params, mode="nr", source=gauge)
    st0 = GeodesicState(np.array([1.0, 0, 0]), np.array([0.0, 1.0, 0.0]), 0.0)
    res = pairwise_oracle(params, metric, st0, np.array([1e-3, 0, 0]),
                          4 * np.pi, CFG)
    return res.max_mismatch, 1e-9


def check_stability_classes(scale):
    from .fields import flat_metric
    ok = True
    detail = []
    # flat: linear growth
    pf = ParticleParams(m=1.0)
    metF = flat_metric(3, pf)
    baseF = integrate(DualGeodesicFlow(pf, metF),
                      np.array([0, 0, 0, 1.0, 0, 0]), 0.0, 10.0, CFG)
    devF = integrate_deviation(pf, metF, baseF, np.array([1e-4, 0, 0]),
                               xi_dot0=np.array([0, 1e-4, 0]), config=CFG)
    repF = stability_indicator(devF)
    ok &= repF.classification == "linear" and abs(repF.exponent) < 0.05
    detail.append(f"flat={repF.classification}")
    # oscillator: bounded
    _, params, metric, x0, p0 = _osc_setup()
    v0 = lowered_velocity(params, metric, None, PhaseState(x0, p0, 0.0))
    base = integrate(DualGeodesicFlow(params, metric),
                     np.concatenate([x0, v0]), 0.0, 6 * np.pi, CFG)
    dev = integrate_deviation(params, metric, base, np.array([1e-3, 0, 0]),
                              config=CFG)
    rep = stability_indicator(dev)
    ok &= rep.classification == "bounded"
    detail.append(f"oscillator={rep.classification}")
    # inverted oscillator: exponential, positive exponent matching the pair
    Vinv = ScalarPotential(lambda x: -0.5 * float(x @ x),
                           gradient=lambda x: -x,
                           hessian=lambda x: -np.eye(3), dim=3)
    pinv0 = ParticleParams(m=1.0, e=0.0)
    x0i = np.array([0.1, 0.0, 0.0])
    p0i = np.array([0.99, 0.0, 0.0])
    flow_h = FlatHamiltonFlow(pinv0, Vinv, 3)
    Ei = flow_h.energy(0.0, np.concatenate([x0i, p0i]))
    pinv = pinv0.with_energy(Ei)
    metI = conformal_extended_metric(pinv, mode="nr", source=Vinv)
    v0i = lowered_velocity(pinv, metI, None, PhaseState(x0i, p0i, 0.0))
    baseI = integrate(DualGeodesicFlow(pinv, metI),
                      np.concatenate([x0i, v0i]), 0.0, 5.0, CFG)
    devI = integrate_deviation(pinv, metI, baseI, np.array([1e-5, 0, 0]),
                               config=CFG)
    repI = stability_indicator(devI)
    ok &= repI.classification == "exponential" and repI.exponent > 0.1
    # pairwise separation exponent for comparison
    resI = pairwise_oracle(pinv, metI, GeodesicState(x0i, v0i, 0.0),
                           np.array([1e-5, 0, 0]), 5.0, CFG)
    sep = np.linalg.norm(resI.xi_pair, axis=1)
    half = len(sep) // 2
    A = np.vstack([resI.s[half:], np.ones_like(resI.s[half:])]).T
    slope_pair = float(np.linalg.lstsq(A, np.log(sep[half:]), rcond=None)[0][0])
    rel = abs(repI.exponent - slope_pair) / abs(slope_pair)
    ok &= rel < 0.4
    detail.append(f"inverted={repI.classification} "
                  f"exp={repI.exponent:.3f} pair={slope_pair:.3f}")
    return (0.0 if ok else 1.0), 0.5, "; ".join(detail)


# ----------------------------------------------------------------------
# maxwell5d
# ----------------------------------------------------------------------

def _grid(n=8, ntau=16):
    return Grid4(shape=(n,) * 4, origin=(-2.0,) * 4, spacing=(4.0 / n,) * 4,
                 ntau=ntau, tau0=0.0, dtau=2 * np.pi / ntau, sigma=1)


def check_mode_eigenvalue(scale):
    grid = _grid()
    X = grid.meshgrid()
    kvec = 2 * np.pi * np.array([1.0, 2.0, 0.0, 0.0]) / 4.0
    s0 = 2 * np.pi * 2 / (grid.ntau * grid.dtau)
    phase = kvec[0] * X[0] + kvec[1] * X[1] - s0 * X[4]
    a = np.zeros(grid.full_shape + (5,), dtype=complex)
    a[..., 4] = 0.3 * np.exp(1j * phase)
    eig = grid.sigma * stencil_symbol(s0, grid.dtau) ** 2 \
        + spatial_stencil_symbol(kvec, grid)
    resid, _ = wave_residual(a, eig * a, grid)
    worst = float(np.max(np.abs(resid)))
    amp = np.ascontiguousarray(a[:, :, :, :, 0, :])
    for sig in (1, -1):
        mode = ModeField(s=2.0, amplitude=amp, sigma=sig)
        eig_m = sig * 4.0 + spatial_stencil_symbol(kvec, grid)
        r = mode_residual(mode, eig_m * amp, grid)
        worst = max(worst, float(np.max(np.abs(r))))
    return worst, 1e-12


def check_wave_mode_consistency(scale):
    # mode-by-mode residual with stencil-symbol mass, inverse-transformed,
    # equals the direct position-space residual on the common interior
    rng = np.random.default_rng(SEED + 15)
    grid = _grid(n=6, ntau=8)
    X = grid.meshgrid()
    a = np.zeros(grid.full_shape + (5,), dtype=complex)
    for _ in range(3):
        kn = rng.integers(0, 3, size=4)
        kv = 2 * np.pi * kn / 4.0
        sn = rng.integers(0, 4)
        s0 = 2 * np.pi * sn / (grid.ntau * grid.dtau)
        ph = sum(kv[m] * X[m] for m in range(4)) - s0 * X[4]
        c = rng.normal() + 1j * rng.normal()
        a[..., rng.integers(0, 5)] += 0.2 * c * np.exp(1j * ph)
    j = np.zeros_like(a)
    direct, _ = wave_residual(a, j, grid)
    modes = fourier_modes(a, grid)
    out_modes = []
    for m in modes:
        sd = stencil_symbol(m.s, grid.dtau)
        shifted = ModeField(s=np.abs(sd), amplitude=m.amplitude, sigma=m.sigma)
        r = mode_residual(shifted, np.zeros_like(m.amplitude), grid)
        out_modes.append(ModeField(s=m.s, amplitude=r, sigma=m.sigma))
    recon = modes_to_samples(out_modes, grid)
    inner_tau = recon[:, :, :, :, 1:-1, :]
    err = np.max(np.abs(-inner_tau * 0 + inner_tau - (-direct * 0 + direct)))
    return float(err), 1e-10


def check_zero_mode(scale):
    grid = Grid4(shape=(8,) * 4, origin=(-2.0,) * 4, spacing=(0.5,) * 4,
                 ntau=41, tau0=-8.0, dtau=0.4, sigma=1)
    X = grid.meshgrid()
    w = np.exp(-0.5 * (X[4] / 1.0) ** 2) / (1.0 * np.sqrt(2 * np.pi))
    Af = np.exp(-(X[0] ** 2 + X[1] ** 2) / 4.0)
    a = np.zeros(grid.full_shape + (5,))
    a[..., 1] = Af * w
    # divergence-free current from an antisymmetric generator
    G = np.exp(-(X[0] ** 2 + X[1] ** 2 + X[2] ** 2 + X[3] ** 2) / 2.0
               - (X[4] / 1.2) ** 2)
    j = np.zeros_like(a)
    j[..., 0] = G * (-2 * X[4] / 1.2 ** 2)
    j[..., 4] = G * X[0]
    A, J, cont = zero_mode_reduce(a, j, grid)
    target = np.broadcast_to(Af, grid.full_shape)[..., 0]
    err_a = float(np.max(np.abs(A[..., 1] - target)))
    err_cont = float(np.max(np.abs(cont)))
    return max(err_a, err_cont / 10.0), 1e-6, f"A_err={err_a:.2e} cont={err_cont:.2e}"


def check_gauge_invariance(scale):
    grid = _grid()
    X = grid.meshgrid()
    kvec = 2 * np.pi * np.array([1.0, 2.0, 0.0, 0.0]) / 4.0
    s0 = 2 * np.pi * 2 / (grid.ntau * grid.dtau)
    a = np.zeros(grid.full_shape + (5,))
    a[..., 4] = 0.3 * np.cos(kvec[0] * X[0] + kvec[1] * X[1] - s0 * X[4])
    a[..., 1] = 0.2 * np.cos(kvec[1] * X[1])
    kg = 2 * np.pi * np.array([2.0, 1.0, 0.0, 0.0]) / 4.0
    ssym = spatial_stencil_symbol(kg, grid)
    s_null = discrete_frequency_for(ssym, grid)
    lam = 0.05 * np.cos(kg[0] * X[0] + kg[1] * X[1] - s_null * X[4])
    a2 = gauge_transform(a, lam, grid)
    fb = grid_field_strength(a, grid)
    fa = grid_field_strength(a2, grid)
    inter = (slice(1, -1),) * 5
    err = float(np.max(np.abs((fa - fb)[inter])))
    # constant gauge function leaves a unchanged
    a3 = gauge_transform(a, np.full(grid.full_shape, 0.7), grid)
    err = max(err, float(np.max(np.abs(a3 - a))))
    return err, 1e-10


def check_wave_refinement(scale):
    # truncation of the wave residual for a smooth exact pair drops as O(h^2)
    def resid(n, ntau):
        g = Grid4(shape=(n,) * 4, origin=(-2.0,) * 4, spacing=(4.0 / n,) * 4,
                  ntau=ntau, tau0=0.0, dtau=2 * np.pi / ntau, sigma=1)
        X = g.meshgrid()
        kv = 2 * np.pi * np.array([1.0, 1.0, 0.0, 0.0]) / 4.0
        s0 = 1.0
        ph = kv[0] * X[0] + kv[1] * X[1] - s0 * X[4]
        a = np.zeros(g.full_shape + (5,))
        a[..., 4] = 0.3 * np.cos(ph)
        eig_true = g.sigma * s0 ** 2 + float(np.sum(
            np.array([-1.0, 1, 1, 1]) * kv ** 2))
        r, _ = wave_residual(a, eig_true * a, g)
        return np.max(np.abs(r))
    r1 = resid(8, 8)
    r2 = resid(16, 16)
    ratio = float(r1 / r2)
    return ratio, (3.4, 4.6)


# ----------------------------------------------------------------------
# conservation
# ----------------------------------------------------------------------

def check_k_conservation_static(scale):
    gauge = build_field("uniform_B", "rel", {"B": 1.0})
    params = ParticleParams(m=1.0, e=1.0)
    flow = FlatHamiltonFlow(params, gauge, 4)
    x0 = np.array([0.0, 1.0, 0.0, 0.0])
    p0 = np.array([1.5, 0.0, 1.0, 0.1])
    traj = integrate(flow, np.concatenate([x0, p0]), 0.0, 30.0, CFG)
    K = traj.diag["K"]
    mp2 = traj.diag["mp2"]
    drift_k = float(np.max(np.abs(K - K[0])) / abs(K[0]))
    drift_m = float(np.max(np.abs(mp2 - mp2[0])) / max(abs(mp2[0]), 1.0))
    return max(drift_k, drift_m), 1e-9


def check_balance_decomposition(scale):
    gauge = build_field("tau_linear_a5", "rel", {"c": 0.05})
    params = ParticleParams(m=1.0, e=1.0)
    flow = FlatHamiltonFlow(params, gauge, 4)
    x0 = np.array([0.0, 1.0, 0.0, 0.0])
    p0 = np.array([1.5, 0.0, 1.0, 0.1])
    traj = integrate(flow, np.concatenate([x0, p0]), 0.0, 10.0, CFG)
    s, resid, dk = mass_balance_residual(params, gauge, traj)
    return float(np.max(np.abs(dk + resid))), 1e-6


def check_compensating_pair(scale):
    rng = np.random.default_rng(SEED + 16)
    params = ParticleParams(m=1.0, e=1.0)
    x = rng.normal(size=4)
    s0 = 0.3
    v_low = rng.normal(size=4)
    avec = VectorTimeField(
        lambda x_, s_: np.array([0.1 * s_, -0.2 * s_, 0.05 * s_, 0.0]),
        jac=lambda x_, s_: np.zeros((4, 4)),
        d_s=lambda x_, s_: np.array([0.1, -0.2, 0.05, 0.0]),
        hess=lambda x_, s_: np.zeros((4, 4, 4)),
        jac_ds=lambda x_, s_: np.zeros((4, 4)), dim=4)
    da = avec.ds(x, s0)
    target = (params.e / params.m) * float(da @ v_low)
    u = eta4 @ v_low
    alpha = -2.0 * target / float(u @ v_low) ** 2
    dU = alpha * np.outer(u, u)
    U0 = eta4.copy()

    def upper_fn(x_, s_):
        return U0 + (s_ - s0) * dU

    def lower_fn(x_, s_):
        return np.linalg.inv(upper_fn(x_, s_))

    def ds_lower(x_, s_):
        gl = lower_fn(x_, s_)
        return -gl @ dU @ gl

    from .fields import CallableBase, ExtendedMetric
    base = CallableBase(lower_fn, 4,
                        dx=lambda x_, s_: np.zeros((4, 4, 4)),
                        ds=ds_lower,
                        dxdx=lambda x_, s_: np.zeros((4, 4, 4, 4)),
                        dxds=lambda x_, s_: np.zeros((4, 4, 4)),
                        dsds=None)
    metric = ExtendedMetric(base, avec, params)
    res = gutzwiller_condition_residual(metric, avec, params,
                                        GeodesicState(x, v_low, s0))
    # tau-dependent gauge with a static metric reduces to the gauge term alone
    met_static = extend_metric(eta4.copy(), avec, params)
    res2 = gutzwiller_condition_residual(met_static, avec, params,
                                         GeodesicState(x, v_low, s0))
    formula = -(params.e / params.m) * float(da @ v_low)
    return max(abs(res), abs(res2 - formula)), 1e-12


def check_condition_vs_dk(scale):
    # finite-differenced dK/dtau along a canonical flow equals m times the
    # condition residual evaluated along the same flow
    gauge = build_field("tau_linear_a5", "rel", {"c": 0.04})
    params0 = ParticleParams(m=1.0, e=1.0)
    flow = FlatHamiltonFlow(params0, gauge, 4)
    x0 = np.array([0.0, 0.5, 0.0, 0.0])
    p0 = np.array([1.4, 0.2, 0.6, 0.0])
    energy = flow.energy(0.0, np.concatenate([x0, p0]))
    params = params0.with_energy(energy)
    metric = conformal_extended_metric(params, mode="rel", source=gauge)
    traj = integrate(flow, np.concatenate([x0, p0]), 0.0, 4.0, CFG)
    n = 801
    s, resid, dk = mass_balance_residual(params, gauge, traj, n=n)
    rows = traj.eval(s)
    worst = 0.0
    for i in range(0, n, 50):
        st_ph = PhaseState(rows[i, :4], rows[i, 4:], s[i])
        v_low = lowered_velocity(params, metric, gauge.a, st_ph)
        cond = gutzwiller_condition_residual(metric, gauge.a, params,
                                             GeodesicState(rows[i, :4], v_low, s[i]))
        worst = max(worst, abs(dk[i] - params.m * cond))
    return worst, 1e-6


# ----------------------------------------------------------------------
# determinism (full scale)
# ----------------------------------------------------------------------

def check_determinism(scale):
    import yaml as _yaml
    from .scenarios import load_config, run
    cfg_doc = {
        "mode": "nr",
        "field": {"id": "harmonic", "params": {"k": 1.0}},
        "particle": {"m": 1.0, "e": 0.0},
        "initial": {"x": [0.6, 0.0, 0.0], "p": [0.0, 1.2806248474865697, 0.0]},
        "span": 6.283185307179586,
        "integrator": {"max_step": 0.05},
        "analyses": ["equivalence"],
        "seed": 11,
    }
    mismatch = 0.0
    with tempfile.TemporaryDirectory() as td:
        td = Path(td)
        cfg_path = td / "scn.yaml"
        cfg_path.write_text(_yaml.safe_dump(cfg_doc))
        outs = []
        for i in (1, 2):
            out = td / f"run{i}"
            cfg = load_config(cfg_path)
            cfg.output_dir = str(out)
            run(cfg)
            outs.append(out)
        for name in ("hamilton.csv", "dual.csv"):
            b1 = (outs[0] / name).read_bytes()
            b2 = (outs[1] / name).read_bytes()
            if b1 != b2:
                mismatch = 1.0
    return mismatch, 0.0


CHECKS = [
    # name, scales, fn
    ("fields.conformal_reciprocity", ("quick", "full"), check_conformal_reciprocity),
    ("fields.strength_antisymmetry", ("quick", "full"), check_field_strength_antisymmetry),
    ("fields.gradient_consistency", ("quick", "full"), check_gradient_consistency),
    ("fields.conformal_gauge_agreement", ("quick", "full"), check_conformal_gauge_agreement),
    ("geometry.flat_annihilation", ("quick", "full"), check_flat_annihilation),
    ("geometry.connection_fd", ("quick", "full"), check_connection_fd),
    ("geometry.curvature_fd", ("quick", "full"), check_curvature_fd),
    ("geometry.riemann_antisymmetry", ("quick", "full"), check_riemann_antisymmetry),
    ("geometry.m_form", ("quick", "full"), check_mform),
    ("geometry.quadratic_form_conservation", ("quick", "full"), check_quadratic_form_conservation),
    ("dynamics.normal_form_consistency", ("quick", "full"), check_normal_form_consistency),
    ("dynamics.lorentz_collapse_nr", ("quick", "full"), check_lorentz_collapse_nr),
    ("dynamics.lorentz_collapse_rel", ("quick", "full"), check_lorentz_collapse_rel),
    ("dynamics.dual_equivalence_oscillator", ("quick", "full"), check_dual_equivalence_oscillator),
    ("dynamics.dual_equivalence_rel_potential", ("quick", "full"), check_dual_equivalence_rel_potential),
    ("dynamics.dual_equivalence_uniform_b", ("quick", "full"), check_dual_equivalence_uniform_b),
    ("dynamics.mapped_geodesic_agreement", ("quick", "full"), check_mapped_geodesic_agreement),
    ("dynamics.energy_conservation", ("quick", "full"), check_hamilton_energy_conservation),
    ("dynamics.integrator_cross_method", ("quick", "full"), check_integrator_cross_method),
    ("deviation.first_derivative_cancellation", ("quick", "full"), check_deviation_cancellation),
    ("deviation.raw_vs_blocks", ("quick", "full"), check_deviation_raw_vs_blocks),
    ("deviation.linearity", ("quick", "full"), check_deviation_linearity),
    ("deviation.pairwise_oscillator", ("quick", "full"), check_pairwise_oscillator),
    ("deviation.pairwise_uniform_b_well", ("quick", "full"), check_pairwise_uniform_b_well),
    ("deviation.pairwise_uniform_b_pure", ("quick", "full"), check_pairwise_uniform_b_pure_linear),
    ("deviation.stability_classes", ("quick", "full"), check_stability_classes),
    ("maxwell5d.mode_eigenvalue", ("quick", "full"), check_mode_eigenvalue),
    ("maxwell5d.wave_mode_consistency", ("quick", "full"), check_wave_mode_consistency),
    ("maxwell5d.zero_mode", ("quick", "full"), check_zero_mode),
    ("maxwell5d.gauge_invariance", ("quick", "full"), check_gauge_invariance),
    ("maxwell5d.wave_refinement", ("full",), check_wave_refinement),
    ("conservation.k_static", ("quick", "full"), check_k_conservation_static),
    ("conservation.balance_decomposition", ("quick", "full"), check_balance_decomposition),
    ("conservation.compensating_pair", ("quick", "full"), check_compensating_pair),
    ("conservation.condition_vs_dk", ("quick", "full"), check_condition_vs_dk),
    ("cli.determinism", ("full",), check_determinism),
]


def check_suite(scale: str = "quick") -> SuiteReport:
    """Run every invariant check at the requested scale.

    Failures and exceptions become report entries; the function itself does
    not raise.
    """
    if scale not in ("quick", "full"):
        raise ValueError("scale must be 'quick' or 'full'")
    t_suite = time.perf_counter()
    results = []
    for name, scales, fn in CHECKS:
        if scale not in scales:
            continue
        t0 = time.perf_counter()
        try:
            out = fn(scale)
            detail = ""
            if len(out) == 3:
                measured, threshold, detail = out
            else:
                measured, threshold = out
            if isinstance(threshold, tuple):
                lo, hi = threshold
                passed = lo <= measured <= hi
                results.append(CheckResult(name, passed, float(measured),
                                           float(hi), mode="range",
                                           detail=detail or f"range [{lo}, {hi}]",
                                           seconds=time.perf_counter() - t0))
            else:
                passed = measured <= threshold
                results.append(CheckResult(name, passed, float(measured),
                                           float(threshold), detail=detail,
                                           seconds=time.perf_counter() - t0))
        except Exception as exc:
            results.append(CheckResult(name, False, float("nan"), 0.0,
                                       detail=f"{type(exc).__name__}: {exc}",
                                       seconds=time.perf_counter() - t0))
    return SuiteReport(scale=scale, results=results,
                       seconds=time.perf_counter() - t_suite)
