"""Hamilton flows, dual-geodesic flows, the tangent-space map and integrators.

The mapping between the dual space and the Hamilton space acts on
velocities, v^i = g^{ij} v_j.  For conformal metrics the two flows trace
the same phase curves with the evolution parameters related by
ds_hamilton = phi dt_dual, phi the conformal factor; the equivalence
runner integrates the induced parameter alongside the dual geodesic and
compares states at matched parameter values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (DualGeoError, SingularConformalFactor, SingularityReached,
                     SingularMetric, StepFailure)
from .fields import (ExtendedMetric, Gauge3, Gauge5, ParticleParams,
                     ScalarPotential, VectorTimeField, field_strength,
                     flat_signature)
from .geometry import connection, m_form

__all__ = [
    "PhaseState",
    "GeodesicState",
    "VelocityState",
    "IntegratorConfig",
    "Trajectory",
    "hamilton_rhs",
    "geodesic_rhs_dual",
    "tangent_map",
    "lowered_velocity",
    "mapped_acceleration",
    "lorentz_reference",
    "geodesic_mapped",
    "integrate",
    "FlatHamiltonFlow",
    "MetricHamiltonFlow",
    "DualGeodesicFlow",
    "MappedGeodesicFlow",
    "LorentzFlow",
    "dual_equivalence",
    "EquivalenceReport",
    "random_onshell_velocity",
]


@dataclass(frozen=True)
class PhaseState:
    """Canonical state: contravariant position x^mu, momentum p^mu, parameter s."""

    x: np.ndarray
    p: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase state components must be finite")


@dataclass(frozen=True)
class GeodesicState:
    """Dual-space state: position x^mu and lowered velocity v_mu."""

    x: np.ndarray
    v_low: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v_low", np.asarray(self.v_low, dtype=float))
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v_low))):
            raise ValueError("geodesic state components must be finite")


@dataclass(frozen=True)
class VelocityState:
    """Phase point carrying a contravariant velocity instead of a momentum."""

    x: np.ndarray
    v: np.ndarray
    s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "dopri45"     # "dopri45" | "rk4"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.method not in ("dopri45", "rk4"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (self.max_step > 0 and self.max_steps > 0):
            raise ValueError("max_step and max_steps must be positive")


# ----------------------------------------------------------------------
# Right-hand sides (spec operations)
# ----------------------------------------------------------------------

def _velocity_of(state):
    """Velocity slot of a state: .v, else .v_low, else .p (velocity-in-p form)."""
    for attr in ("v", "v_low", "p"):
        if hasattr(state, attr):
            return getattr(state, attr)
    raise TypeError("state carries no velocity component")


def hamilton_rhs(params: ParticleParams, fields, state: PhaseState):
    """Canonical equations for the flat or metric Hamiltonian.

    ``fields`` selects the Hamiltonian: a ScalarPotential (kinetic + V),
    a Gauge3 / Gauge5 (minimally coupled with scalar -e A^0 / -e a5), an
    ExtendedMetric (metric form), or a (metric, gauge_vector) pair.
    Returns (dx/ds, dp/ds) with both indices contravariant.
    """
    x, p, s = state.x, state.p, state.s
    dim = x.size
    m, e = params.m, params.e
    if isinstance(fields, ExtendedMetric):
        return _metric_hamilton_rhs(params, fields, fields.gauge, state)
    if isinstance(fields, tuple):
        metric, gauge_vec = fields
        return _metric_hamilton_rhs(params, metric, gauge_vec, state)

    flat = flat_signature(dim)
    if isinstance(fields, (Gauge3, Gauge5)):
        vec = fields.a
        scal = fields.a0 if isinstance(fields, Gauge3) else fields.a5
        kin = (p - e * vec.value(x, s)) / m
        # dH/dx^nu = -e (da^k/dx^nu) (flat kin)_k - e d(scal)/dx^nu
        dH = -e * (vec.jac(x, s).T @ (flat @ kin)) - e * scal.grad(x, s)
        return kin, -flat @ dH
    if isinstance(fields, ScalarPotential):
        return p / m, -flat @ fields.gradient(x)
    if fields is None:
        return p / m, np.zeros(dim)
    raise TypeError(f"unsupported field collection {type(fields).__name__}")


def _metric_hamilton_rhs(params, metric: ExtendedMetric, gauge_vec, state: PhaseState):
    """Canonical flow of K = (1/2m) g_{mu nu} (p - e a)^mu (p - e a)^nu."""
    x, p, s = state.x, state.p, state.s
    m, e = params.m, params.e
    flat = metric.flat
    a = gauge_vec.value(x, s) if gauge_vec is not None else np.zeros(metric.dim)
    pi = p - e * a
    gl = metric.lower(x, s)
    v_low = gl @ pi / m
    dx = flat @ v_low
    dgl = metric.dx_lower(x, s)  # [mu, nu, alpha]
    dK_dx = 0.5 / m * np.einsum("mna,m,n->a", dgl, pi, pi)
    if gauge_vec is not None:
        dK_dx = dK_dx - (e / m) * np.einsum("ka,kl,l->a", gauge_vec.jac(x, s), gl, pi)
    dp = -flat @ dK_dx
    return dx, dp


def lowered_velocity(params: ParticleParams, metric: ExtendedMetric,
                     gauge_vec, state: PhaseState) -> np.ndarray:
    """Map a canonical state to the dual lowered velocity (1/m) g (p - e a)."""
    a = gauge_vec.value(state.x, state.s) if gauge_vec is not None else 0.0
    return metric.lower(state.x, state.s) @ (state.p - params.e * a) / params.m


def geodesic_rhs_dual(params: ParticleParams, metric: ExtendedMetric,
                      state: GeodesicState):
    """Normal-form dual geodesic: dv_i/ds = -Gamma v v - 2 Gamma4 v - Gamma44.

    Returns (dx/ds, dv_low/ds) with dx/ds the flat-raised lowered velocity.
    """
    x, v, s = state.x, state.v_low, state.s
    conn = connection(metric, x, s)
    acc = (-np.tensordot(v, np.tensordot(v, conn.gamma, axes=(0, 1)), axes=(0, 1))
           - 2.0 * conn.gamma4 @ v
           - conn.gamma44)
    return metric.flat @ v, acc


def tangent_map(metric: ExtendedMetric, state: GeodesicState) -> np.ndarray:
    """Raised velocity v^i = g^{ij} v_j of a dual-space state."""
    return metric.upper(state.x, state.s) @ state.v_low


def mapped_acceleration(params: ParticleParams, metric: ExtendedMetric,
                        gauge, state) -> np.ndarray:
    """Acceleration of the mapped (raised) velocity as a phase-point formula.

    state carries (x, v) with v the raised velocity.  The metric-gradient
    term contracts the derivative index with the inverse metric; for
    conformal metrics built on the energy shell this expression collapses
    to the flat Lorentz reference exactly.
    """
    x, s = state.x, state.s
    v = _velocity_of(state)
    gu = metric.upper(x, s)
    dg = metric.dx_lower(x, s)  # [mu, nu, alpha]
    acc = -0.5 * np.einsum("rl,mnl,m,n->r", gu, dg, v, v)
    if gauge is not None:
        fs = field_strength(gauge, x, s)
        em = params.e / params.m
        acc = acc + em * fs.f @ (metric.flat @ v)
        vec = gauge.a if isinstance(gauge, (Gauge3, Gauge5)) else gauge
        acc = acc - em * vec.ds(x, s)
    return acc


def lorentz_reference(params: ParticleParams, gauge, state) -> np.ndarray:
    """Flat-space (generalized) Lorentz acceleration at a phase point.

    acc^r = (e/m) [ f^{rk} (flat v)_k - f5^r ] with f5 the scalar-sector
    row of the field strength.
    """
    x, s = state.x, state.s
    v = _velocity_of(state)
    fs = field_strength(gauge, x, s)
    flat = flat_signature(fs.dim)
    em = params.e / params.m
    return em * (fs.f @ (flat @ v) - fs.f5)


def geodesic_mapped(params: ParticleParams, metric: ExtendedMetric,
                    state) -> np.ndarray:
    """Mapped-coordinate geodesic acceleration -M^mu_{rho nu} v^rho v^nu.

    Valid for gauge-free metrics; with the conformal metric on-shell it
    equals -(1/m) flat grad V.
    """
    if metric.gauge is not None:
        raise DualGeoError("geodesic_mapped requires a gauge-free metric")
    x, s = state.x, state.s
    v = _velocity_of(state)
    M = m_form(metric, x, s).m
    return -np.einsum("mrn,r,n->m", M, v, v)


# ----------------------------------------------------------------------
# Flows: packed-state wrappers around the RHS functions
# ----------------------------------------------------------------------

class _Flow:
    dim: int
    nstate: int

    def rhs(self, s, y):  # pragma: no cover - interface
        raise NotImplementedError

    def diagnostics(self, s, y):
        return {}


class FlatHamiltonFlow(_Flow):
    """Canonical flow of the flat Hamiltonian (potential or gauge form)."""

    def __init__(self, params: ParticleParams, fields, dim: int):
        self.params = params
        self.fields = fields
        self.dim = dim
        self.nstate = 2 * dim
        self.relativistic = dim == 4
        self.flat = flat_signature(dim)

    def split(self, y):
        return y[:self.dim], y[self.dim:]

    def rhs(self, s, y):
        x, p = self.split(y)
        dx, dp = hamilton_rhs(self.params, self.fields, PhaseState(x, p, s))
        return np.concatenate([dx, dp])

    def energy(self, s, y):
        x, p = self.split(y)
        m, e = self.params.m, self.params.e
        if isinstance(self.fields, ScalarPotential):
            return float(p @ (self.flat @ p)) / (2 * m) + self.fields.value(x)
        if isinstance(self.fields, (Gauge3, Gauge5)):
            vec = self.fields.a
            scal = self.fields.a0 if isinstance(self.fields, Gauge3) else self.fields.a5
            pi = p - e * vec.value(x, s)
            return float(pi @ (self.flat @ pi)) / (2 * m) - e * scal.value(x, s)
        return float(p @ (self.flat @ p)) / (2 * m)

    def kinetic_velocity(self, s, y):
        x, p = self.split(y)
        if isinstance(self.fields, (Gauge3, Gauge5)):
            return (p - self.params.e * self.fields.a.value(x, s)) / self.params.m
        return p / self.params.m

    def mass_squared(self, s, y):
        if not self.relativistic:
            return float("nan")
        x, p = self.split(y)
        pi = p - (self.params.e * self.fields.a.value(x, s)
                  if isinstance(self.fields, Gauge5) else 0.0)
        return -float(pi @ (self.flat @ pi))

    def diagnostics(self, s, y):
        return {"K": self.energy(s, y), "mp2": self.mass_squared(s, y)}


class MetricHamiltonFlow(_Flow):
    """Canonical flow of the metric Hamiltonian (dual-space oracle)."""

    def __init__(self, params: ParticleParams, metric: ExtendedMetric,
                 gauge_vec: VectorTimeField | None = None):
        self.params = params
        self.metric = metric
        self.gauge_vec = gauge_vec if gauge_vec is not None else metric.gauge
        self.dim = metric.dim
        self.nstate = 2 * self.dim

    def split(self, y):
        return y[:self.dim], y[self.dim:]

    def rhs(self, s, y):
        x, p = self.split(y)
        dx, dp = _metric_hamilton_rhs(self.params, self.metric, self.gauge_vec,
                                      PhaseState(x, p, s))
        return np.concatenate([dx, dp])

    def energy(self, s, y):
        x, p = self.split(y)
        a = self.gauge_vec.value(x, s) if self.gauge_vec is not None else 0.0
        pi = p - self.params.e * a
        return float(pi @ self.metric.lower(x, s) @ pi) / (2 * self.params.m)

    def diagnostics(self, s, y):
        return {"K": self.energy(s, y)}


class DualGeodesicFlow(_Flow):
    """Normal-form dual geodesic flow in (x, v_low).

    With ``with_time_map=True`` (conformal metrics only) an extra state
    component integrates the induced Hamilton-side parameter,
    ds_hamilton/dt = phi(x, t).
    """

    def __init__(self, params: ParticleParams, metric: ExtendedMetric,
                 with_time_map: bool = False):
        self.params = params
        self.metric = metric
        self.dim = metric.dim
        self.with_time_map = with_time_map
        self.nstate = 2 * self.dim + (1 if with_time_map else 0)

    def split(self, y):
        return y[:self.dim], y[self.dim:2 * self.dim]

    def rhs(self, s, y):
        x, v = self.split(y)
        dx, dv = geodesic_rhs_dual(self.params, self.metric, GeodesicState(x, v, s))
        if self.with_time_map:
            return np.concatenate([dx, dv, [self.metric.conformal_factor(x, s)]])
        return np.concatenate([dx, dv])

    def energy(self, s, y):
        x, v = self.split(y)
        return 0.5 * self.params.m * float(v @ self.metric.upper(x, s) @ v)

    def mass_squared(self, s, y):
        if self.dim != 4:
            return float("nan")
        x, v = self.split(y)
        w = self.metric.upper(x, s) @ v
        return -self.params.m ** 2 * float(w @ self.metric.flat @ w)

    def diagnostics(self, s, y):
        d = {"K": self.energy(s, y)}
        if self.dim == 4:
            d["mp2"] = self.mass_squared(s, y)
        return d


class MappedGeodesicFlow(_Flow):
    """Flow of the mapped system: dx/ds = v, dv/ds = -M v v (gauge-free)."""

    def __init__(self, params: ParticleParams, metric: ExtendedMetric):
        self.params = params
        self.metric = metric
        self.dim = metric.dim
        self.nstate = 2 * self.dim

    def split(self, y):
        return y[:self.dim], y[self.dim:]

    def rhs(self, s, y):
        x, v = self.split(y)
        acc = geodesic_mapped(self.params, self.metric, GeodesicState(x, v, s))
        return np.concatenate([v, acc])

    def diagnostics(self, s, y):
        x, v = self.split(y)
        gl = self.metric.lower(x, s)
        return {"K": 0.5 * self.params.m * float(v @ gl @ v)}


class LorentzFlow(_Flow):
    """Flat-space reference flow: dx/ds = v, dv/ds = Lorentz acceleration."""

    def __init__(self, params: ParticleParams, gauge):
        self.params = params
        self.gauge = gauge
        self.dim = gauge.dim
        self.nstate = 2 * self.dim

    def split(self, y):
        return y[:self.dim], y[self.dim:]

    def rhs(self, s, y):
        x, v = self.split(y)
        acc = lorentz_reference(self.params, self.gauge, GeodesicState(x, v, s))
        return np.concatenate([v, acc])


# ----------------------------------------------------------------------
# Integrators
# ----------------------------------------------------------------------

# Dormand-Prince 5(4) embedded pair with quartic dense output.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_DP_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920,
                  -17253 / 339200, 22 / 525, -1 / 40])
_DP_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


class Trajectory:
    """Dense-sampled solution of one flow.

    ``t``/``y`` hold the accepted nodes, ``diag`` per-node diagnostics and
    ``stats`` the integrator counters.  ``eval`` interpolates with the
    integrator's own dense-output polynomials (quartic for the embedded
    pair, cubic Hermite for fixed RK4).
    """

    def __init__(self, flow, t, y, f, diag, dense, stats, method):
        self.flow = flow
        self.t = t
        self.y = y
        self.f = f
        self.diag = diag
        self.dense = dense
        self.stats = stats
        self.method = method

    @property
    def t0(self):
        return float(self.t[0])

    @property
    def t_end(self):
        return float(self.t[-1])

    def eval(self, t):
        """Interpolate the state at scalar or array parameter values."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        lo, hi = min(self.t0, self.t_end), max(self.t0, self.t_end)
        span = max(hi - lo, 1.0)
        if np.any(t_arr < lo - 1e-9 * span) or np.any(t_arr > hi + 1e-9 * span):
            raise ValueError("evaluation parameter outside the integrated span")
        t_arr = np.clip(t_arr, lo, hi)
        nodes = self.t
        idx = np.searchsorted(nodes, t_arr, side="right") - 1
        idx = np.clip(idx, 0, len(nodes) - 2)
        out = np.empty((t_arr.size, self.y.shape[1]))
        for n, (ti, seg) in enumerate(zip(t_arr, idx)):
            h = nodes[seg + 1] - nodes[seg]
            theta = 0.0 if h == 0 else (ti - nodes[seg]) / h
            if self.method == "dopri45":
                K = self.dense[seg]                      # (7, ny)
                tp = np.array([theta, theta ** 2, theta ** 3, theta ** 4])
                out[n] = self.y[seg] + h * (K.T @ (_DP_P @ tp))
            else:
                y0, y1 = self.y[seg], self.y[seg + 1]
                f0, f1 = self.f[seg], self.f[seg + 1]
                t2, t3 = theta ** 2, theta ** 3
                h00 = 2 * t3 - 3 * t2 + 1
                h10 = t3 - 2 * t2 + theta
                h01 = -2 * t3 + 3 * t2
                h11 = t3 - t2
                out[n] = h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
        if np.isscalar(t) or np.ndim(t) == 0:
            return out[0]
        return out


def _error_norm(err, y0, y1, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def integrate(flow, y0, s0, span, config: IntegratorConfig | None = None,
              halt=None) -> Trajectory:
    """Integrate a flow over [s0, s0 + span].

    Parameters
    ----------
    flow : flow object with ``rhs(s, y)`` and optional ``diagnostics``
    y0 : initial packed state
    s0, span : parameter window (span > 0)
    config : integrator configuration
    halt : optional predicate ``halt(s, y)``; integration stops after the
        first accepted node where it returns True.

    Raises
    ------
    StepFailure
        if the local tolerance is unreachable or the step budget runs out.
    SingularityReached
        if the right-hand side hits a field/metric singularity; the
        exception carries the partial trajectory.
    """
    config = config or IntegratorConfig()
    if not (span > 0 and np.isfinite(span)):
        raise ValueError("span must be positive and finite")
    y0 = np.asarray(y0, dtype=float)
    if config.method == "rk4":
        return _integrate_rk4(flow, y0, s0, span, config, halt)
    return _integrate_dopri(flow, y0, s0, span, config, halt)


def _collect(flow, ts, ys, fs, dense, stats, method):
    t = np.asarray(ts)
    y = np.vstack(ys)
    f = np.vstack(fs)
    diag_keys = flow.diagnostics(t[0], y[0]).keys() if hasattr(flow, "diagnostics") else []
    diag = {k: np.array([flow.diagnostics(ti, yi)[k] for ti, yi in zip(t, y)])
            for k in diag_keys}
    return Trajectory(flow, t, y, f, diag, dense, stats, method)


def _integrate_dopri(flow, y0, s0, span, config, halt):
    rtol, atol = config.rel_tol, config.abs_tol
    t, y = float(s0), y0.copy()
    t_end = t + span
    f = np.asarray(flow.rhs(t, y))
    h = min(config.max_step, span / 100.0)
    h = max(h, 1e-12 * span)
    ts, ys, fs, dense = [t], [y.copy()], [f.copy()], []
    n_accept = n_reject = 0
    n_eval = 1
    err_prev = 1.0
    hmin_floor = 16.0 * np.finfo(float).eps

    while t < t_end - 1e-14 * span:
        if n_accept + n_reject > config.max_steps:
            raise StepFailure(f"step budget {config.max_steps} exceeded at s={t}")
        h = min(h, t_end - t, config.max_step)
        hmin = hmin_floor * max(abs(t), 1.0)
        try:
            K = np.empty((7, y.size))
            K[0] = f
            for i in range(1, 6):
                yi = y + h * (_DP_A[i] @ K[:i])
                K[i] = flow.rhs(t + _DP_C[i] * h, yi)
            y1 = y + h * (_DP_B @ K[:6])
            K[6] = flow.rhs(t + h, y1)
            n_eval += 6
        except (SingularConformalFactor, SingularMetric) as exc:
            if h <= 4.0 * hmin:
                traj = _collect(flow, ts, ys, fs, dense,
                                {"steps": n_accept, "rejections": n_reject,
                                 "evals": n_eval, "status": "singular"}, "dopri45")
                raise SingularityReached(str(exc), partial=traj) from exc
            h *= 0.25
            continue
        err = _error_norm(h * (_DP_E @ K), y, y1, rtol, atol)
        if err <= 1.0 or h <= 2.0 * hmin:
            dense.append(K.copy())
            t += h
            y, f = y1, K[6].copy()
            ts.append(t)
            ys.append(y.copy())
            fs.append(f.copy())
            n_accept += 1
            if halt is not None and halt(t, y):
                break
            # PI step control
            fac = 0.9 * (err + 1e-16) ** -0.14 * (err_prev + 1e-16) ** 0.08
            err_prev = max(err, 1e-16)
            h *= min(10.0, max(0.2, fac))
        else:
            n_reject += 1
            h *= min(1.0, max(0.2, 0.9 * err ** -0.2))
            if h <= hmin:
                raise StepFailure(f"tolerance unreachable at s={t} (h={h:.3e})")
    stats = {"steps": n_accept, "rejections": n_reject, "evals": n_eval,
             "status": "ok"}
    return _collect(flow, ts, ys, fs, dense, stats, "dopri45")


def _integrate_rk4(flow, y0, s0, span, config, halt):
    h_nom = config.max_step if np.isfinite(config.max_step) else span / 1000.0
    n = max(1, int(np.ceil(span / h_nom - 1e-12)))
    if n > config.max_steps:
        raise StepFailure(f"fixed-step count {n} exceeds budget {config.max_steps}")
    h = span / n
    t, y = float(s0), y0.copy()
    f = np.asarray(flow.rhs(t, y))
    ts, ys, fs = [t], [y.copy()], [f.copy()]
    n_eval = 1
    try:
        for _ in range(n):
            k1 = f
            k2 = np.asarray(flow.rhs(t + h / 2, y + h / 2 * k1))
            k3 = np.asarray(flow.rhs(t + h / 2, y + h / 2 * k2))
            k4 = np.asarray(flow.rhs(t + h, y + h * k3))
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
            f = np.asarray(flow.rhs(t, y))
            n_eval += 4
            ts.append(t)
            ys.append(y.copy())
            fs.append(f.copy())
            if halt is not None and halt(t, y):
                break
    except (SingularConformalFactor, SingularMetric) as exc:
        traj = _collect(flow, ts, ys, fs, None,
                        {"steps": len(ts) - 1, "rejections": 0,
                         "evals": n_eval, "status": "singular"}, "rk4")
        raise SingularityReached(str(exc), partial=traj) from exc
    stats = {"steps": len(ts) - 1, "rejections": 0, "evals": n_eval, "status": "ok"}
    return _collect(flow, ts, ys, fs, None, stats, "rk4")


# ----------------------------------------------------------------------
# Dual-map equivalence runner
# ----------------------------------------------------------------------

@dataclass
class EquivalenceReport:
    max_position_error: float
    max_velocity_error: float
    span_covered: float
    energy: float
    samples: int
    hamilton: Trajectory = field(repr=False, default=None)
    dual: Trajectory = field(repr=False, default=None)


def dual_equivalence(params: ParticleParams, fields, x0, p0, span,
                     config: IntegratorConfig | None = None,
                     mode: str = "nr", n_samples: int = 2000,
                     dual_span_factor: float = 12.0) -> EquivalenceReport:
    """Integrate the Hamilton flow and the dual geodesic and compare them.

    The dual geodesic carries the induced parameter s(t) with
    ds/dt = phi; dual states are mapped through the tangent map and
    compared against the Hamilton trajectory evaluated at s(t).
    """
    from .fields import conformal_extended_metric  # local to avoid cycle noise

    config = config or IntegratorConfig()
    dim = 3 if mode == "nr" else 4
    x0 = np.asarray(x0, dtype=float)
    p0 = np.asarray(p0, dtype=float)

    flow_h = FlatHamiltonFlow(params, fields, dim)
    energy = flow_h.energy(0.0, np.concatenate([x0, p0]))
    params_e = params.with_energy(energy)
    metric = conformal_extended_metric(params_e, mode=mode, source=fields)

    traj_h = integrate(flow_h, np.concatenate([x0, p0]), 0.0, span, config)

    gauge_vec = metric.gauge
    v_low0 = lowered_velocity(params_e, metric, gauge_vec, PhaseState(x0, p0, 0.0))
    flow_d = DualGeodesicFlow(params_e, metric, with_time_map=True)
    y0 = np.concatenate([x0, v_low0, [0.0]])
    traj_d = integrate(flow_d, y0, 0.0, dual_span_factor * span, config,
                       halt=lambda t, y: y[-1] >= span)

    s_covered = float(traj_d.y[-1, -1])
    t_grid = np.linspace(traj_d.t0, traj_d.t_end, n_samples)
    yd = traj_d.eval(t_grid)
    s_map = yd[:, -1]
    keep = s_map <= span
    yd, s_map, t_grid = yd[keep], s_map[keep], t_grid[keep]
    yh = traj_h.eval(s_map)

    pos_err = 0.0
    vel_err = 0.0
    for row_d, row_h, ti, si in zip(yd, yh, t_grid, s_map):
        xd, vd = row_d[:dim], row_d[dim:2 * dim]
        xh = row_h[:dim]
        v_mapped = metric.upper(xd, ti) @ vd
        v_h = flow_h.kinetic_velocity(si, row_h)
        pos_err = max(pos_err, float(np.max(np.abs(xd - xh))))
        vel_err = max(vel_err, float(np.max(np.abs(v_mapped - v_h))))
    return EquivalenceReport(max_position_error=pos_err,
                             max_velocity_error=vel_err,
                             span_covered=min(s_covered, span),
                             energy=float(energy),
                             samples=int(len(t_grid)),
                             hamilton=traj_h, dual=traj_d)


def random_onshell_velocity(metric: ExtendedMetric, x, s, rng) -> np.ndarray:
    """Raised velocity putting (x, v) on the metric's energy shell.

    Solves (m/2) g_{mu nu} v^mu v^nu = E for the speed given a random
    direction (3D) or a random spatial part with the matched temporal
    component (4D, E < 0 timelike shells).
    """
    params = metric.params
    if params.energy is None:
        raise ValueError("metric params carry no shell energy")
    phi = metric.conformal_factor(x, s)
    target = 2.0 * params.energy / (params.m * phi)
    if metric.dim == 3:
        if target <= 0:
            raise ValueError("nonrelativistic shell requires E / phi > 0")
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        return np.sqrt(target) * u
    w = rng.normal(size=3)
    v0sq = float(w @ w) - target
    if v0sq <= 0:
        raise ValueError("shell condition unreachable for drawn spatial part")
    v0 = np.sqrt(v0sq) * (1.0 if rng.random() < 0.5 else -1.0)
    return np.concatenate([[v0], w])
