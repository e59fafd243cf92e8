"""Field catalog: named background fields consumed by scenario configs.

Every entry supplies analytic first and second partials so that geometry
and curvature evaluations stay at machine precision.  Identifiers:

====================  ====  =========================================
id                    mode  definition
====================  ====  =========================================
zero                  both  V = 0, A = 0
uniform_E             both  A^0 = strength * x^axis (3D) or
                            a5 = strength * x^axis (4D)
uniform_B             both  A = (-B x_y / 2, B x_x / 2, 0) about the
                            z-like axis, plus an optional electrostatic
                            well A^0 = -(well/2) |x_perp|^2 (a5 in 4D)
coulomb               both  V = -k / sqrt(|x|^2 + soft^2)
harmonic              both  V = (k/2) |x|^2 (3D), V = (k/2) (x^1)^2 (4D)
plane_wave_a5         rel   a5 = amp * cos(k . x - s0 tau)
tau_linear_a5         rel   a5 = c * tau
====================  ====  =========================================

3D coordinates are indexed (0, 1, 2); 4D coordinates (x^0..x^3) with the
timelike component first.
"""

from __future__ import annotations

import numpy as np

from .errors import UnknownCatalogId
from .fields import Gauge3, Gauge5, ScalarPotential, ScalarTimeField, VectorTimeField

__all__ = ["CATALOG_IDS", "build_field", "valid_ids"]

CATALOG_IDS = ("zero", "uniform_E", "uniform_B", "coulomb", "harmonic",
               "plane_wave_a5", "tau_linear_a5")


def valid_ids(mode=None):
    if mode == "nr":
        return tuple(i for i in CATALOG_IDS if not i.endswith("_a5"))
    return CATALOG_IDS


def _linear_scalar(dim, axis, strength):
    g = np.zeros(dim)
    g[axis] = strength
    return ScalarTimeField(
        lambda x, s: strength * x[axis],
        d_x=lambda x, s: g.copy(),
        d_s=lambda x, s: 0.0,
        d_xx=lambda x, s: np.zeros((dim, dim)),
        d_xs=lambda x, s: np.zeros(dim),
        d_ss=lambda x, s: 0.0,
        dim=dim, name=f"linear[{axis}]")


def _quadratic_well_scalar(dim, axes, well):
    """A^0 = -(well/2) sum over `axes` of x_a^2 (electrostatic trap)."""
    mask = np.zeros(dim)
    mask[list(axes)] = 1.0
    hess = -well * np.diag(mask)

    def val(x, s):
        return -0.5 * well * float(np.sum(mask * x * x))

    return ScalarTimeField(
        val,
        d_x=lambda x, s: -well * mask * x,
        d_s=lambda x, s: 0.0,
        d_xx=lambda x, s: hess.copy(),
        d_xs=lambda x, s: np.zeros(dim),
        d_ss=lambda x, s: 0.0,
        dim=dim, name="well")


def _uniform_b_vector(dim, b):
    """Rotational vector potential for a uniform magnetic-type field.

    3D: A = (-B x^1 / 2, B x^0 / 2, 0); 4D acts on the (x^1, x^2) plane
    with zero temporal component.
    """
    if dim == 3:
        def val(x, s):
            return np.array([-0.5 * b * x[1], 0.5 * b * x[0], 0.0])
        jac = np.zeros((3, 3))
        jac[0, 1] = -0.5 * b
        jac[1, 0] = 0.5 * b
    else:
        def val(x, s):
            return np.array([0.0, -0.5 * b * x[2], 0.5 * b * x[1], 0.0])
        jac = np.zeros((4, 4))
        jac[1, 2] = -0.5 * b
        jac[2, 1] = 0.5 * b
    return VectorTimeField(
        val,
        jac=lambda x, s, J=jac: J.copy(),
        d_s=lambda x, s: np.zeros(dim),
        hess=lambda x, s: np.zeros((dim, dim, dim)),
        jac_ds=lambda x, s: np.zeros((dim, dim)),
        dim=dim, name="uniform_B")


def _coulomb(dim, k, soft):
    def val(x):
        return -k / np.sqrt(float(x @ x) + soft ** 2)

    def grad(x):
        r2 = float(x @ x) + soft ** 2
        return k * x / r2 ** 1.5

    def hess(x):
        r2 = float(x @ x) + soft ** 2
        return k * (np.eye(dim) / r2 ** 1.5 - 3.0 * np.outer(x, x) / r2 ** 2.5)

    return ScalarPotential(val, gradient=grad, hessian=hess, dim=dim, name="coulomb")


def _harmonic(dim, k):
    if dim == 3:
        return ScalarPotential(
            lambda x: 0.5 * k * float(x @ x),
            gradient=lambda x: k * x,
            hessian=lambda x: k * np.eye(3),
            dim=3, name="harmonic")
    hess = np.zeros((4, 4))
    hess[1, 1] = k
    return ScalarPotential(
        lambda x: 0.5 * k * x[1] ** 2,
        gradient=lambda x: np.array([0.0, k * x[1], 0.0, 0.0]),
        hessian=lambda x, H=hess: H.copy(),
        dim=4, name="harmonic_x1")


def _plane_wave_a5(amp, kvec, s0):
    kvec = np.asarray(kvec, dtype=float)

    def phase(x, s):
        return float(kvec @ x) - s0 * s

    return ScalarTimeField(
        lambda x, s: amp * np.cos(phase(x, s)),
        d_x=lambda x, s: -amp * np.sin(phase(x, s)) * kvec,
        d_s=lambda x, s: amp * np.sin(phase(x, s)) * s0,
        d_xx=lambda x, s: -amp * np.cos(phase(x, s)) * np.outer(kvec, kvec),
        d_xs=lambda x, s: amp * np.cos(phase(x, s)) * kvec * s0,
        d_ss=lambda x, s: -amp * np.cos(phase(x, s)) * s0 ** 2,
        dim=4, name="plane_wave_a5")


def _tau_linear_a5(c):
    return ScalarTimeField(
        lambda x, s: c * s,
        d_x=lambda x, s: np.zeros(4),
        d_s=lambda x, s: c,
        d_xx=lambda x, s: np.zeros((4, 4)),
        d_xs=lambda x, s: np.zeros(4),
        d_ss=lambda x, s: 0.0,
        dim=4, name="tau_linear_a5")


def build_field(field_id: str, mode: str, params: dict | None = None):
    """Instantiate a catalog field for the given mode ("nr" or "rel").

    Returns a ScalarPotential (potential-type entries) or a Gauge3 /
    Gauge5 (gauge-type entries).
    """
    p = dict(params or {})
    dim = 3 if mode == "nr" else 4
    if field_id not in CATALOG_IDS:
        raise UnknownCatalogId(
            f"unknown field id {field_id!r}; valid ids: {', '.join(CATALOG_IDS)}")
    if mode == "nr" and field_id.endswith("_a5"):
        raise UnknownCatalogId(
            f"field id {field_id!r} is only available in mode 'rel'; "
            f"valid nr ids: {', '.join(valid_ids('nr'))}")

    if field_id == "zero":
        return Gauge3.zero() if mode == "nr" else Gauge5.zero()

    if field_id == "uniform_E":
        axis = int(p.get("axis", 0 if mode == "nr" else 1))
        strength = float(p.get("strength", 1.0))
        scal = _linear_scalar(dim, axis, strength)
        if mode == "nr":
            return Gauge3(a0=scal, a=VectorTimeField.zero(3))
        return Gauge5(a=VectorTimeField.zero(4), a5=scal)

    if field_id == "uniform_B":
        b = float(p.get("B", 1.0))
        well = float(p.get("well", 0.0))
        vec = _uniform_b_vector(dim, b)
        axes = (0, 1) if dim == 3 else (1, 2)
        scal = (_quadratic_well_scalar(dim, axes, well) if well != 0.0
                else ScalarTimeField.zero(dim))
        if mode == "nr":
            return Gauge3(a0=scal, a=vec)
        return Gauge5(a=vec, a5=scal)

    if field_id == "coulomb":
        return _coulomb(dim, float(p.get("k", 1.0)), float(p.get("soft", 0.0)))

    if field_id == "harmonic":
        return _harmonic(dim, float(p.get("k", 1.0)))

    if field_id == "plane_wave_a5":
        kvec = p.get("k", [0.0, 1.0, 0.0, 0.0])
        return Gauge5(a=VectorTimeField.zero(4),
                      a5=_plane_wave_a5(float(p.get("amplitude", 0.1)),
                                        kvec, float(p.get("s0", 1.0))))

    if field_id == "tau_linear_a5":
        return Gauge5(a=VectorTimeField.zero(4),
                      a5=_tau_linear_a5(float(p.get("c", 0.05))))

    raise UnknownCatalogId(field_id)  # pragma: no cover
