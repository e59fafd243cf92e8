"""Scalar potentials, gauge fields, field strengths and the extended dual metric.

Conventions used throughout the package:

* Positions are stored contravariant, ``x[alpha] = x^alpha``.  The lowered
  coordinate derivative d/dx_a is realised as ``flat[a, alpha] d/dx^alpha``
  where ``flat`` is the identity in 3D and diag(-1, 1, 1, 1) in 4D.
* The dual metric is carried through its lower-index block ``g_{mu nu}``;
  the inverse block and every derivative of it are produced analytically
  from the lower block via the inverse-derivative identities.
* The gauge closure of the extended metric is the row ``(e/m) A^k`` (3D)
  or ``(e/m) a^mu`` (4D); the corner component is a configurable constant,
  so its coordinate gradient vanishes by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from . import numdiff
from .errors import DimensionMismatch, SingularConformalFactor, SingularMetric

__all__ = [
    "ParticleParams",
    "ScalarPotential",
    "PotentialNR",
    "ScalarTimeField",
    "VectorTimeField",
    "Gauge3",
    "Gauge5",
    "FieldStrength",
    "field_strength",
    "ConformalFactor",
    "conformal_metric_nr",
    "conformal_metric_rel",
    "ExtendedMetric",
    "extend_metric",
    "flat_metric",
    "conformal_extended_metric",
    "eta4",
    "delta3",
    "flat_signature",
]

SINGULAR_GUARD_REL = 1e-9

delta3 = np.eye(3)
eta4 = np.diag([-1.0, 1.0, 1.0, 1.0])


def flat_signature(dim: int) -> np.ndarray:
    """Flat index-raising matrix: identity in 3D, Minkowski eta in 4D."""
    if dim == 3:
        return delta3.copy()
    if dim == 4:
        return eta4.copy()
    raise DimensionMismatch(f"supported dimensions are 3 and 4, got {dim}")


def _ab(a, b):
    """Contract the last axis of a with the first axis of b (reshape+matmul)."""
    return (a.reshape(-1, a.shape[-1]) @ b.reshape(b.shape[0], -1)).reshape(
        a.shape[:-1] + b.shape[1:])


@dataclass(frozen=True)
class ParticleParams:
    """Particle constants: mass m > 0, charge e, and the conserved energy.

    ``energy`` is the conserved Hamiltonian value on the shell that defines
    the conformal metric (E in the nonrelativistic case, K in the covariant
    one).  It may be left unset until the initial condition fixes it.
    """

    m: float
    e: float = 0.0
    energy: float | None = None

    def __post_init__(self):
        if not (self.m > 0.0) or not math.isfinite(self.m):
            raise ValueError(f"mass must be positive and finite, got {self.m}")
        if not math.isfinite(self.e):
            raise ValueError("charge must be finite")
        if self.energy is not None and not math.isfinite(self.energy):
            raise ValueError("energy must be finite")

    def with_energy(self, energy: float) -> "ParticleParams":
        return ParticleParams(self.m, self.e, float(energy))


class ScalarPotential:
    """Static scalar potential V(x) with analytic or differenced derivatives."""

    def __init__(self, value, gradient=None, hessian=None, dim=3, name="V"):
        self.dim = int(dim)
        self.name = name
        self._value = value
        self._gradient = gradient
        self._hessian = hessian

    def value(self, x):
        return float(self._value(np.asarray(x, dtype=float)))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        if self._gradient is not None:
            return np.asarray(self._gradient(x), dtype=float)
        return numdiff.grad_x(self._value, x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        if self._hessian is not None:
            return np.asarray(self._hessian(x), dtype=float)
        if self._gradient is not None:
            return numdiff.jac_x(self._gradient, x)
        return numdiff.hess_x(self._value, x)

    def as_time_field(self):
        """View this static potential as a field of (x, s) with zero s-partials."""
        d = self.dim
        return ScalarTimeField(
            lambda x, s: self.value(x),
            d_x=lambda x, s: self.gradient(x),
            d_s=lambda x, s: 0.0,
            d_xx=lambda x, s: self.hessian(x),
            d_xs=lambda x, s: np.zeros(d),
            d_ss=lambda x, s: 0.0,
            dim=d,
            name=self.name,
        )


# Spec-facing alias: the 3D potential type.
PotentialNR = ScalarPotential


class ScalarTimeField:
    """Scalar field f(x, s) of position and the evolution parameter.

    Analytic partials are used when supplied; anything missing falls back to
    central differences.
    """

    def __init__(self, fn, d_x=None, d_s=None, d_xx=None, d_xs=None, d_ss=None,
                 dim=3, name=""):
        self.fn = fn
        self.dim = int(dim)
        self.name = name
        self._d_x, self._d_s = d_x, d_s
        self._d_xx, self._d_xs, self._d_ss = d_xx, d_xs, d_ss

    def value(self, x, s):
        return float(self.fn(np.asarray(x, dtype=float), s))

    def grad(self, x, s):
        x = np.asarray(x, dtype=float)
        if self._d_x is not None:
            return np.asarray(self._d_x(x, s), dtype=float)
        return numdiff.grad_x(lambda q: self.fn(q, s), x)

    def ds(self, x, s):
        if self._d_s is not None:
            return float(self._d_s(np.asarray(x, dtype=float), s))
        return float(numdiff.d_s(lambda t: self.fn(np.asarray(x, dtype=float), t), s))

    def hess(self, x, s):
        x = np.asarray(x, dtype=float)
        if self._d_xx is not None:
            return np.asarray(self._d_xx(x, s), dtype=float)
        if self._d_x is not None:
            return numdiff.jac_x(lambda q: self._d_x(q, s), x)
        return numdiff.hess_x(lambda q: self.fn(q, s), x)

    def grad_ds(self, x, s):
        x = np.asarray(x, dtype=float)
        if self._d_xs is not None:
            return np.asarray(self._d_xs(x, s), dtype=float)
        if self._d_x is not None:
            return np.asarray(numdiff.d_s(lambda t: self._d_x(x, t), s), dtype=float)
        return numdiff.d_xs(self.fn, x, s)

    def dss(self, x, s):
        x = np.asarray(x, dtype=float)
        if self._d_ss is not None:
            return float(self._d_ss(x, s))
        if self._d_s is not None:
            return float(numdiff.d_s(lambda t: self._d_s(x, t), s))
        return float(numdiff.d_ss(lambda t: self.fn(x, t), s))

    @classmethod
    def zero(cls, dim):
        d = int(dim)
        return cls(lambda x, s: 0.0,
                   d_x=lambda x, s: np.zeros(d), d_s=lambda x, s: 0.0,
                   d_xx=lambda x, s: np.zeros((d, d)),
                   d_xs=lambda x, s: np.zeros(d), d_ss=lambda x, s: 0.0,
                   dim=d, name="0")


class VectorTimeField:
    """Vector field F^k(x, s) with component-first derivative arrays.

    ``jac`` has shape (comp, coord), ``hess`` (comp, coord, coord) and
    ``jac_ds`` (comp, coord).
    """

    def __init__(self, fn, jac=None, d_s=None, hess=None, jac_ds=None,
                 dim=3, name=""):
        self.fn = fn
        self.dim = int(dim)
        self.name = name
        self._jac, self._d_s = jac, d_s
        self._hess, self._jac_ds = hess, jac_ds

    def value(self, x, s):
        return np.asarray(self.fn(np.asarray(x, dtype=float), s), dtype=float)

    def jac(self, x, s):
        x = np.asarray(x, dtype=float)
        if self._jac is not None:
            return np.asarray(self._jac(x, s), dtype=float)
        return numdiff.jac_x(lambda q: self.fn(q, s), x)

    def ds(self, x, s):
        x = np.asarray(x, dtype=float)
        if self._d_s is not None:
            return np.asarray(self._d_s(x, s), dtype=float)
        return np.asarray(numdiff.d_s(lambda t: self.fn(x, t), s), dtype=float)

    def hess(self, x, s):
        x = np.asarray(x, dtype=float)
        if self._hess is not None:
            return np.asarray(self._hess(x, s), dtype=float)
        if self._jac is not None:
            return numdiff.jac_x(lambda q: self._jac(q, s), x)
        return numdiff.hess_vec_x(lambda q: self.fn(q, s), x)

    def jac_ds(self, x, s):
        x = np.asarray(x, dtype=float)
        if self._jac_ds is not None:
            return np.asarray(self._jac_ds(x, s), dtype=float)
        if self._jac is not None:
            return np.asarray(numdiff.d_s(lambda t: self._jac(x, t), s), dtype=float)
        return numdiff.d_xs(self.fn, x, s)

    @classmethod
    def zero(cls, dim):
        d = int(dim)
        return cls(lambda x, s: np.zeros(d),
                   jac=lambda x, s: np.zeros((d, d)),
                   d_s=lambda x, s: np.zeros(d),
                   hess=lambda x, s: np.zeros((d, d, d)),
                   jac_ds=lambda x, s: np.zeros((d, d)),
                   dim=d, name="0")


@dataclass(frozen=True)
class Gauge3:
    """Nonrelativistic gauge pair: scalar potential A^0(x, t), vector A(x, t)."""

    a0: ScalarTimeField
    a: VectorTimeField

    def __post_init__(self):
        if self.a.dim != 3 or self.a0.dim != 3:
            raise DimensionMismatch("Gauge3 fields must be 3-dimensional")

    @property
    def dim(self):
        return 3

    @classmethod
    def zero(cls):
        return cls(ScalarTimeField.zero(3), VectorTimeField.zero(3))


@dataclass(frozen=True)
class Gauge5:
    """Covariant gauge pair: 4-potential a^mu(x, tau) and fifth scalar a5(x, tau)."""

    a: VectorTimeField
    a5: ScalarTimeField
    fifth_signature: int = 1

    def __post_init__(self):
        if self.a.dim != 4 or self.a5.dim != 4:
            raise DimensionMismatch("Gauge5 fields must be 4-dimensional")
        if self.fifth_signature not in (1, -1):
            raise ValueError("fifth_signature must be +1 or -1")

    @property
    def dim(self):
        return 4

    @classmethod
    def zero(cls):
        return cls(VectorTimeField.zero(4), ScalarTimeField.zero(4))


@dataclass(frozen=True)
class FieldStrength:
    """Antisymmetric field tensor and the fifth-row force component.

    ``f[l, k]`` is the upper-index tensor built from the lowered coordinate
    derivative, f^{lk} = D_l A^k - D_k A^l, antisymmetric by construction.
    ``f5[r]`` is the scalar-sector row entering the generalized Lorentz
    force, d A^r / ds - flat^{r nu} d(scalar) / dx^nu, where the scalar is
    A^0 in 3D and a5 in 4D.
    """

    f: np.ndarray
    f5: np.ndarray

    @property
    def dim(self):
        return self.f.shape[0]


def field_strength(gauge, x, s) -> FieldStrength:
    """Field tensor of a Gauge3 or Gauge5 at (x, s)."""
    if isinstance(gauge, Gauge3):
        flat, vec, scal = delta3, gauge.a, gauge.a0
    elif isinstance(gauge, Gauge5):
        flat, vec, scal = eta4, gauge.a, gauge.a5
    else:
        raise TypeError("gauge must be Gauge3 or Gauge5")
    x = np.asarray(x, dtype=float)
    J = vec.jac(x, s)                  # J[k, alpha] = dA^k/dx^alpha
    DA = J @ flat.T                    # DA[k, l] = D_l A^k
    f = DA.T - DA
    f5 = vec.ds(x, s) - flat @ scal.grad(x, s)
    return FieldStrength(f=f, f5=f5)


class ConformalFactor:
    """Scalar factor E / (E - W(x, s)) with its first and second partials.

    W is an effective potential: the potential V itself, or -e A^0 / -e a5
    in the gauge form, which makes the two constructions share one code
    path and agree identically when V = -e A^0.
    """

    def __init__(self, energy: float, w: ScalarTimeField, guard_rel=SINGULAR_GUARD_REL):
        if energy == 0.0 or not math.isfinite(energy):
            raise SingularConformalFactor("shell energy must be finite and nonzero")
        self.energy = float(energy)
        self.w = w
        self.guard = guard_rel * abs(self.energy)

    def _den(self, x, s):
        den = self.energy - self.w.value(x, s)
        if abs(den) <= self.guard:
            raise SingularConformalFactor(
                f"conformal denominator {den:.3e} within guard {self.guard:.3e}")
        return den

    def value(self, x, s):
        return self.energy / self._den(x, s)

    def grad(self, x, s):
        phi = self.value(x, s)
        return phi * phi / self.energy * self.w.grad(x, s)

    def ds(self, x, s):
        phi = self.value(x, s)
        return phi * phi / self.energy * self.w.ds(x, s)

    def hess(self, x, s):
        phi = self.value(x, s)
        gw = self.w.grad(x, s)
        e = self.energy
        return (phi ** 2 / e) * self.w.hess(x, s) + (2.0 * phi ** 3 / e ** 2) * np.outer(gw, gw)

    def grad_ds(self, x, s):
        phi = self.value(x, s)
        e = self.energy
        return (phi ** 2 / e) * self.w.grad_ds(x, s) \
            + (2.0 * phi ** 3 / e ** 2) * self.w.grad(x, s) * self.w.ds(x, s)

    def dss(self, x, s):
        phi = self.value(x, s)
        e = self.energy
        ws = self.w.ds(x, s)
        return (phi ** 2 / e) * self.w.dss(x, s) + 2.0 * phi ** 3 / e ** 2 * ws * ws


def _effective_potential(params: ParticleParams, source, dim) -> ScalarTimeField:
    """W(x, s) for the conformal factor: V, or -e A^0 (3D) / -e a5 (4D)."""
    if isinstance(source, ScalarPotential):
        if source.dim != dim:
            raise DimensionMismatch("potential dimension does not match metric")
        return source.as_time_field()
    if isinstance(source, Gauge3):
        source = source.a0
    elif isinstance(source, Gauge5):
        source = source.a5
    if isinstance(source, ScalarTimeField):
        if source.dim != dim:
            raise DimensionMismatch("scalar field dimension does not match metric")
        e = params.e
        return ScalarTimeField(
            lambda x, s: -e * source.value(x, s),
            d_x=lambda x, s: -e * source.grad(x, s),
            d_s=lambda x, s: -e * source.ds(x, s),
            d_xx=lambda x, s: -e * source.hess(x, s),
            d_xs=lambda x, s: -e * source.grad_ds(x, s),
            d_ss=lambda x, s: -e * source.dss(x, s),
            dim=dim, name=f"-e*{source.name}")
    raise TypeError("source must be a ScalarPotential, ScalarTimeField, Gauge3 or Gauge5")


def conformal_metric_nr(params: ParticleParams, source, x, t) -> np.ndarray:
    """Pointwise 3x3 conformal dual metric E/(E - V) delta (or E/(E + e A^0))."""
    if params.energy is None:
        raise ValueError("params.energy must be set to build the conformal metric")
    w = _effective_potential(params, source, 3)
    phi = ConformalFactor(params.energy, w).value(np.asarray(x, dtype=float), t)
    return phi * delta3


def conformal_metric_rel(params: ParticleParams, source, x, tau) -> np.ndarray:
    """Pointwise 4x4 conformal dual metric K/(K - V) eta (or K/(K + e a5))."""
    if params.energy is None:
        raise ValueError("params.energy must be set to build the conformal metric")
    w = _effective_potential(params, source, 4)
    phi = ConformalFactor(params.energy, w).value(np.asarray(x, dtype=float), tau)
    return phi * eta4


class _BaseBlock:
    """Lower metric block and its partials; subclasses supply the analytics."""

    dim: int

    def lower(self, x, s):  # pragma: no cover - interface
        raise NotImplementedError

    def dx_lower(self, x, s):
        raise NotImplementedError

    def ds_lower(self, x, s):
        raise NotImplementedError

    def dxdx_lower(self, x, s):
        raise NotImplementedError

    def dxds_lower(self, x, s):
        raise NotImplementedError

    def dsds_lower(self, x, s):
        raise NotImplementedError


class FlatBase(_BaseBlock):
    def __init__(self, flat):
        self.flat = np.asarray(flat, dtype=float)
        self.dim = self.flat.shape[0]

    def lower(self, x, s):
        return self.flat.copy()

    def dx_lower(self, x, s):
        d = self.dim
        return np.zeros((d, d, d))

    def ds_lower(self, x, s):
        return np.zeros((self.dim, self.dim))

    def dxdx_lower(self, x, s):
        d = self.dim
        return np.zeros((d, d, d, d))

    def dxds_lower(self, x, s):
        d = self.dim
        return np.zeros((d, d, d))

    def dsds_lower(self, x, s):
        return np.zeros((self.dim, self.dim))


class ConformalBase(_BaseBlock):
    """Lower block phi(x, s) * flat for a conformal factor phi."""

    def __init__(self, flat, factor: ConformalFactor):
        self.flat = np.asarray(flat, dtype=float)
        self.dim = self.flat.shape[0]
        self.factor = factor

    def lower(self, x, s):
        return self.factor.value(x, s) * self.flat

    def dx_lower(self, x, s):
        g = self.factor.grad(x, s)
        return self.flat[:, :, None] * g[None, None, :]

    def ds_lower(self, x, s):
        return self.factor.ds(x, s) * self.flat

    def dxdx_lower(self, x, s):
        h = self.factor.hess(x, s)
        return self.flat[:, :, None, None] * h[None, None, :, :]

    def dxds_lower(self, x, s):
        g = self.factor.grad_ds(x, s)
        return self.flat[:, :, None] * g[None, None, :]

    def dsds_lower(self, x, s):
        return self.factor.dss(x, s) * self.flat


class CallableBase(_BaseBlock):
    """Lower block from a raw callable g(x, s); missing partials are differenced."""

    def __init__(self, fn, dim, dx=None, ds=None, dxdx=None, dxds=None, dsds=None):
        self.fn = fn
        self.dim = int(dim)
        self._dx, self._ds = dx, ds
        self._dxdx, self._dxds, self._dsds = dxdx, dxds, dsds

    def lower(self, x, s):
        return np.asarray(self.fn(np.asarray(x, dtype=float), s), dtype=float)

    def dx_lower(self, x, s):
        if self._dx is not None:
            return np.asarray(self._dx(x, s), dtype=float)
        return numdiff.jac_x(lambda q: self.fn(q, s), np.asarray(x, dtype=float))

    def ds_lower(self, x, s):
        if self._ds is not None:
            return np.asarray(self._ds(x, s), dtype=float)
        return np.asarray(numdiff.d_s(lambda t: self.fn(np.asarray(x, float), t), s))

    def dxdx_lower(self, x, s):
        if self._dxdx is not None:
            return np.asarray(self._dxdx(x, s), dtype=float)
        return numdiff.hess_vec_x(lambda q: self.fn(q, s), np.asarray(x, dtype=float))

    def dxds_lower(self, x, s):
        if self._dxds is not None:
            return np.asarray(self._dxds(x, s), dtype=float)
        return numdiff.d_xs(self.fn, np.asarray(x, dtype=float), s)

    def dsds_lower(self, x, s):
        if self._dsds is not None:
            return np.asarray(self._dsds(x, s), dtype=float)
        return np.asarray(numdiff.d_ss(lambda t: self.fn(np.asarray(x, float), t), s))


@dataclass
class MetricJet:
    """All metric tensors needed by the geometry at one point, shared-work.

    Lower-block derivatives carry the coordinate axis last; upper-block
    derivatives are produced from them through the inverse identities.
    Second-order fields are None when the jet was built with order=1.
    """

    gl: np.ndarray
    gu: np.ndarray
    dgl: np.ndarray          # (i, j, a)
    sgl: np.ndarray
    dgu: np.ndarray
    sgu: np.ndarray
    grow: np.ndarray         # (k,)
    dgrow: np.ndarray        # (k, a)
    sgrow: np.ndarray        # (k,)
    d2gl: np.ndarray | None = None   # (i, j, a, b)
    sdgl: np.ndarray | None = None   # (i, j, a)
    ssgl: np.ndarray | None = None   # (i, j)
    d2gu: np.ndarray | None = None
    sdgu: np.ndarray | None = None
    ssgu: np.ndarray | None = None
    d2grow: np.ndarray | None = None  # (k, a, b)
    sdgrow: np.ndarray | None = None  # (k, a)


class ExtendedMetric:
    """Dual metric with gauge row and constant corner component.

    The base block is the symmetric lower metric; ``upper`` and all of its
    partials come from the inverse-derivative identities, so a single
    analytic source feeds both index positions.  ``grow`` is the gauge row
    of the inverse extended metric, (e/m) times the gauge vector, with the
    corner held constant.
    """

    def __init__(self, base: _BaseBlock, gauge: VectorTimeField | None,
                 params: ParticleParams, corner: float = 0.0,
                 conformal: ConformalFactor | None = None):
        self.base = base
        self.dim = base.dim
        self.flat = flat_signature(self.dim)
        self.flat_diag = np.diag(self.flat).copy()
        if gauge is not None and gauge.dim != self.dim:
            raise DimensionMismatch(
                f"gauge field dimension {gauge.dim} != metric dimension {self.dim}")
        self.gauge = gauge
        self.params = params
        self.corner = float(corner)
        self.conformal = conformal

    # -- lower block ---------------------------------------------------
    def lower(self, x, s):
        return self.base.lower(x, s)

    def dx_lower(self, x, s):
        return self.base.dx_lower(x, s)

    def ds_lower(self, x, s):
        return self.base.ds_lower(x, s)

    def dxdx_lower(self, x, s):
        return self.base.dxdx_lower(x, s)

    def dxds_lower(self, x, s):
        return self.base.dxds_lower(x, s)

    def dsds_lower(self, x, s):
        return self.base.dsds_lower(x, s)

    # -- upper block via inverse identities -----------------------------
    def upper(self, x, s):
        g = self.lower(x, s)
        try:
            return np.linalg.inv(g)
        except np.linalg.LinAlgError as exc:
            raise SingularMetric(f"metric not invertible at x={x}, s={s}") from exc

    def dx_upper(self, x, s):
        gu = self.upper(x, s)
        dg = self.dx_lower(x, s)
        return -np.einsum("im,mna,nj->ija", gu, dg, gu)

    def ds_upper(self, x, s):
        gu = self.upper(x, s)
        return -gu @ self.ds_lower(x, s) @ gu

    def dxdx_upper(self, x, s):
        gu = self.upper(x, s)
        dg = self.dx_lower(x, s)
        d2g = self.dxdx_lower(x, s)
        dgu = -np.einsum("im,mna,nj->ija", gu, dg, gu)
        term = -np.einsum("im,mnab,nj->ijab", gu, d2g, gu)
        cross = np.einsum("imb,mna,nj->ijab", dgu, dg, gu)
        return term - cross - np.einsum("im,mna,njb->ijab", gu, dg, dgu)

    def dxds_upper(self, x, s):
        gu = self.upper(x, s)
        dg = self.dx_lower(x, s)
        sg = self.ds_lower(x, s)
        dsg = self.dxds_lower(x, s)
        sgu = -gu @ sg @ gu
        term = -np.einsum("im,mna,nj->ija", gu, dsg, gu)
        cross = np.einsum("im,mna,nj->ija", sgu, dg, gu)
        return term - cross - np.einsum("im,mna,nj->ija", gu, dg, sgu)

    def dsds_upper(self, x, s):
        gu = self.upper(x, s)
        sg = self.ds_lower(x, s)
        ssg = self.dsds_lower(x, s)
        sgu = -gu @ sg @ gu
        return -gu @ ssg @ gu - sgu @ sg @ gu - gu @ sg @ sgu

    # -- gauge row -------------------------------------------------------
    def _ratio(self):
        return self.params.e / self.params.m

    def grow(self, x, s):
        if self.gauge is None:
            return np.zeros(self.dim)
        return self._ratio() * self.gauge.value(x, s)

    def dx_grow(self, x, s):
        if self.gauge is None:
            return np.zeros((self.dim, self.dim))
        return self._ratio() * self.gauge.jac(x, s)

    def ds_grow(self, x, s):
        if self.gauge is None:
            return np.zeros(self.dim)
        return self._ratio() * self.gauge.ds(x, s)

    def dxdx_grow(self, x, s):
        if self.gauge is None:
            d = self.dim
            return np.zeros((d, d, d))
        return self._ratio() * self.gauge.hess(x, s)

    def dxds_grow(self, x, s):
        if self.gauge is None:
            return np.zeros((self.dim, self.dim))
        return self._ratio() * self.gauge.jac_ds(x, s)

    # -- one-pass evaluation for the geometry hot path --------------------
    def jet(self, x, s, order: int = 2) -> MetricJet:
        """Metric, gauge row and their partials with shared intermediates."""
        gl = self.lower(x, s)
        try:
            gu = np.linalg.inv(gl)
        except np.linalg.LinAlgError as exc:
            raise SingularMetric(f"metric not invertible at x={x}, s={s}") from exc
        dgl = self.dx_lower(x, s)
        sgl = self.ds_lower(x, s)
        # dgu[i, j, a] = -(gu dgl_a gu)
        tmp = _ab(gu, dgl)                                    # (i, n, a)
        tmp_t = np.ascontiguousarray(tmp.swapaxes(1, 2))      # (i, a, n)
        dgu = -_ab(tmp_t, gu).swapaxes(1, 2)
        sgu = -gu @ sgl @ gu
        grow = self.grow(x, s)
        dgrow = self.dx_grow(x, s)
        sgrow = self.ds_grow(x, s)
        if order < 2:
            return MetricJet(gl, gu, dgl, sgl, dgu, sgu, grow, dgrow, sgrow)

        d2gl = self.dxdx_lower(x, s)
        sdgl = self.dxds_lower(x, s)
        ssgl = self.dsds_lower(x, s)
        # d2gu = -gu d2gl gu + (gu dgl_a gu) dgl_b gu + (a <-> b)
        t1 = _ab(gu, d2gl)                                    # (i, n, a, b)
        t1 = _ab(np.ascontiguousarray(np.moveaxis(t1, 1, 3)), gu)  # (i, a, b, j)
        t1 = np.moveaxis(t1, 3, 1)                            # (i, j, a, b)
        mdgu_t = _ab(tmp_t, gu)                               # (i, a, m) = -dgu transposed
        v = _ab(mdgu_t, dgl)                                  # (i, a, p, b)
        t2 = _ab(np.ascontiguousarray(np.moveaxis(v, 2, 3)), gu)   # (i, a, b, j)
        t2 = np.moveaxis(t2, 3, 1)                            # (i, j, a, b)
        d2gu = -t1 + t2 + t2.swapaxes(2, 3)
        # sdgu_a = -gu sdgl_a gu - sgu dgl_a gu - gu dgl_a sgu
        u1 = _ab(np.ascontiguousarray(_ab(gu, sdgl).swapaxes(1, 2)), gu)
        u2 = _ab(np.ascontiguousarray(_ab(sgu, dgl).swapaxes(1, 2)), gu)
        u3 = _ab(tmp_t, sgu)
        sdgu = -(u1 + u2 + u3).swapaxes(1, 2)
        ssgu = -gu @ ssgl @ gu - sgu @ sgl @ gu - gu @ sgl @ sgu
        d2grow = self.dxdx_grow(x, s)
        sdgrow = self.dxds_grow(x, s)
        return MetricJet(gl, gu, dgl, sgl, dgu, sgu, grow, dgrow, sgrow,
                         d2gl, sdgl, ssgl, d2gu, sdgu, ssgu, d2grow, sdgrow)

    # -- helpers ---------------------------------------------------------
    def conformal_factor(self, x, s):
        if self.conformal is None:
            raise ValueError("metric does not carry a conformal factor")
        return self.conformal.value(x, s)

    def inverse_identity_error(self, points):
        """max |g g^-1 - I| over an iterable of (x, s) probes."""
        worst = 0.0
        eye = np.eye(self.dim)
        for x, s in points:
            err = np.max(np.abs(self.lower(x, s) @ self.upper(x, s) - eye))
            worst = max(worst, float(err))
        return worst


def flat_metric(dim: int, params: ParticleParams | None = None) -> ExtendedMetric:
    params = params or ParticleParams(m=1.0)
    return ExtendedMetric(FlatBase(flat_signature(dim)), None, params)


def extend_metric(base, gauge, params: ParticleParams, corner: float = 0.0,
                  dim: int | None = None, conformal=None) -> ExtendedMetric:
    """Assemble an ExtendedMetric from a base block and a raw gauge vector.

    ``base`` may be a _BaseBlock, a constant matrix, or a callable g(x, s).
    The stored gauge row is (e/m) times ``gauge``.
    """
    if isinstance(base, _BaseBlock):
        block = base
    elif callable(base):
        if dim is None:
            raise DimensionMismatch("dim is required for a callable base metric")
        block = CallableBase(base, dim)
    else:
        mat = np.asarray(base, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionMismatch("constant base metric must be a square matrix")
        block = CallableBase(lambda x, s, m=mat: m, mat.shape[0],
                             dx=lambda x, s, d=mat.shape[0]: np.zeros((d, d, d)),
                             ds=lambda x, s, d=mat.shape[0]: np.zeros((d, d)),
                             dxdx=lambda x, s, d=mat.shape[0]: np.zeros((d, d, d, d)),
                             dxds=lambda x, s, d=mat.shape[0]: np.zeros((d, d, d)),
                             dsds=lambda x, s, d=mat.shape[0]: np.zeros((d, d)))
    return ExtendedMetric(block, gauge, params, corner=corner, conformal=conformal)


def conformal_extended_metric(params: ParticleParams, *, mode: str,
                              source, gauge_vec: VectorTimeField | None = None,
                              corner: float = 0.0) -> ExtendedMetric:
    """Conformal dual metric object with optional gauge row.

    mode "nr": 3D, factor E/(E - V) or E/(E + e A^0);
    mode "rel": 4D, factor K/(K - V) or K/(K + e a5).
    """
    if params.energy is None:
        raise ValueError("params.energy must be set to build the conformal metric")
    dim = 3 if mode == "nr" else 4
    w = _effective_potential(params, source, dim)
    factor = ConformalFactor(params.energy, w)
    base = ConformalBase(flat_signature(dim), factor)
    if gauge_vec is None and isinstance(source, (Gauge3, Gauge5)):
        gauge_vec = source.a
    return ExtendedMetric(base, gauge_vec, params, corner=corner, conformal=factor)
