"""Connection blocks, curvature blocks and the mapped-coordinate form.

Index conventions (see also the package README):

* ``gamma[i, j, k]`` is the connection with one lower index and a symmetric
  upper pair, (1/2) g_il (D_k g^lj + D_j g^lk - D_l g^jk), where D_a is the
  lowered-coordinate derivative flat[a, alpha] d/dx^alpha.
* ``gamma4[i, k]`` is the gauge-row block
  (1/2) g_il (d_s g^lk + D_k G^l - D_l G^k) with G^l = (e/m) A^l, and
  ``gamma44[i] = g_il d_s G^l`` (constant corner, so its gradient drops).
  The signs are fixed so that the normal-form geodesic equation expands
  term by term into the canonical equations of motion; the automated
  expansion check in :mod:`dualgeo.checks` guards this convention.
* ``riemann[i, j, k, l]`` is D_k gamma[i,j,l] - D_l gamma[i,j,k]
  + gamma[i,m,k] gamma[m,j,l] - gamma[i,m,l] gamma[m,j,k], antisymmetric
  in (k, l); the extended blocks follow the same pattern with the gauge
  row substituted into one or both derivative slots.

The hot path shares one core that assembles every derivative tensor with
plain transposes and tensordot contractions; these run every integrator
step, so no einsum string parsing here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ExtendedMetric

__all__ = [
    "ConnectionBlock",
    "CurvatureBlock",
    "MForm",
    "connection",
    "curvature",
    "connection_curvature",
    "m_form",
    "connection_fd",
    "curvature_fd_gamma",
]


@dataclass(frozen=True)
class ConnectionBlock:
    gamma: np.ndarray    # (d, d, d), symmetric in the upper pair
    gamma4: np.ndarray   # (d, d)
    gamma44: np.ndarray  # (d,)

    @property
    def dim(self):
        return self.gamma.shape[0]


@dataclass(frozen=True)
class CurvatureBlock:
    riemann: np.ndarray      # (d, d, d, d), antisymmetric in last two
    rbar_4first: np.ndarray  # (d, d, d)
    rbar_4mid: np.ndarray    # (d, d, d)
    rbar_44: np.ndarray      # (d, d)

    @property
    def dim(self):
        return self.riemann.shape[0]


@dataclass(frozen=True)
class MForm:
    """Mapped-coordinate connection M[mu, rho, nu] = (1/2) g^{lam mu} d g_{rho nu}/dx^lam."""

    m: np.ndarray  # (d, d, d), symmetric in (rho, nu)

    @property
    def dim(self):
        return self.m.shape[0]


def _ab(a, b):
    """Contract the last axis of a with the first axis of b (reshape+matmul)."""
    return (a.reshape(-1, a.shape[-1]) @ b.reshape(b.shape[0], -1)).reshape(
        a.shape[:-1] + b.shape[1:])


def _gamma_from(gl, DG):
    # P[l, j, k] = D_k g^{lj} + D_j g^{lk} - D_l g^{jk}
    P = np.moveaxis(DG, (0, 1, 2), (2, 0, 1)) + DG.swapaxes(0, 1) - DG
    return 0.5 * _ab(gl, P), P


def _gamma4_from(gl, SG, DGROW):
    # P4[l, k] = d_s g^{lk} + D_k G^l - D_l G^k
    P4 = SG + DGROW.T - DGROW
    return 0.5 * gl @ P4, P4


def connection_curvature(metric: ExtendedMetric, x, s, want_curvature=True):
    """Connection blocks, and optionally curvature blocks, in one pass.

    The flat raising matrix is diagonal, so lowered-coordinate derivatives
    are sign-scalings of the stored-coordinate partials.
    """
    x = np.asarray(x, dtype=float)
    sg = metric.flat_diag                               # (d,) of +-1
    jet = metric.jet(x, s, order=2 if want_curvature else 1)
    gl = jet.gl

    # DG[a, b, c] = D_a g^{bc}; DGROW[a, b] = D_a G^b
    DG = np.moveaxis(jet.dgu, 2, 0) * sg[:, None, None]
    SG = jet.sgu
    DGROW = jet.dgrow.T * sg[:, None]
    SGROW = jet.sgrow

    gamma, P = _gamma_from(gl, DG)
    gamma4, P4 = _gamma4_from(gl, SG, DGROW)
    gamma44 = gl @ SGROW
    conn = ConnectionBlock(gamma=gamma, gamma4=gamma4, gamma44=gamma44)
    if not want_curvature:
        return conn, None

    Dgl = np.moveaxis(jet.dgl, 2, 0) * sg[:, None, None]           # (a, i, l)
    Sgl = jet.sgl
    # DDG[e, a, b, c] = D_e D_a g^{bc}  (second partials symmetric in e, a)
    DDG = (np.moveaxis(jet.d2gu, (2, 3), (1, 0))
           * sg[:, None, None, None] * sg[None, :, None, None])
    DSG = np.moveaxis(jet.sdgu, 2, 0) * sg[:, None, None]          # (a, b, c)
    SSG = jet.ssgu
    # DDGROW[a, k, l] = D_a D_k G^l
    DDGROW = (np.moveaxis(jet.d2grow, (1, 2), (1, 0))
              * sg[:, None, None] * sg[None, :, None])
    DSGROW = jet.sdgrow.T * sg[:, None]                # (a, l) = D_a d_s G^l

    # D_a gamma[i, j, k] = 0.5 (D_a g_il P[l,j,k] + g_il dP[a,l,j,k])
    dP = (np.moveaxis(DDG, (1, 2, 3), (3, 1, 2))       # DDG[a,k,l,j] -> [a,l,j,k]
          + DDG.swapaxes(1, 2)                          # DDG[a,j,l,k] -> [a,l,j,k]
          - DDG)
    dgamma = 0.5 * (_ab(Dgl, P)
                    + np.moveaxis(_ab(gl, np.moveaxis(dP, 1, 0)), 1, 0))
    # d_s gamma[i, j, k]
    sP = np.moveaxis(DSG, (0, 1, 2), (2, 0, 1)) + DSG.swapaxes(0, 1) - DSG
    sgamma = 0.5 * (_ab(Sgl, P) + _ab(gl, sP))
    # D_a gamma4[i, k]
    dP4 = DSG + DDGROW.swapaxes(1, 2) - DDGROW          # (a, l, k)
    dgamma4 = 0.5 * (_ab(Dgl, P4)
                     + np.moveaxis(_ab(gl, np.moveaxis(dP4, 1, 0)), 1, 0))
    # d_s gamma4[i, k]
    sP4 = SSG + DSGROW.T - DSGROW
    sgamma4 = 0.5 * (Sgl @ P4 + gl @ sP4)
    # D_a gamma44[i]
    dgamma44 = Dgl @ SGROW + (gl @ DSGROW.T).T

    # riemann[i,j,k,l] = dgamma[k,i,j,l] - dgamma[l,i,j,k] + G G - G G
    dg_k = np.moveaxis(dgamma, 0, 2)                    # [i, j, a, l] with a->k
    quad = np.moveaxis(_ab(gamma.swapaxes(1, 2), gamma), 1, 2)
    riemann = dg_k - dg_k.swapaxes(2, 3) + quad - quad.swapaxes(2, 3)

    # rbar blocks
    dg4_k = np.moveaxis(dgamma4, 0, 1)                  # [i, a, l] with a->k
    quad4 = _ab(gamma.swapaxes(1, 2), gamma4)           # [i, k, l]
    rbar_4first = dg4_k - dg4_k.swapaxes(1, 2) + quad4 - quad4.swapaxes(1, 2)

    quad4m = _ab(gamma4, gamma)                         # [i, k, l]
    rbar_4mid = sgamma - dg4_k.swapaxes(1, 2) + quad4m - quad4.swapaxes(1, 2)

    rbar_44 = (sgamma4 - dgamma44.T + gamma4 @ gamma4 - gamma @ gamma44)

    curv = CurvatureBlock(riemann=riemann, rbar_4first=rbar_4first,
                          rbar_4mid=rbar_4mid, rbar_44=rbar_44)
    return conn, curv


def connection(metric: ExtendedMetric, x, s) -> ConnectionBlock:
    """Connection blocks of the extended metric at (x, s)."""
    conn, _ = connection_curvature(metric, x, s, want_curvature=False)
    return conn


def curvature(metric: ExtendedMetric, x, s) -> CurvatureBlock:
    """Curvature blocks of the extended metric at (x, s).

    Uses the metric's analytic second partials where supplied; the
    finite-difference-of-gamma oracle :func:`curvature_fd_gamma` provides an
    independent route for verification.
    """
    _, curv = connection_curvature(metric, x, s, want_curvature=True)
    return curv


def m_form(metric: ExtendedMetric, x, s) -> MForm:
    """Mapped-coordinate connection (1/2) g^{lam mu} d g_{rho nu} / dx^lam."""
    x = np.asarray(x, dtype=float)
    gu = metric.upper(x, s)
    dg = metric.dx_lower(x, s)  # dg[rho, nu, lam]
    m = 0.5 * np.tensordot(gu.T, np.moveaxis(dg, 2, 0), axes=(1, 0))
    return MForm(m=m)


# ----------------------------------------------------------------------
# Finite-difference oracles (independent derivative route, used by tests
# and by the bundled check suite).
# ----------------------------------------------------------------------

def connection_fd(metric: ExtendedMetric, x, s, h=1e-6) -> ConnectionBlock:
    """Connection blocks with every derivative taken by central differences
    of the metric evaluators, bypassing the analytic partial wiring."""
    x = np.asarray(x, dtype=float)
    d = metric.dim
    flat = metric.flat
    gl = metric.lower(x, s)

    dgu = np.empty((d, d, d))
    dgrow = np.empty((d, d))
    for a in range(d):
        xp, xm = x.copy(), x.copy()
        xp[a] += h
        xm[a] -= h
        dgu[:, :, a] = (metric.upper(xp, s) - metric.upper(xm, s)) / (2 * h)
        dgrow[:, a] = (metric.grow(xp, s) - metric.grow(xm, s)) / (2 * h)
    sgu = (metric.upper(x, s + h) - metric.upper(x, s - h)) / (2 * h)
    sgrow = (metric.grow(x, s + h) - metric.grow(x, s - h)) / (2 * h)

    DG = np.tensordot(flat, dgu, axes=(1, 2))
    DGROW = flat @ dgrow.T
    gamma, _ = _gamma_from(gl, DG)
    gamma4, _ = _gamma4_from(gl, sgu, DGROW)
    gamma44 = gl @ sgrow
    return ConnectionBlock(gamma=gamma, gamma4=gamma4, gamma44=gamma44)


def curvature_fd_gamma(metric: ExtendedMetric, x, s, h=1e-5) -> CurvatureBlock:
    """Curvature blocks assembled from finite differences of the connection.

    Brute-force route: evaluate :func:`connection` at displaced points and
    difference the blocks, then add the quadratic terms.  Independent of the
    metric's second-partial wiring.
    """
    x = np.asarray(x, dtype=float)
    d = metric.dim
    flat = metric.flat

    conn = connection(metric, x, s)
    gamma, gamma4, gamma44 = conn.gamma, conn.gamma4, conn.gamma44

    dgamma = np.empty((d, d, d, d))
    dgamma4 = np.empty((d, d, d))
    dgamma44 = np.empty((d, d))
    for a in range(d):
        xp, xm = x.copy(), x.copy()
        xp[a] += h
        xm[a] -= h
        cp, cm = connection(metric, xp, s), connection(metric, xm, s)
        dgamma[a] = (cp.gamma - cm.gamma) / (2 * h)
        dgamma4[a] = (cp.gamma4 - cm.gamma4) / (2 * h)
        dgamma44[a] = (cp.gamma44 - cm.gamma44) / (2 * h)
    # raise the derivative index
    dgamma = np.tensordot(flat, dgamma, axes=(1, 0))
    dgamma4 = np.tensordot(flat, dgamma4, axes=(1, 0))
    dgamma44 = flat @ dgamma44
    cp, cm = connection(metric, x, s + h), connection(metric, x, s - h)
    sgamma = (cp.gamma - cm.gamma) / (2 * h)
    sgamma4 = (cp.gamma4 - cm.gamma4) / (2 * h)

    dg_k = np.moveaxis(dgamma, 0, 2)
    quad = np.moveaxis(np.tensordot(gamma.swapaxes(1, 2), gamma, axes=(2, 0)), 1, 2)
    riemann = dg_k - dg_k.swapaxes(2, 3) + quad - quad.swapaxes(2, 3)

    dg4_k = np.moveaxis(dgamma4, 0, 1)
    quad4 = np.tensordot(gamma.swapaxes(1, 2), gamma4, axes=(2, 0))
    rbar_4first = dg4_k - dg4_k.swapaxes(1, 2) + quad4 - quad4.swapaxes(1, 2)
    quad4m = np.tensordot(gamma4, gamma, axes=(1, 0))
    rbar_4mid = sgamma - dg4_k.swapaxes(1, 2) + quad4m - quad4.swapaxes(1, 2)
    rbar_44 = (sgamma4 - dgamma44.T + gamma4 @ gamma4
               - np.tensordot(gamma, gamma44, axes=(2, 0)))
    return CurvatureBlock(riemann=riemann, rbar_4first=rbar_4first,
                          rbar_4mid=rbar_4mid, rbar_44=rbar_44)
