"""
Metric-affine geometry bundle: metric, connections, torsion, curvature.

All tensors are dense numpy arrays in the chart basis.  Index layout follows
the comma convention (partial-derivative indices appended last):

* ``affine[a, b, c]``      -> Gamma_{ab}^c       (affine connection, e d e)
* ``christoffel[a, b, c]`` -> Gammabar_{ab}^c    (Riemann connection)
* ``*_first[a, b, c]``     -> all indices lower (third lowered with g)
* ``torsion[a, b, c]``     -> S_{ab}^c = (Gamma_{ab}^c - Gamma_{ba}^c)/2
* ``contortion[a, b, c]``  -> K_{ab}^c
* ``d_affine[a, b, c, s]`` -> partial_s Gamma_{ab}^c
* ``curvature[m, n, l, k]``-> R_{mnl}^k, the covariant curl of the connection
  with the matrix commutator subtracted; ``curvature_riemann`` is the same
  curl of the Christoffel symbol.

Raising and lowering is never implicit; use :func:`raise_last` /
:func:`lower_last` or the ``*_first`` properties.

A geometry built from a :class:`~torsiongeo.triads.MetricField` has no torsion
content: its affine connection *is* the Christoffel symbol and torsion and
contortion vanish identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DerivativeUnavailable
from .triads import MetricField, TriadField, _central_diff

Field = Union[TriadField, MetricField]


def lower_last(tensor: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Lower the last index of ``tensor`` with the metric ``g``."""
    return np.tensordot(tensor, g, axes=([-1], [0]))


def raise_last(tensor: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """Raise the last index of ``tensor`` with the inverse metric."""
    return np.tensordot(tensor, g_inv, axes=([-1], [0]))


@dataclass
class TensorValue:
    """A dense tensor at a base point with explicit index variance."""

    variance: tuple
    array: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        self.array = np.asarray(self.array, dtype=float)
        self.point = np.asarray(self.point, dtype=float)
        if self.array.ndim != len(self.variance):
            raise ValueError("variance length must equal array rank")
        if any(n != self.point.size for n in self.array.shape):
            raise ValueError("all tensor extents must equal the chart dimension")


class PointGeometry:
    """Lazy per-point cache of every derived geometric quantity."""

    def __init__(self, geometry: "Geometry", q: np.ndarray):
        self.geometry = geometry
        self.q = np.asarray(q, dtype=float)

    @property
    def dim(self) -> int:
        return self.geometry.dim

    # -- triad level -------------------------------------------------------

    @cached_property
    def triad(self) -> np.ndarray:
        return self.geometry.field.triad(self.q)

    @cached_property
    def triad_inverse(self) -> np.ndarray:
        # einv[i, mu] = e_i^mu, so that sum_i einv[i, mu] e[i, nu] = delta.
        return np.linalg.inv(self.triad).T

    @cached_property
    def d_triad(self) -> np.ndarray:
        return self.geometry.field.d_triad(self.q)

    @cached_property
    def dd_triad(self) -> np.ndarray:
        return self.geometry.field.dd_triad(self.q)

    @cached_property
    def d_triad_inverse(self) -> np.ndarray:
        # partial_l e_i^m = -e_j^m e^j_{r,l} e_i^r
        return -np.einsum("jm,jrl,ir->iml", self.triad_inverse, self.d_triad, self.triad_inverse)

    # -- metric level ------------------------------------------------------

    @cached_property
    def metric(self) -> np.ndarray:
        if self.geometry.metric_only:
            return self.geometry.field.metric(self.q)
        e = self.triad
        return e.T @ e

    @cached_property
    def metric_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.metric)

    @cached_property
    def det_metric(self) -> float:
        return float(np.linalg.det(self.metric))

    @cached_property
    def sqrt_metric(self) -> float:
        return float(np.sqrt(self.det_metric))

    @cached_property
    def d_metric(self) -> np.ndarray:
        if self.geometry.metric_only:
            return self.geometry.field.d_metric(self.q)
        e, de = self.triad, self.d_triad
        return np.einsum("ims,in->mns", de, e) + np.einsum("im,ins->mns", e, de)

    @cached_property
    def dd_metric(self) -> np.ndarray:
        if self.geometry.metric_only:
            return self.geometry.field.dd_metric(self.q)
        e, de, dde = self.triad, self.d_triad, self.dd_triad
        return (
            np.einsum("imst,in->mnst", dde, e)
            + np.einsum("ims,int->mnst", de, de)
            + np.einsum("imt,ins->mnst", de, de)
            + np.einsum("im,inst->mnst", e, dde)
        )

    @cached_property
    def d_metric_inverse(self) -> np.ndarray:
        gi, dg = self.metric_inverse, self.d_metric
        return -np.einsum("ma,abs,bn->mns", gi, dg, gi)

    # -- connections -------------------------------------------------------

    @cached_property
    def christoffel_first(self) -> np.ndarray:
        dg = self.d_metric
        return 0.5 * (
            np.einsum("bca->abc", dg) + np.einsum("acb->abc", dg) - np.einsum("abc->abc", dg)
        )

    @cached_property
    def christoffel(self) -> np.ndarray:
        return raise_last(self.christoffel_first, self.metric_inverse)

    @cached_property
    def affine(self) -> np.ndarray:
        """Gamma_{ab}^c = e_i^c e^i_{b,a}; equals the Christoffel symbol for
        metric-only geometries (torsion-free by construction)."""
        if self.geometry.metric_only:
            return self.christoffel
        return np.einsum("ic,iba->abc", self.triad_inverse, self.d_triad)

    @cached_property
    def affine_from_inverse(self) -> np.ndarray:
        """Alternative form Gamma_{ab}^c = -e^i_b partial_a e_i^c."""
        if self.geometry.metric_only:
            return self.christoffel
        return -np.einsum("ib,ica->abc", self.triad, self.d_triad_inverse)

    @cached_property
    def affine_first(self) -> np.ndarray:
        return lower_last(self.affine, self.metric)

    @cached_property
    def torsion(self) -> np.ndarray:
        if self.geometry.metric_only:
            return np.zeros((self.dim,) * 3)
        c = self.affine
        return 0.5 * (c - np.swapaxes(c, 0, 1))

    @cached_property
    def torsion_first(self) -> np.ndarray:
        return lower_last(self.torsion, self.metric)

    @cached_property
    def torsion_trace(self) -> np.ndarray:
        """S_a = S_{ab}^b."""
        return np.einsum("abb->a", self.torsion)

    @cached_property
    def contortion_first(self) -> np.ndarray:
        s = self.torsion_first
        return s - np.einsum("bca->abc", s) + np.einsum("cab->abc", s)

    @cached_property
    def contortion(self) -> np.ndarray:
        return raise_last(self.contortion_first, self.metric_inverse)

    # -- connection derivatives --------------------------------------------

    @cached_property
    def d_affine(self) -> np.ndarray:
        """partial_s Gamma_{ab}^c, derivative index last."""
        if self.geometry.metric_only:
            return self.d_christoffel
        if self.geometry.field.analytic:
            dei, de, dde = self.d_triad_inverse, self.d_triad, self.dd_triad
            return np.einsum("ics,iba->abcs", dei, de) + np.einsum(
                "ic,ibas->abcs", self.triad_inverse, dde
            )
        return self.geometry._fd_of(lambda p: self.geometry.at(p, cache=False).affine, self.q)

    @cached_property
    def d_christoffel(self) -> np.ndarray:
        if self.geometry.metric_only and not self.geometry.field.analytic:
            return self.geometry._fd_of(lambda p: self.geometry.at(p, cache=False).christoffel, self.q)
        ddg = self.dd_metric
        d_first = 0.5 * (
            np.einsum("bcas->abcs", ddg) + np.einsum("acbs->abcs", ddg) - np.einsum("abcs->abcs", ddg)
        )
        return np.einsum("cds,abd->abcs", self.d_metric_inverse, self.christoffel_first) + np.einsum(
            "cd,abds->abcs", self.metric_inverse, d_first
        )

    @cached_property
    def d_contortion(self) -> np.ndarray:
        if self.geometry.metric_only:
            return np.zeros((self.dim,) * 4)
        if not self.geometry.field.analytic:
            return self.geometry._fd_of(lambda p: self.geometry.at(p, cache=False).contortion, self.q)
        dc = self.d_affine
        ds = 0.5 * (dc - np.swapaxes(dc, 0, 1))
        ds_first = np.einsum("abds,dc->abcs", ds, self.metric) + np.einsum(
            "abd,dcs->abcs", self.torsion, self.d_metric
        )
        dk_first = ds_first - np.einsum("bcas->abcs", ds_first) + np.einsum("cabs->abcs", ds_first)
        return np.einsum("cds,abd->abcs", self.d_metric_inverse, self.contortion_first) + np.einsum(
            "cd,abds->abcs", self.metric_inverse, dk_first
        )

    # -- curvature ---------------------------------------------------------

    @cached_property
    def curvature(self) -> np.ndarray:
        """R_{mnl}^k from the affine connection."""
        return _curvature_from(self.affine, self.d_affine)

    @cached_property
    def curvature_riemann(self) -> np.ndarray:
        """Rbar_{mnl}^k from the Christoffel symbol."""
        return _curvature_from(self.christoffel, self.d_christoffel)

    @cached_property
    def ricci(self) -> np.ndarray:
        return np.einsum("mnlm->nl", self.curvature)

    @cached_property
    def ricci_riemann(self) -> np.ndarray:
        return np.einsum("mnlm->nl", self.curvature_riemann)

    @cached_property
    def scalar(self) -> float:
        return float(np.einsum("nl,nl->", self.metric_inverse, self.ricci))

    @cached_property
    def scalar_riemann(self) -> float:
        return float(np.einsum("nl,nl->", self.metric_inverse, self.ricci_riemann))

    @cached_property
    def einstein(self) -> np.ndarray:
        """G_munu = Rbar_munu - g_munu Rbar / 2 (diagnostic tensor only)."""
        return self.ricci_riemann - 0.5 * self.metric * self.scalar_riemann


def _curvature_from(conn: np.ndarray, d_conn: np.ndarray) -> np.ndarray:
    curl = np.einsum("nlkm->mnlk", d_conn) - np.einsum("mlkn->mnlk", d_conn)
    comm = np.einsum("mls,nsk->mnlk", conn, conn) - np.einsum("nls,msk->mnlk", conn, conn)
    return curl - comm


class Geometry:
    """
    Cached evaluator bundle over a triad or metric field.

    Parameters
    ----------
    field : TriadField or MetricField
    cache_size : int
        Number of distinct points whose :class:`PointGeometry` is retained
        (simple FIFO; set 0 to disable).  The cache is only safe for
        concurrent *readers*; disable it when points are evaluated from
        several threads at once.
    conn_fd_step : float
        Step for finite differences of connections when the underlying field
        has no analytic derivatives.
    """

    def __init__(self, field: Field, *, cache_size: int = 256, conn_fd_step: float = 1e-4):
        self.field = field
        self.dim = field.dim
        self.metric_only = isinstance(field, MetricField)
        self.cache_size = int(cache_size)
        self.conn_fd_step = float(conn_fd_step)
        self._cache: dict = {}
        # Catalog metadata, set by torsiongeo.catalog when applicable.
        self.name = getattr(field, "name", "geometry")
        self.params: dict = {}
        self.topology: str | None = None
        self.torsion_free = self.metric_only
        self.sample_box: list | None = None

    def at(self, q, cache: bool = True) -> PointGeometry:
        q = np.asarray(q, dtype=float)
        if not cache or self.cache_size <= 0:
            return PointGeometry(self, q)
        key = q.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            hit = PointGeometry(self, q)
            if len(self._cache) >= self.cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = hit
        return hit

    def _fd_of(self, func: Callable[[np.ndarray], np.ndarray], q: np.ndarray) -> np.ndarray:
        return _central_diff(func, q, self.conn_fd_step)

    def random_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw points from the catalog sample box (set for catalog entries)."""
        if self.sample_box is None:
            raise ValueError(f"{self.name}: no sample box defined")
        lo = np.array([b[0] for b in self.sample_box])
        hi = np.array([b[1] for b in self.sample_box])
        return rng.uniform(lo, hi, size=(n, self.dim))


# ---------------------------------------------------------------------------
# Operation-level wrappers
# ---------------------------------------------------------------------------


def _as_geometry(obj) -> Geometry:
    return obj if isinstance(obj, Geometry) else Geometry(obj)


def reciprocal_triad(field, q) -> np.ndarray:
    """Reciprocal D-ad e_i^mu at q, satisfying e_i^mu e^i_nu = delta^mu_nu."""
    return _as_geometry(field).at(q).triad_inverse


def induced_metric(field, q) -> dict:
    """Metric data {g, g_inv, det, sqrt_det} induced by the triad at q."""
    pt = _as_geometry(field).at(q)
    return {"g": pt.metric, "g_inv": pt.metric_inverse, "det": pt.det_metric, "sqrt_det": pt.sqrt_metric}


def connection_bundle(field, q) -> dict:
    """
    Connections and torsion content at q.

    Returns the affine connection in both equivalent forms (direct and via
    the derivative of the reciprocal triad), the Christoffel symbol, torsion,
    its vector trace, and the contortion tensor.
    """
    pt = _as_geometry(field).at(q)
    return {
        "affine": pt.affine,
        "affine_alt": pt.affine_from_inverse,
        "christoffel": pt.christoffel,
        "christoffel_first": pt.christoffel_first,
        "torsion": pt.torsion,
        "torsion_trace": pt.torsion_trace,
        "contortion": pt.contortion,
    }


def curvature_bundle(field, q) -> dict:
    """Curvature tensors, Ricci contractions, scalars and Einstein tensor at q."""
    pt = _as_geometry(field).at(q)
    return {
        "curvature": pt.curvature,
        "curvature_riemann": pt.curvature_riemann,
        "ricci": pt.ricci,
        "ricci_riemann": pt.ricci_riemann,
        "scalar": pt.scalar,
        "scalar_riemann": pt.scalar_riemann,
        "einstein": pt.einstein,
    }


def covariant_derivative(
    geometry: Geometry,
    field: Callable[[np.ndarray], np.ndarray],
    q,
    *,
    variance: Sequence[str] = ("upper",),
    mode: str = "riemann",
    step: float = 1e-6,
) -> TensorValue:
    """
    Covariant derivative of a tensor field at q.

    ``mode='riemann'`` uses the Christoffel symbol, ``mode='affine'`` the full
    affine connection.  Upper indices receive ``+Gamma`` terms, lower indices
    ``-Gamma`` terms; a rank-0 (scalar) field returns the plain gradient.
    The partial derivative of ``field`` is formed by central differences with
    relative step ``step``.
    """
    if not callable(field):
        raise DerivativeUnavailable("field must be callable to be differentiated")
    if mode not in ("riemann", "affine"):
        raise ValueError("mode must be 'riemann' or 'affine'")
    q = np.asarray(q, dtype=float)
    pt = geometry.at(q)
    conn = pt.christoffel if mode == "riemann" else pt.affine
    value = np.asarray(field(q), dtype=float)
    rank = value.ndim
    if rank != len(variance):
        raise ValueError("variance must list one position per tensor index")

    partial = _central_diff(field, q, step)  # derivative axis last
    # Result layout: derivative index first, then the field's own indices.
    out = np.moveaxis(partial, -1, 0)
    for slot, pos in enumerate(variance):
        axis = slot + 1
        if pos == "upper":
            # + Gamma_{m s}^{n} T^{... s ...}
            corr = np.tensordot(conn, value, axes=([1], [slot]))  # [m, n, rest]
            corr = np.moveaxis(corr, 1, axis)
        elif pos == "lower":
            # - Gamma_{m n}^{s} T_{... s ...}
            corr = -np.tensordot(conn, value, axes=([2], [slot]))  # [m, n, rest]
            corr = np.moveaxis(corr, 1, axis)
        else:
            raise ValueError("variance entries must be 'upper' or 'lower'")
        out = out + corr
    return TensorValue(("lower",) + tuple(variance), out, q)
