"""
Triad and metric fields: the raw input of every geometric computation.

A triad field supplies the D x D matrix e^i_mu(q) relating flat differentials
dx^i to chart differentials dq^mu, together with its first and second partial
derivatives.  Everything else (metric, connections, torsion, curvature) is
derived from it.  A metric field supplies g_munu(q) and its derivatives
directly; it can serve every Riemann-side operation, but torsion-side
operations need a genuine triad and will raise ``TriadUnavailable`` unless the
metric is diagonal (in which case the diagonal square root is used).

Array index conventions used throughout the package:

* ``triad(q)[i, mu]``          -> e^i_mu
* ``d_triad(q)[i, mu, nu]``    -> e^i_{mu,nu}  (partial-derivative index last)
* ``dd_triad(q)[i, mu, nu, la]`` -> e^i_{mu,nu la}, symmetric in (nu, la)
* ``metric(q)[mu, nu]``        -> g_munu
* ``d_metric(q)[mu, nu, si]``  -> g_{munu,si}
* ``dd_metric(q)[mu, nu, si, ta]`` -> g_{munu,si ta}

Derivatives not supplied analytically are formed by central finite
differences with step ``h = fd_step * (1 + |q|)``.
"""

from __future__ import annotations

import csv
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import MetricNotPositiveDefinite, SingularTriad, TriadUnavailable

DEFAULT_FD_STEP = 1e-5
DET_THRESHOLD = 1e-12


def _fd_scale(q: np.ndarray, step: float) -> float:
    return step * (1.0 + float(np.linalg.norm(q)))


def _central_diff(func: Callable[[np.ndarray], np.ndarray], q: np.ndarray, step: float) -> np.ndarray:
    """Central first differences of ``func``; derivative axis appended last."""
    q = np.asarray(q, dtype=float)
    h = _fd_scale(q, step)
    base = np.asarray(func(q), dtype=float)
    out = np.empty(base.shape + (q.size,))
    for nu in range(q.size):
        qp = q.copy()
        qm = q.copy()
        qp[nu] += h
        qm[nu] -= h
        out[..., nu] = (np.asarray(func(qp)) - np.asarray(func(qm))) / (2.0 * h)
    return out


def _central_diff2(func: Callable[[np.ndarray], np.ndarray], q: np.ndarray, step: float) -> np.ndarray:
    """Central second differences; the two derivative axes appended last."""
    q = np.asarray(q, dtype=float)
    h = _fd_scale(q, step)
    base = np.asarray(func(q), dtype=float)
    D = q.size
    out = np.empty(base.shape + (D, D))
    for nu in range(D):
        for la in range(nu, D):
            if nu == la:
                qp = q.copy()
                qm = q.copy()
                qp[nu] += h
                qm[nu] -= h
                val = (np.asarray(func(qp)) - 2.0 * base + np.asarray(func(qm))) / h**2
            else:
                qpp = q.copy()
                qpm = q.copy()
                qmp = q.copy()
                qmm = q.copy()
                qpp[[nu, la]] += h
                qmm[[nu, la]] -= h
                qpm[nu] += h
                qpm[la] -= h
                qmp[nu] -= h
                qmp[la] += h
                val = (
                    np.asarray(func(qpp)) - np.asarray(func(qpm)) - np.asarray(func(qmp)) + np.asarray(func(qmm))
                ) / (4.0 * h**2)
            out[..., nu, la] = val
            out[..., la, nu] = val
    return out


class TriadField:
    """
    Field of basis D-ads e^i_mu(q) with first/second derivative evaluators.

    Parameters
    ----------
    dim : int
        Chart dimension D.
    eval : callable
        ``q -> (D, D) array`` with ``[i, mu]`` layout.
    d_eval, dd_eval : callable, optional
        Analytic first/second partials (layouts as in the module docstring).
        When omitted, central finite differences of ``eval`` are used.
    holonomic : bool
        Whether an integrable single-valued x^i(q) exists.  Holonomic triads
        with analytic derivatives satisfy e^i_{ka,la} = e^i_{la,ka}.
    fd_step : float
        Relative step for the finite-difference fallback.
    name : str
        Label used in diagnostics.
    """

    def __init__(
        self,
        dim: int,
        eval: Callable[[np.ndarray], np.ndarray],
        d_eval: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        dd_eval: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        *,
        holonomic: bool = False,
        fd_step: float = DEFAULT_FD_STEP,
        name: str = "triad",
        det_threshold: float = DET_THRESHOLD,
    ):
        if dim < 1:
            raise ValueError("dim must be a positive integer")
        self.dim = int(dim)
        self._eval = eval
        self._d_eval = d_eval
        self._dd_eval = dd_eval
        self.holonomic = bool(holonomic)
        self.fd_step = float(fd_step)
        self.name = name
        self.det_threshold = float(det_threshold)

    @property
    def analytic(self) -> bool:
        """True when both derivative orders are supplied analytically."""
        return self._d_eval is not None and self._dd_eval is not None

    @property
    def derivative_mode(self) -> str:
        return "analytic" if self.analytic else "central-fd"

    def triad(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        e = np.asarray(self._eval(q), dtype=float)
        if e.shape != (self.dim, self.dim):
            raise ValueError(f"triad evaluator returned shape {e.shape}, expected {(self.dim, self.dim)}")
        if abs(np.linalg.det(e)) < self.det_threshold:
            raise SingularTriad(f"{self.name}: |det e| below {self.det_threshold} at q={q.tolist()}")
        return e

    def d_triad(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self._d_eval is not None:
            return np.asarray(self._d_eval(q), dtype=float)
        return _central_diff(self._eval, q, self.fd_step)

    def dd_triad(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self._dd_eval is not None:
            return np.asarray(self._dd_eval(q), dtype=float)
        if self._d_eval is not None:
            return _central_diff(self._d_eval, q, self.fd_step)
        return _central_diff2(self._eval, q, self.fd_step)


class MetricField:
    """
    Geometry specified by a metric alone (no torsion content).

    Serves g, its derivatives, and, for diagonal metrics, the diagonal
    square-root triad e = diag(sqrt(g_11), ..., sqrt(g_DD)) used by
    operations that need flat-index components.
    """

    def __init__(
        self,
        dim: int,
        metric: Callable[[np.ndarray], np.ndarray],
        d_metric: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        dd_metric: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        *,
        diagonal: bool = False,
        fd_step: float = DEFAULT_FD_STEP,
        name: str = "metric",
    ):
        self.dim = int(dim)
        self._metric = metric
        self._d_metric = d_metric
        self._dd_metric = dd_metric
        self.diagonal = bool(diagonal)
        self.fd_step = float(fd_step)
        self.name = name
        self.holonomic = False

    @property
    def analytic(self) -> bool:
        return self._d_metric is not None and self._dd_metric is not None

    @property
    def derivative_mode(self) -> str:
        return "analytic" if self.analytic else "central-fd"

    def metric(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        g = np.asarray(self._metric(q), dtype=float)
        if np.linalg.eigvalsh(0.5 * (g + g.T)).min() <= 0.0:
            raise MetricNotPositiveDefinite(f"{self.name}: metric not positive definite at q={q.tolist()}")
        return g

    def d_metric(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self._d_metric is not None:
            return np.asarray(self._d_metric(q), dtype=float)
        return _central_diff(self._metric, q, self.fd_step)

    def dd_metric(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self._dd_metric is not None:
            return np.asarray(self._dd_metric(q), dtype=float)
        if self._d_metric is not None:
            return _central_diff(self._d_metric, q, self.fd_step)
        return _central_diff2(self._metric, q, self.fd_step)

    # Diagonal square-root triad, for flat-index operations on diagonal metrics.

    def triad(self, q) -> np.ndarray:
        g = self.metric(q)
        self._require_diagonal(g)
        return np.diag(np.sqrt(np.diag(g)))

    def d_triad(self, q) -> np.ndarray:
        g = self.metric(q)
        self._require_diagonal(g)
        dg = self.d_metric(q)
        root = np.sqrt(np.diag(g))
        out = np.zeros((self.dim, self.dim, self.dim))
        for i in range(self.dim):
            out[i, i, :] = dg[i, i, :] / (2.0 * root[i])
        return out

    def dd_triad(self, q) -> np.ndarray:
        g = self.metric(q)
        self._require_diagonal(g)
        dg = self.d_metric(q)
        ddg = self.dd_metric(q)
        root = np.sqrt(np.diag(g))
        out = np.zeros((self.dim, self.dim, self.dim, self.dim))
        for i in range(self.dim):
            out[i, i, :, :] = ddg[i, i, :, :] / (2.0 * root[i]) - np.outer(dg[i, i, :], dg[i, i, :]) / (
                4.0 * root[i] ** 3
            )
        return out

    def _require_diagonal(self, g: np.ndarray) -> None:
        if not self.diagonal:
            raise TriadUnavailable(
                f"{self.name}: geometry was given as a (non-diagonal) metric; torsion-side "
                "operations need an explicit triad"
            )
        off = g - np.diag(np.diag(g))
        if np.max(np.abs(off)) > 1e-12 * max(1.0, np.max(np.abs(g))):
            raise TriadUnavailable(f"{self.name}: metric not diagonal at this point; no square-root triad")


def triad_grid_from_csv(path, *, fd_step: float = 1e-4, name: Optional[str] = None) -> TriadField:
    """
    Load a triad field sampled on a uniform rectilinear grid from CSV.

    Expected header: ``q1,...,qD,e_1_1,...,e_D_D`` with the triad entries in
    row-major ``[i, mu]`` order.  Components are interpolated with cubic
    splines (at least four points per axis) and derivatives are taken by
    finite differences of the interpolant.
    """
    from scipy.interpolate import RegularGridInterpolator

    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header = [c.strip() for c in rows[0]]
    dim = sum(1 for c in header if c.startswith("q"))
    expected = [f"q{k + 1}" for k in range(dim)] + [f"e_{i + 1}_{m + 1}" for i in range(dim) for m in range(dim)]
    if header != expected:
        raise ValueError(f"{path}: header {header} does not match schema {expected}")
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    if data.shape[1] != dim + dim * dim:
        raise ValueError(f"{path}: wrong column count")

    axes = []
    for k in range(dim):
        vals = np.unique(data[:, k])
        if vals.size < 4:
            raise ValueError(f"{path}: axis q{k + 1} needs at least 4 distinct values for cubic interpolation")
        steps = np.diff(vals)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * abs(steps[0]):
            raise ValueError(f"{path}: axis q{k + 1} is not uniformly spaced")
        axes.append(vals)
    shape = tuple(len(a) for a in axes)
    if data.shape[0] != int(np.prod(shape)):
        raise ValueError(f"{path}: row count does not fill the rectilinear grid")

    # Sort rows lexicographically by (q1, ..., qD) so values reshape onto the grid.
    order = np.lexsort(tuple(data[:, k] for k in reversed(range(dim))))
    data = data[order]
    interps = []
    for col in range(dim, dim + dim * dim):
        grid_vals = data[:, col].reshape(shape)
        interps.append(RegularGridInterpolator(axes, grid_vals, method="cubic"))

    def evaluate(q: np.ndarray) -> np.ndarray:
        vals = [f(q).item() for f in interps]
        return np.array(vals).reshape(dim, dim)

    return TriadField(dim, evaluate, fd_step=fd_step, name=name or f"grid:{path}")


def sample_triad_to_csv(field: TriadField, axes: Sequence[np.ndarray], path) -> None:
    """Write ``field`` sampled on the outer product of ``axes`` in the CSV schema."""
    dim = field.dim
    if len(axes) != dim:
        raise ValueError("one axis per chart dimension required")
    header = [f"q{k + 1}" for k in range(dim)] + [f"e_{i + 1}_{m + 1}" for i in range(dim) for m in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for q in points:
            e = field.triad(q)
            writer.writerow([repr(float(v)) for v in q] + [repr(float(v)) for v in e.ravel()])
