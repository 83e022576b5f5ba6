"""
Classical motion: geodesics, autoparallels, actions, and the closure-failure
variation equation.

Geodesics solve ``qdd + Gammabar qd qd = 0`` (shortest lines), autoparallels
``qdd + Gamma qd qd = 0`` (straightest lines); the two coincide exactly when
torsion vanishes.  Trajectories are integrated with classical fixed-step RK4,
whose deterministic O(dt^4) error model the tolerances below rely on.

The variation objects implement the first-order equation

    d/dt db^m = -G^m_l(t) db^l + Sigma^m_n(t) dq^n,   db(t_a) = 0,

with G^m_l = Gamma_{l n}^m qd^n and Sigma^m_n = 2 S_{l n}^m qd^l evaluated on
a precomputed orbit (linear interpolation between grid points), plus the
equivalent time-ordered product solution

    db(t) = int_{t_a}^t dt' U(t, t') Sigma(t') dq(t'),
    U(t, t') = ordered product of substep matrix exponentials of -G.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import simpson
from scipy.linalg import expm

from .errors import ChartSingularity, GridMismatch, GridTooCoarse, SingularTriad, StepTooLarge
from .geometry import Geometry


@dataclass
class Trajectory:
    """A time-gridded path with the ODE kind that produced it."""

    kind: str
    t: np.ndarray
    q: np.ndarray  # (n, D)
    v: np.ndarray  # (n, D)
    geometry: Geometry

    def __post_init__(self):
        steps = np.diff(self.t)
        if np.any(steps <= 0) or np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
            raise ValueError("time grid must be strictly increasing and uniform")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def kinetic_invariant(self) -> np.ndarray:
        """g_munu qd^mu qd^nu along the path; constant for both line kinds."""
        vals = np.empty(len(self.t))
        for k, (qk, vk) in enumerate(zip(self.q, self.v)):
            vals[k] = vk @ self.geometry.at(qk).metric @ vk
        return vals


@dataclass
class VariationRecord:
    """Holonomic variation, closure field, and the orbit matrices G, Sigma."""

    t: np.ndarray
    dq: np.ndarray  # (n, D) holonomic variation, zero at both ends
    db: np.ndarray  # (n, D) closure failure, zero at t_a
    G: np.ndarray  # (n, D, D)
    Sigma: np.ndarray  # (n, D, D)


@dataclass
class ParticleParams:
    mass: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        if self.mass <= 0 or self.hbar <= 0:
            raise ValueError("mass and hbar must be positive")


def _acceleration(geom: Geometry, kind: str, q: np.ndarray, v: np.ndarray) -> np.ndarray:
    pt = geom.at(q)
    conn = pt.christoffel if kind == "geodesic" else pt.affine
    return -np.einsum("abc,a,b->c", conn, v, v)


def integrate_trajectory(
    geom: Geometry,
    kind: str,
    q0,
    v0,
    duration: float,
    dt: float,
    *,
    invariant_tol: Optional[float] = None,
    singular_tol: float = 1e-8,
) -> Trajectory:
    """
    RK4-integrate a geodesic or autoparallel from (q0, v0) over ``duration``.

    Raises ``ChartSingularity`` when the path reaches a singular chart point
    (triad determinant below ``singular_tol`` or changing sign between steps;
    degenerate metric for metric-only geometries) and ``StepTooLarge`` when
    the kinetic invariant drifts by more than ten times the tolerance
    (default ``max(1e-6, 1e3 dt^4)`` relative).
    """
    if kind not in ("geodesic", "autoparallel"):
        raise ValueError("kind must be 'geodesic' or 'autoparallel'")
    if dt <= 0 or duration <= 0:
        raise ValueError("duration and dt must be positive")
    n_steps = int(round(duration / dt))
    q = np.asarray(q0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    ts = dt * np.arange(n_steps + 1)
    qs = np.empty((n_steps + 1, geom.dim))
    vs = np.empty((n_steps + 1, geom.dim))
    qs[0], vs[0] = q, v

    def chart_scale(qq) -> float:
        pt = geom.at(qq)
        if geom.metric_only:
            return float(np.linalg.eigvalsh(pt.metric).min())
        return float(np.linalg.det(pt.triad))

    def rhs(qq, vv):
        try:
            return vv, _acceleration(geom, kind, qq, vv)
        except SingularTriad as exc:
            raise ChartSingularity(str(exc)) from exc

    scale0 = chart_scale(q)
    for k in range(n_steps):
        k1q, k1v = rhs(q, v)
        k2q, k2v = rhs(q + 0.5 * dt * k1q, v + 0.5 * dt * k1v)
        k3q, k3v = rhs(q + 0.5 * dt * k2q, v + 0.5 * dt * k2v)
        k4q, k4v = rhs(q + dt * k3q, v + dt * k3v)
        q = q + (dt / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
        v = v + (dt / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        scale = chart_scale(q)
        if abs(scale) < singular_tol or scale * scale0 < 0.0:
            raise ChartSingularity(f"chart became singular near q={q.tolist()} at t={ts[k + 1]:.6g}")
        qs[k + 1], vs[k + 1] = q, v

    traj = Trajectory(kind, ts, qs, vs, geom)
    tol = invariant_tol if invariant_tol is not None else max(1e-6, 1e3 * dt**4)
    inv = traj.kinetic_invariant()
    drift = np.max(np.abs(inv - inv[0])) / max(abs(inv[0]), 1e-300)
    if drift > 10.0 * tol:
        raise StepTooLarge(f"kinetic invariant drifted by {drift:.3e} (relative); reduce dt")
    return traj


def evaluate_action(geom: Geometry, traj: Trajectory, mass: float) -> float:
    """Composite-Simpson quadrature of the kinetic Lagrangian along the orbit."""
    lag = 0.5 * mass * traj.kinetic_invariant()
    return float(simpson(lag, x=traj.t))


def lagrangian_samples(geom: Geometry, traj: Trajectory, mass: float) -> np.ndarray:
    return 0.5 * mass * traj.kinetic_invariant()


def _time_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order central differences on the interior (second order at the
    two points adjacent to each boundary)."""
    n = len(values)
    if n < 5:
        raise GridTooCoarse("need at least 5 samples for stable grid derivatives")
    out = np.empty_like(values)
    out[2:-2] = (-values[4:] + 8 * values[3:-1] - 8 * values[1:-3] + values[:-4]) / (12 * dt)
    out[1] = (values[2] - values[0]) / (2 * dt)
    out[-2] = (values[-1] - values[-3]) / (2 * dt)
    out[0] = (values[1] - values[0]) / dt
    out[-1] = (values[-1] - values[-2]) / dt
    return out


def modified_el_residual(geom: Geometry, traj: Trajectory, mass: float) -> np.ndarray:
    """
    Residual of the torsion-modified Euler-Lagrange equation at interior
    grid points:

        r_l = dL/dq^l - d/dt dL/dqd^l - 2 S_{l m}^n qd^m dL/dqd^n.

    Autoparallels zero this residual; geodesics leave the torsion force.
    """
    n = len(traj.t)
    dLdq = np.empty((n, geom.dim))
    p = np.empty((n, geom.dim))
    torsion_term = np.empty((n, geom.dim))
    for k in range(n):
        pt = geom.at(traj.q[k])
        vk = traj.v[k]
        dLdq[k] = 0.5 * mass * np.einsum("mns,m,n->s", pt.d_metric, vk, vk)
        p[k] = mass * pt.metric @ vk
        torsion_term[k] = 2.0 * np.einsum("lmn,m,n->l", pt.torsion, vk, p[k])
    dp_dt = _time_derivative(p, traj.dt)
    res = dLdq - dp_dt - torsion_term
    return res[2:-2]


def torsion_force(geom: Geometry, traj: Trajectory, mass: float) -> np.ndarray:
    """The torsion contribution 2 M S_{l m n} qd^m qd^n, evaluated directly."""
    out = np.empty((len(traj.t), geom.dim))
    for k in range(len(traj.t)):
        pt = geom.at(traj.q[k])
        vk = traj.v[k]
        out[k] = 2.0 * mass * np.einsum("lmn,m,n->l", pt.torsion_first, vk, vk)
    return out


# ---------------------------------------------------------------------------
# Nonholonomic variation: closure-failure ODE and time-ordered solution
# ---------------------------------------------------------------------------


def _orbit_matrices(geom: Geometry, traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    n, d = traj.q.shape
    G = np.empty((n, d, d))
    Sigma = np.empty((n, d, d))
    for k in range(n):
        pt = geom.at(traj.q[k])
        vk = traj.v[k]
        # G^m_l = Gamma_{l n}^m qd^n ; Sigma^m_n = 2 S_{l n}^m qd^l
        G[k] = np.einsum("lnm,n->ml", pt.affine, vk)
        Sigma[k] = 2.0 * np.einsum("lnm,l->mn", pt.torsion, vk)
    return G, Sigma


def _check_variation_grid(traj: Trajectory, dq: np.ndarray) -> np.ndarray:
    dq = np.asarray(dq, dtype=float)
    if dq.shape != traj.q.shape:
        raise GridMismatch(f"variation field shape {dq.shape} does not match trajectory {traj.q.shape}")
    if np.max(np.abs(dq[0])) > 1e-12 or np.max(np.abs(dq[-1])) > 1e-12:
        raise ValueError("holonomic variation must vanish at both endpoints")
    return dq


def _interp(values: np.ndarray, idx: int, frac: float) -> np.ndarray:
    if frac == 0.0:
        return values[idx]
    return (1.0 - frac) * values[idx] + frac * values[idx + 1]


def nonholonomic_variation(geom: Geometry, traj: Trajectory, dq) -> VariationRecord:
    """
    Solve the closure-failure equation along the orbit with RK4 at the
    trajectory step, with G, Sigma and dq interpolated linearly between grid
    points.  Returns db together with the orbit matrices.
    """
    dq = _check_variation_grid(traj, dq)
    G, Sigma = _orbit_matrices(geom, traj)
    n, d = dq.shape
    db = np.zeros((n, d))
    dt = traj.dt

    def rhs(idx, frac, b):
        g = _interp(G, idx, frac)
        s = _interp(Sigma, idx, frac)
        vq = _interp(dq, idx, frac)
        return -g @ b + s @ vq

    b = np.zeros(d)
    for k in range(n - 1):
        k1 = rhs(k, 0.0, b)
        k2 = rhs(k, 0.5, b + 0.5 * dt * k1)
        k3 = rhs(k, 0.5, b + 0.5 * dt * k2)
        k4 = rhs(k + 1, 0.0, b + dt * k3)
        b = b + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        db[k + 1] = b
    return VariationRecord(traj.t.copy(), dq, db, G, Sigma)


_GAUSS_NODES = (0.5 - np.sqrt(3.0) / 6.0, 0.5 + np.sqrt(3.0) / 6.0)


def _step_generator(G: np.ndarray, k: int, dt: float, order: int, frac_hi: float = 1.0) -> np.ndarray:
    """Exponent of the ordered product over the substep [t_k, t_k + frac_hi dt]."""
    h = frac_hi * dt
    if order == 2:
        m = -_interp(G, k, 0.5 * frac_hi)
        return m * h
    c1, c2 = (frac_hi * _GAUSS_NODES[0], frac_hi * _GAUSS_NODES[1])
    a1 = -_interp(G, k, c1)
    a2 = -_interp(G, k, c2)
    return 0.5 * h * (a1 + a2) + (np.sqrt(3.0) / 12.0) * h**2 * (a2 @ a1 - a1 @ a2)


def variation_closed_form(geom: Geometry, traj: Trajectory, dq, *, order: int = 4) -> np.ndarray:
    """
    Closure failure via the time-ordered product: db(t_k) accumulated as

        db_{k+1} = U_k db_k + int over the step of U(t_{k+1}, t') Sigma dq dt'

    with U built from per-substep matrix exponentials (scaling-and-squaring).
    ``order=2`` uses the plain midpoint exponential and midpoint quadrature
    (second-order, Richardson-checkable); ``order=4`` uses two-node Gauss
    generators and Gauss quadrature of the source term.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    dq = _check_variation_grid(traj, dq)
    G, Sigma = _orbit_matrices(geom, traj)
    n, d = dq.shape
    dt = traj.dt
    db = np.zeros((n, d))
    b = np.zeros(d)
    for k in range(n - 1):
        U_full = expm(_step_generator(G, k, dt, order))
        if order == 2:
            s_mid = _interp(Sigma, k, 0.5) @ _interp(dq, k, 0.5)
            U_half = expm(-_interp(G, k, 0.75) * (0.5 * dt))
            src = dt * (U_half @ s_mid)
        else:
            src = np.zeros(d)
            for c in _GAUSS_NODES:
                # U(t_{k+1}, t_k + c dt): ordered product over the tail of the step
                tail = _tail_generator(G, k, dt, c)
                src += 0.5 * dt * (expm(tail) @ (_interp(Sigma, k, c) @ _interp(dq, k, c)))
        b = U_full @ b + src
        db[k + 1] = b
    return db


def _tail_generator(G: np.ndarray, k: int, dt: float, frac_lo: float) -> np.ndarray:
    """Fourth-order generator for U(t_{k+1}, t_k + frac_lo dt)."""
    h = (1.0 - frac_lo) * dt
    lo = frac_lo
    c1 = lo + (1.0 - lo) * _GAUSS_NODES[0]
    c2 = lo + (1.0 - lo) * _GAUSS_NODES[1]
    a1 = -_interp(G, k, c1)
    a2 = -_interp(G, k, c2)
    return 0.5 * h * (a1 + a2) + (np.sqrt(3.0) / 12.0) * h**2 * (a2 @ a1 - a1 @ a2)


def time_ordered_propagator(G: np.ndarray, dt: float, *, order: int = 4) -> np.ndarray:
    """
    Ordered product U(t_end, t_0) of per-substep matrix exponentials of -G,
    for G sampled on a uniform grid (shape (n, D, D), linearly interpolated
    inside each step).
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    U = np.eye(G.shape[1])
    for k in range(len(G) - 1):
        U = expm(_step_generator(G, k, dt, order)) @ U
    return U


def bump_variation(traj: Trajectory, amplitude) -> np.ndarray:
    """A smooth sin^2-shaped holonomic variation vanishing at both endpoints."""
    amp = np.atleast_1d(np.asarray(amplitude, dtype=float))
    span = traj.t[-1] - traj.t[0]
    shape = np.sin(np.pi * (traj.t - traj.t[0]) / span) ** 2
    return shape[:, None] * amp[None, :]
