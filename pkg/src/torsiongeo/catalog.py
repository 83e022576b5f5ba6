"""
Built-in geometry catalog with hand-coded analytic derivatives.

Every entry returns a fully wired :class:`~torsiongeo.geometry.Geometry` with
metadata used by the dynamics, defect and propagator layers:

``flat-cartesian(d)``        flat space, identity triad
``polar()``                  flat 2-d space in polar coordinates (r, phi)
``sphere(a)``                round 2-sphere of radius a, chart (theta, phi);
                             metric-sourced, hence torsion-free by construction
``circle(a)``                1-d circle of radius a, chart phi in [0, 2 pi)
``dislocation(epsilon)``     edge-dislocation dyad; epsilon is the Burgers
                             modulus (the closure failure of a unit loop)
``disclination(omega)``      wedge-disclination metric (missing sector angle
                             2 pi omega), single-valued, flat off the origin
``torsion-toy(s0)``          linear triad deformation with constant leading-
                             order torsion, for exercising the torsion sector

The dislocation density is normalized so that a contour enclosing the origin
once picks up exactly ``(0, epsilon)``: the multivalued angle contributes
2 pi per winding, so the dyad carries ``epsilon / (2 pi)`` times its gradient.
"""

from __future__ import annotations

import math
from typing import Callable, Dict

import numpy as np

from .errors import ValidationError
from .geometry import Geometry
from .triads import MetricField, TriadField

TWO_PI = 2.0 * math.pi

# Fixed deformation pattern of the torsion toy; asymmetry in the lower pair
# of e^i_{mu,nu} = s0 * t[i, mu, nu] is what generates the torsion.
_TOY_PATTERN = np.array(
    [
        [[0.0, 0.5], [0.1, 0.2]],
        [[0.3, 0.0], [-0.4, 0.1]],
    ]
)


def angle_gradient(q: np.ndarray) -> np.ndarray:
    """Gradient of the polar angle atan2(q2, q1); single-valued off the origin."""
    u, v = q
    rho2 = u * u + v * v
    return np.array([-v / rho2, u / rho2])


def angle_hessian(q: np.ndarray) -> np.ndarray:
    u, v = q
    rho4 = (u * u + v * v) ** 2
    return np.array([[2 * u * v, v * v - u * u], [v * v - u * u, -2 * u * v]]) / rho4


def angle_third(q: np.ndarray) -> np.ndarray:
    u, v = q
    rho6 = (u * u + v * v) ** 3
    f111 = 2 * v * (v * v - 3 * u * u) / rho6
    f112 = 2 * u * (u * u - 3 * v * v) / rho6
    out = np.empty((2, 2, 2))
    out[0, 0, 0] = f111
    out[0, 0, 1] = out[0, 1, 0] = out[1, 0, 0] = f112
    out[0, 1, 1] = out[1, 0, 1] = out[1, 1, 0] = -f111
    out[1, 1, 1] = -f112
    return out


def flat_cartesian(d: int = 2) -> Geometry:
    d = int(d)
    eye = np.eye(d)
    zeros1 = np.zeros((d, d, d))
    zeros2 = np.zeros((d, d, d, d))
    field = TriadField(d, lambda q: eye, lambda q: zeros1, lambda q: zeros2, holonomic=True, name="flat-cartesian")
    geom = Geometry(field)
    geom.name = "flat-cartesian"
    geom.params = {"d": d}
    geom.topology = "line" if d == 1 else None
    geom.torsion_free = True
    geom.sample_box = [(-2.0, 2.0)] * d
    return geom


def polar() -> Geometry:
    def evaluate(q):
        r, phi = q
        c, s = math.cos(phi), math.sin(phi)
        return np.array([[c, -r * s], [s, r * c]])

    def d_evaluate(q):
        r, phi = q
        c, s = math.cos(phi), math.sin(phi)
        de = np.zeros((2, 2, 2))
        de[:, :, 0] = [[0.0, -s], [0.0, c]]
        de[:, :, 1] = [[-s, -r * c], [c, -r * s]]
        return de

    def dd_evaluate(q):
        r, phi = q
        c, s = math.cos(phi), math.sin(phi)
        dde = np.zeros((2, 2, 2, 2))
        m_rphi = np.array([[0.0, -c], [0.0, -s]])
        dde[:, :, 0, 1] = m_rphi
        dde[:, :, 1, 0] = m_rphi
        dde[:, :, 1, 1] = [[-c, r * s], [-s, -r * c]]
        return dde

    field = TriadField(2, evaluate, d_evaluate, dd_evaluate, holonomic=True, name="polar")
    geom = Geometry(field)
    geom.name = "polar"
    geom.params = {}
    geom.torsion_free = True
    geom.sample_box = [(0.5, 3.0), (0.0, TWO_PI)]
    return geom


def sphere(a: float = 1.0) -> Geometry:
    if a <= 0:
        raise ValidationError("sphere: radius a must be positive")
    a2 = a * a

    def metric(q):
        s = math.sin(q[0])
        return np.array([[a2, 0.0], [0.0, a2 * s * s]])

    def d_metric(q):
        th = q[0]
        dg = np.zeros((2, 2, 2))
        dg[1, 1, 0] = 2 * a2 * math.sin(th) * math.cos(th)
        return dg

    def dd_metric(q):
        th = q[0]
        ddg = np.zeros((2, 2, 2, 2))
        ddg[1, 1, 0, 0] = 2 * a2 * math.cos(2 * th)
        return ddg

    field = MetricField(2, metric, d_metric, dd_metric, diagonal=True, name="sphere")
    geom = Geometry(field)
    geom.name = "sphere"
    geom.params = {"a": float(a)}
    geom.topology = "sphere"
    geom.torsion_free = True
    geom.sample_box = [(0.3, math.pi - 0.3), (0.0, TWO_PI)]
    return geom


def circle(a: float = 1.0) -> Geometry:
    if a <= 0:
        raise ValidationError("circle: radius a must be positive")
    mat = np.array([[float(a)]])
    z1 = np.zeros((1, 1, 1))
    z2 = np.zeros((1, 1, 1, 1))
    field = TriadField(1, lambda q: mat, lambda q: z1, lambda q: z2, holonomic=True, name="circle")
    geom = Geometry(field)
    geom.name = "circle"
    geom.params = {"a": float(a)}
    geom.topology = "circle"
    geom.torsion_free = True
    geom.sample_box = [(0.0, TWO_PI)]
    return geom


def dislocation(epsilon: float = 0.01) -> Geometry:
    coeff = float(epsilon) / TWO_PI

    def evaluate(q):
        grad = angle_gradient(q)
        return np.array([[1.0, 0.0], [coeff * grad[0], 1.0 + coeff * grad[1]]])

    def d_evaluate(q):
        de = np.zeros((2, 2, 2))
        de[1] = coeff * angle_hessian(q)
        return de

    def dd_evaluate(q):
        dde = np.zeros((2, 2, 2, 2))
        dde[1] = coeff * angle_third(q)
        return dde

    field = TriadField(2, evaluate, d_evaluate, dd_evaluate, holonomic=False, name="dislocation")
    geom = Geometry(field)
    geom.name = "dislocation"
    geom.params = {"epsilon": float(epsilon)}
    geom.torsion_free = True  # pointwise, away from the origin
    geom.sample_box = [(0.4, 2.4), (0.4, 2.4)]
    return geom


def disclination(omega: float = 0.05, *, omega_bound: float = 0.1) -> Geometry:
    if abs(omega) > omega_bound:
        raise ValidationError(f"disclination: |omega| must not exceed {omega_bound}")
    om = float(omega)
    eps2 = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def w_of(q):
        return np.array([q[1], -q[0]])

    def metric(q):
        w = w_of(q)
        rho2 = float(q @ q)
        return np.eye(2) - (2 * om / rho2) * np.outer(w, w)

    def d_metric(q):
        w = w_of(q)
        rho2 = float(q @ q)
        ww = np.outer(w, w)
        dg = np.zeros((2, 2, 2))
        for s in range(2):
            es = eps2[:, s]
            dg[:, :, s] = -2 * om * (
                (np.outer(es, w) + np.outer(w, es)) / rho2 - 2 * q[s] * ww / rho2**2
            )
        return dg

    def dd_metric(q):
        w = w_of(q)
        rho2 = float(q @ q)
        ww = np.outer(w, w)
        ddg = np.zeros((2, 2, 2, 2))
        for s in range(2):
            es = eps2[:, s]
            for t in range(2):
                et = eps2[:, t]
                term = (np.outer(es, et) + np.outer(et, es)) / rho2
                term -= 2 * q[t] * (np.outer(es, w) + np.outer(w, es)) / rho2**2
                term -= 2 * (1.0 if s == t else 0.0) * ww / rho2**2
                term -= 2 * q[s] * (np.outer(et, w) + np.outer(w, et)) / rho2**2
                term += 8 * q[s] * q[t] * ww / rho2**3
                ddg[:, :, s, t] = -2 * om * term
        return ddg

    field = MetricField(2, metric, d_metric, dd_metric, diagonal=False, name="disclination")
    geom = Geometry(field)
    geom.name = "disclination"
    geom.params = {"omega": om}
    geom.torsion_free = True
    geom.sample_box = [(0.4, 2.4), (0.4, 2.4)]
    return geom


def torsion_toy(s0: float = 0.3) -> Geometry:
    if abs(s0) >= 1.0:
        raise ValidationError("torsion-toy: |s0| must be below 1 to keep the triad invertible")
    t = float(s0) * _TOY_PATTERN

    def evaluate(q):
        return np.eye(2) + t @ np.asarray(q, dtype=float)

    d_const = t.copy()
    dd_const = np.zeros((2, 2, 2, 2))
    field = TriadField(2, evaluate, lambda q: d_const, lambda q: dd_const, holonomic=False, name="torsion-toy")
    geom = Geometry(field)
    geom.name = "torsion-toy"
    geom.params = {"s0": float(s0)}
    geom.torsion_free = False
    geom.sample_box = [(-0.5, 0.5), (-0.5, 0.5)]
    return geom


_REGISTRY: Dict[str, tuple[Callable[..., Geometry], dict]] = {
    "flat-cartesian": (flat_cartesian, {"d": 2}),
    "polar": (polar, {}),
    "sphere": (sphere, {"a": 1.0}),
    "circle": (circle, {"a": 1.0}),
    "dislocation": (dislocation, {"epsilon": 0.01}),
    "disclination": (disclination, {"omega": 0.05}),
    "torsion-toy": (torsion_toy, {"s0": 0.3}),
}

_ALIASES = {"flat": "flat-cartesian", "constant-torsion-toy": "torsion-toy", "toy": "torsion-toy"}


def names() -> list[str]:
    return sorted(_REGISTRY)


def parameter_names(name: str) -> list[str]:
    canonical = _ALIASES.get(name, name)
    if canonical not in _REGISTRY:
        raise ValidationError(f"unknown geometry '{name}'; known: {', '.join(names())}")
    return sorted(_REGISTRY[canonical][1])


def make(name: str, **params) -> Geometry:
    """Instantiate a catalog geometry by name; unknown parameters are rejected."""
    canonical = _ALIASES.get(name, name)
    if canonical not in _REGISTRY:
        raise ValidationError(f"unknown geometry '{name}'; known: {', '.join(names())}")
    factory, defaults = _REGISTRY[canonical]
    unknown = set(params) - set(defaults)
    if unknown:
        raise ValidationError(f"geometry '{name}' does not take parameter(s) {sorted(unknown)}")
    merged = {**defaults, **params}
    if canonical == "flat-cartesian":
        merged["d"] = int(merged["d"])
    return factory(**merged)
