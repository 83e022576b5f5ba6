"""
Imaginary-time sliced propagators as transfer matrices.

The finite-time kernel is composed from short-time kernels

    K_eps(q, q - dq) = (2 pi hbar eps / M)^(-D/2) exp(-A_eps / hbar + dj),

with the slice action A_eps truncated at the configured order and, for the
difference-measure ("qep") variant, the measure-difference exponent dj added
(for the position-measure "naive-dewitt" variant dj is absent).  Composition
weights carry sqrt(g) at the integrated point; in the similarity frame

    B = W^(1/2) K W^(1/2),   W_j = sqrt(g_j) * (node weight),

traces and spectra are those of the asymmetric transfer matrix, while B is
symmetric up to the truncation order and is symmetrized numerically before
the eigendecomposition (the recorded asymmetry is a diagnostic).

Supported endpoint topologies:

* ``line``    open 1-d chart on a truncated grid with absorbing ends,
* ``circle``  compact 1-d chart; the kernel sums over winding images,
* ``sphere``  2-d chart (theta, phi) reduced to azimuthal sectors m: the
  phi difference is integrated against cos(m dphi) over one compact period
  of a resummed kernel (see :func:`_build_sphere`), and theta lives on
  Gauss-Legendre nodes in cos(theta), whose quadrature is exact for the
  Legendre eigenfunctions of the m = 0 sector.

Corrections beyond the quadratic term (cubic and quartic action terms and
the measure exponent) are relevant-order perturbations: they multiply the
Gaussian as the truncated exponential series 1 + c + c^2/2, which is positive
and polynomially bounded, so Gaussian tails are never amplified.  Outside a
trust region where the kernel is below exp(-30) the bare Gaussian is used.

All transfer-matrix numerics run on the Euclidean contour; the real-time
contour is available only through the closed-form flat kernel
:func:`flat_line_kernel`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridResolutionInsufficient
from .geometry import Geometry
from .slicing import SliceConfig, _h_tensor, delta_jacobian_action

EXPONENT_CUT = 30.0  # quadratic exponent beyond which corrections are dropped
TAIL_SIGMA = 7.5  # kernel support half-width in units of the slice width
MIN_POINTS_PER_SIGMA = 8.0


@dataclass
class PropagatorResult:
    """Composed kernels, traces over requested times, and diagnostics."""

    geometry: str
    measure: str
    scheme: str
    n_slices: int
    eps: float
    taus: np.ndarray
    trace: np.ndarray
    grid: np.ndarray
    weights: np.ndarray
    amplitudes: dict = field(default_factory=dict)  # tau -> symmetric kernel matrix
    asymmetry: float = 0.0
    extras: dict = field(default_factory=dict)
    energies: list = field(default_factory=list)
    residual: float = float("nan")


def flat_line_kernel(x, xp, tau: float, mass: float = 1.0, hbar: float = 1.0, contour: str = "euclidean"):
    """Closed-form free-particle kernel on a line, Euclidean or real-time."""
    dx2 = (np.asarray(x, dtype=float) - np.asarray(xp, dtype=float)) ** 2
    if contour == "euclidean":
        return (2 * np.pi * hbar * tau / mass) ** -0.5 * np.exp(-mass * dx2 / (2 * hbar * tau))
    if contour == "real-time":
        return (2j * np.pi * hbar * tau / mass) ** -0.5 * np.exp(1j * mass * dx2 / (2 * hbar * tau))
    raise ValueError("contour must be 'euclidean' or 'real-time'")


# ---------------------------------------------------------------------------
# Slice-action coefficient tables
# ---------------------------------------------------------------------------


class _CoefficientTable:
    """Action/measure coefficients sampled at reference points along one axis.

    ``g``  (n, D, D); ``t3`` (n, D, D, D); ``t4`` (n, D, D, D, D);
    ``dj_lin`` (n, D); ``dj_quad`` (n, D, D); ``sqrt_g`` (n,).
    The cubic and quartic tensors already carry their relative signs: the
    slice action is pref * (g uu + t3 uuu + t4 uuuu).
    """

    def __init__(self, geom: Geometry, points: np.ndarray, config: SliceConfig):
        d = geom.dim
        n = len(points)
        self.g = np.empty((n, d, d))
        self.sqrt_g = np.empty(n)
        self.t3 = np.zeros((n, d, d, d))
        self.t4 = np.zeros((n, d, d, d, d))
        self.dj_lin = np.zeros((n, d))
        self.dj_quad = np.zeros((n, d, d))
        cubic = config.order >= 3 and config.scheme != "midpoint"
        quartic = config.order >= 4
        for j, q in enumerate(points):
            pt = geom.at(q)
            self.g[j] = pt.metric
            self.sqrt_g[j] = pt.sqrt_metric
            if cubic:
                self.t3[j] = -pt.affine_first
            if quartic:
                t4a = np.einsum("kl,mnsl->mnsk", pt.metric, _h_tensor(pt)) / 3.0
                if config.scheme == "midpoint":
                    self.t4[j] = 0.25 * t4a
                else:
                    self.t4[j] = t4a + 0.25 * np.einsum("mnt,skt->mnsk", pt.affine_first, pt.affine)
            if config.measure == "qep":
                delta = delta_jacobian_action(geom, q)
                self.dj_lin[j] = delta.linear
                self.dj_quad[j] = delta.quadratic

    def interpolated(self, axis_nodes: np.ndarray, query: np.ndarray) -> "_CoefficientTable":
        out = object.__new__(_CoefficientTable)
        for name in ("g", "sqrt_g", "t3", "t4", "dj_lin", "dj_quad"):
            setattr(out, name, _interp_table(axis_nodes, getattr(self, name), query))
        return out


def _interp_table(x_nodes: np.ndarray, table: np.ndarray, x_query: np.ndarray) -> np.ndarray:
    idx = np.clip(np.searchsorted(x_nodes, x_query) - 1, 0, len(x_nodes) - 2)
    frac = (x_query - x_nodes[idx]) / (x_nodes[idx + 1] - x_nodes[idx])
    shape = (-1,) + (1,) * (table.ndim - 1)
    w = frac.reshape(shape)
    return (1.0 - w) * table[idx] + w * table[idx + 1]


def _perturbative_factor(corr: np.ndarray) -> np.ndarray:
    """Exponential of the correction exponent truncated at second order.

    The cubic/quartic action terms and the measure exponent are relevant-order
    corrections: exponentiating them raw would amplify Gaussian tails where
    the expansion is meaningless, whereas 1 + c + c^2/2 = ((c+1)^2 + 1)/2 is
    positive, polynomially bounded, and correct through the retained order.
    """
    return 1.0 + corr + 0.5 * corr**2


def _kernel_row(g, t3, t4, dj_lin, dj_quad, u: np.ndarray, pref: float) -> np.ndarray:
    """Euclidean slice kernel (unnormalized) for one reference point."""
    quad = pref * np.einsum("mn,m...,n...->...", g, u, u)
    out = np.exp(-quad)
    mask = quad < EXPONENT_CUT
    if not np.any(mask):
        return out
    um = u[:, mask]
    corr = -pref * np.einsum("mnl,mx,nx,lx->x", t3, um, um, um)
    corr -= pref * np.einsum("mnsk,mx,nx,sx,kx->x", t4, um, um, um, um)
    corr += np.einsum("m,mx->x", dj_lin, um)
    corr += np.einsum("mn,mx,nx->x", dj_quad, um, um)
    out[mask] *= _perturbative_factor(corr)
    return out


def _kernel_pairwise(coef: _CoefficientTable, u: np.ndarray, pref: float) -> np.ndarray:
    """Slice kernel with per-column coefficients: u (D, n, ...), tables (n, ...)."""
    quad = pref * np.einsum("amn,ma...,na...->a...", coef.g, u, u)
    out = np.exp(-quad)
    mask = quad < EXPONENT_CUT
    if not np.any(mask):
        return out
    corr = -pref * np.einsum("amnl,ma...,na...,la...->a...", coef.t3, u, u, u)
    corr -= pref * np.einsum("amnsk,ma...,na...,sa...,ka...->a...", coef.t4, u, u, u, u)
    corr += np.einsum("am,ma...->a...", coef.dj_lin, u)
    corr += np.einsum("amn,ma...,na...->a...", coef.dj_quad, u, u)
    out[mask] *= _perturbative_factor(corr[mask])
    return out


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def _line_nodes(grid) -> tuple[np.ndarray, float]:
    lo, hi, n = grid
    n = int(n)
    du = (hi - lo) / n
    return lo + du * (np.arange(n) + 0.5), du


def _build_1d(geom: Geometry, config: SliceConfig, nodes: np.ndarray, du: float, period):
    n = nodes.size
    pref = config.mass / (2.0 * config.eps * config.hbar)
    sigma_flat = math.sqrt(config.eps * config.hbar / config.mass)
    table = _CoefficientTable(geom, nodes[:, None], config)
    sigma_u = sigma_flat / np.sqrt(table.g[:, 0, 0])
    if np.min(sigma_u) / du < MIN_POINTS_PER_SIGMA:
        raise GridResolutionInsufficient(
            f"kernel width {np.min(sigma_u):.3g} needs at least {MIN_POINTS_PER_SIGMA} points per width, "
            f"got grid spacing {du:.3g}"
        )

    if period is not None:
        w_max = int(math.ceil((TAIL_SIGMA * float(np.max(sigma_u)) + period / 2) / period))
        windings = range(-w_max, w_max + 1)
    else:
        windings = (0,)

    kernel = np.zeros((n, n))
    prepoint = config.scheme == "prepoint"
    midpoint = config.scheme == "midpoint"
    for b in range(n):
        row = np.zeros(n)
        for w in windings:
            dq = nodes[b] - nodes + (w * period if period is not None else 0.0)
            u = dq[None, :]
            if midpoint:
                # mean chart point of the image pair; odd windings land it on
                # the opposite side of the period
                mid = 0.5 * (nodes[b] + nodes) - (0.5 * w * period if period is not None else 0.0)
                if period is not None:
                    mid = mid % period
                coef = table.interpolated(nodes, mid)
                row += _kernel_pairwise(coef, u, pref)
            else:
                row += _kernel_row(
                    table.g[b], table.t3[b], table.t4[b], table.dj_lin[b], table.dj_quad[b], u, pref
                )
        kernel[b] = row
    if prepoint:
        # rows hold the reference point and its outgoing difference; indexing
        # by (later, earlier) with the sign flip of the difference is the
        # transpose of that matrix
        kernel = kernel.T
    norm = (2 * np.pi * config.hbar * config.eps / config.mass) ** -0.5
    weights = table.sqrt_g * du
    return norm * np.sqrt(np.outer(weights, weights)) * kernel, weights


def _build_sphere(geom: Geometry, config: SliceConfig, n_theta: int, m: int):
    """Azimuthal-sector transfer matrix on the sphere.

    At order >= 3 the quadratic-plus-cubic part of the chart expansion is
    resummed into the geometrically exact compact form

        P + Q = a^2 dtheta^2 + 2 a^2 sin(theta_b) sin(theta_a) (1 - cos zeta),

    which reproduces the flat-disk (Bessel) kernel near the chart poles, is
    symmetric by construction, and lets the zeta integral run over one
    compact period with the periodic trapezoid rule (winding images resummed
    exactly).  Its Taylor expansion reproduces the chart cubic term exactly;
    the remaining quartic residue of the chart expansion equals
    P Q / 6 a^2 + Q^2 / 12 a^2 through the retained order, and the
    torsion-free measure exponent equals R (P + Q) / 12; both forms vanish
    at the poles, so the corrections stay perturbative everywhere.  In this
    resummed representation the three expansion schemes coincide (their
    differences are beyond the retained order), so the scheme field only
    changes the 1-d builders.  Order semantics: 2 = bare chart quadratic,
    3 = resummed core, 4 = core plus quartic residue.
    """
    a = float(geom.params.get("a", 1.0))
    x_nodes, x_weights = np.polynomial.legendre.leggauss(int(n_theta))
    theta = np.arccos(x_nodes)[::-1]
    gl_w = x_weights[::-1]
    sigma = math.sqrt(config.eps * config.hbar / config.mass)
    if (math.pi / n_theta) > (sigma / a) / MIN_POINTS_PER_SIGMA:
        raise GridResolutionInsufficient(
            f"sphere grid of {n_theta} nodes under-resolves kernel width {sigma / a:.3g}"
        )
    pref = config.mass / (2.0 * config.eps * config.hbar)
    sin_t = np.sin(theta)
    g_phi = a * a * sin_t**2
    ricci_scalar = np.array([geom.at(np.array([th, 0.0])).scalar_riemann for th in theta])

    n_phi = max(64, int(2 * math.ceil(math.pi * a * MIN_POINTS_PER_SIGMA * 1.5 / sigma)))
    zeta = -math.pi + (2 * math.pi / n_phi) * (np.arange(n_phi) + 0.5)
    dzeta = 2 * math.pi / n_phi
    one_minus_cos = 1.0 - np.cos(zeta)
    phase = np.ones(n_phi) if m == 0 else np.cos(m * zeta)

    kernel = np.zeros((n_theta, n_theta))
    for b in range(n_theta):
        p_form = a * a * (theta[b] - theta)[:, None] ** 2
        if config.order == 2:
            quad = pref * (p_form + g_phi[b] * (zeta**2)[None, :])
            vals = np.exp(-quad)
        else:
            q_form = 2.0 * a * a * (sin_t[b] * sin_t)[:, None] * one_minus_cos[None, :]
            quad = pref * (p_form + q_form)
            vals = np.exp(-quad)
            mask = quad < EXPONENT_CUT
            corr = np.zeros_like(quad)
            if config.order >= 4:
                corr -= pref * (p_form * q_form / 6.0 + q_form**2 / 12.0) / a**2
            if config.measure == "qep":
                corr += ricci_scalar[b] * (p_form + q_form) / 12.0
            vals[mask] *= _perturbative_factor(corr[mask])
        kernel[b] = (vals @ phase) * dzeta
    norm = config.mass / (2 * np.pi * config.hbar * config.eps)
    weights = a * a * gl_w
    return norm * np.sqrt(np.outer(weights, weights)) * kernel, weights, theta


# ---------------------------------------------------------------------------
# Propagation driver
# ---------------------------------------------------------------------------


def _tau_indices(taus, config: SliceConfig) -> list[int]:
    ks = []
    for tau in taus:
        k = int(round(tau / config.eps))
        if abs(k * config.eps - tau) > 1e-9 * config.eps or k < 1:
            raise ValueError(f"tau={tau} is not a positive multiple of eps={config.eps}")
        ks.append(k)
    return ks


def _compose(b_mat: np.ndarray, weights: np.ndarray, config: SliceConfig, taus, store):
    asym = float(np.max(np.abs(b_mat - b_mat.T)) / max(np.max(np.abs(b_mat)), 1e-300))
    b_sym = 0.5 * (b_mat + b_mat.T)
    evals, evecs = np.linalg.eigh(b_sym)
    min_eval = float(evals.min())
    evals = np.clip(evals, 0.0, None)
    ks = _tau_indices(taus, config)
    trace = np.array([float(np.sum(evals**k)) for k in ks])
    amplitudes = {}
    inv_root_w = 1.0 / np.sqrt(weights)
    for k in store:
        mat = (evecs * evals**k) @ evecs.T
        amplitudes[k * config.eps] = inv_root_w[:, None] * mat * inv_root_w[None, :]
    return trace, amplitudes, asym, min_eval


def propagate(
    geom: Geometry,
    config: SliceConfig,
    *,
    grid=None,
    taus=None,
    m_sector: int = 0,
    store_taus=(),
) -> PropagatorResult:
    """
    Compose the sliced Euclidean propagator on the geometry's topology.

    ``taus`` (default: the single total time N eps) must be positive
    multiples of eps; the trace over the endpoint grid is returned for each.
    ``store_taus`` selects times whose full kernel matrix is kept.  For the
    sphere, ``m_sector`` picks the azimuthal sector; the m = 0 trace
    contains every angular-momentum level exactly once.

    ``grid`` is ``(lo, hi, n)`` for the line, a point count for the circle,
    and a node count for the sphere.
    """
    if config.contour != "euclidean":
        raise ValueError(
            "transfer-matrix propagation needs the euclidean contour; "
            "the real-time form exists only as the closed-form flat kernel"
        )
    if geom.topology not in ("line", "circle", "sphere"):
        raise ValueError(f"geometry '{geom.name}' has no propagation topology")
    taus = list(taus) if taus is not None else [config.total_time]
    store = _tau_indices(store_taus, config) if store_taus else []

    if geom.topology == "sphere":
        n_theta = int(grid) if grid is not None else 192
        b_mat, weights, nodes = _build_sphere(geom, config, n_theta, m_sector)
    elif geom.topology == "circle":
        n_pts = int(grid) if grid is not None else 256
        nodes, du = _line_nodes((0.0, 2 * np.pi, n_pts))
        b_mat, weights = _build_1d(geom, config, nodes, du, period=2 * np.pi)
    else:
        grid = grid if grid is not None else (-8.0, 8.0, 1024)
        nodes, du = _line_nodes(grid)
        b_mat, weights = _build_1d(geom, config, nodes, du, period=None)

    trace, amplitudes, asym, min_eval = _compose(b_mat, weights, config, taus, store)
    return PropagatorResult(
        geometry=geom.name,
        measure=config.measure,
        scheme=config.scheme,
        n_slices=config.n_slices,
        eps=config.eps,
        taus=np.asarray(taus, dtype=float),
        trace=trace,
        grid=nodes,
        weights=weights,
        amplitudes=amplitudes,
        asymmetry=asym,
        extras={"m_sector": m_sector if geom.topology == "sphere" else None, "min_eigenvalue": min_eval},
    )
