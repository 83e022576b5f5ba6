# Tensor-level tests: reciprocal triads, induced metrics, connections,
# torsion/contortion identities, curvature, and covariant derivatives.

import numpy as np
import pytest

from torsiongeo import catalog
from torsiongeo.geometry import (
    Geometry,
    TensorValue,
    connection_bundle,
    covariant_derivative,
    curvature_bundle,
    induced_metric,
    lower_last,
    reciprocal_triad,
)
from torsiongeo.triads import TriadField

RNG = np.random.default_rng(42)

TRIAD_GEOMETRIES = ["flat-cartesian", "polar", "circle", "dislocation", "torsion-toy"]
ALL_GEOMETRIES = TRIAD_GEOMETRIES + ["sphere", "disclination"]


def sphere_dyad_as_triad() -> Geometry:
    """The diagonal square root of the sphere metric, treated as a genuine
    (nonholonomic, torsion-carrying) dyad field."""
    base = catalog.make("sphere").field
    field = TriadField(2, base.triad, base.d_triad, base.dd_triad, holonomic=False, name="sphere-dyad")
    geom = Geometry(field)
    geom.sample_box = [(0.3, np.pi - 0.3), (0.0, 2 * np.pi)]
    geom.name = "sphere-dyad"
    return geom


def triad_cases():
    cases = [catalog.make(name) for name in TRIAD_GEOMETRIES]
    cases.append(sphere_dyad_as_triad())
    return cases


# -- reciprocal triads -------------------------------------------------------


def test_reciprocal_identity_triad():
    geom = catalog.make("flat-cartesian", d=3)
    assert np.allclose(reciprocal_triad(geom, [0.2, -1.0, 0.5]), np.eye(3))


def test_reciprocal_polar_matches_matrix_inverse():
    geom = catalog.make("polar")
    q = np.array([2.0, 0.0])
    e = geom.at(q).triad
    assert np.allclose(e, [[1.0, 0.0], [0.0, 2.0]])
    rec = reciprocal_triad(geom, q)
    # rec[i, mu] = e_i^mu must invert e^i_mu in both index pairings
    assert np.allclose(np.einsum("im,in->mn", rec, e), np.eye(2), atol=1e-12)
    assert np.allclose(np.einsum("im,jm->ij", e, rec), np.eye(2), atol=1e-12)
    assert np.allclose(rec, np.linalg.inv(e).T, atol=1e-14)


def test_reciprocal_dislocation_matches_matrix_inverse():
    geom = catalog.make("dislocation", epsilon=0.01)
    q = np.array([1.0, 1.0])
    e = geom.at(q).triad
    assert np.allclose(reciprocal_triad(geom, q), np.linalg.inv(e).T, atol=1e-14)


# -- induced metric ----------------------------------------------------------


def test_metric_identity_for_flat():
    data = induced_metric(catalog.make("flat-cartesian"), [0.3, 0.4])
    assert np.allclose(data["g"], np.eye(2))
    assert data["det"] == pytest.approx(1.0)


def test_metric_polar_diagonal():
    data = induced_metric(catalog.make("polar"), [3.0, 1.1])
    assert np.allclose(data["g"], np.diag([1.0, 9.0]), atol=1e-12)
    assert data["sqrt_det"] == pytest.approx(3.0)


def test_metric_disclination_componentwise():
    # Transformed metric: delta - (2 omega / q^2) eps_{m l} eps_{n k} q^l q^k
    omega = 0.05
    geom = catalog.make("disclination", omega=omega)
    eps2 = np.array([[0.0, 1.0], [-1.0, 0.0]])
    for q in geom.random_points(6, RNG):
        w = eps2 @ q
        expected = np.eye(2) - (2 * omega / (q @ q)) * np.outer(w, w)
        assert np.allclose(geom.at(q).metric, expected, atol=1e-14)
    q0 = np.array([1.0, 0.0])
    assert np.allclose(geom.at(q0).metric, np.diag([1.0, 1.0 - 2 * omega]), atol=1e-14)


def test_metric_positive_definite_and_inverse():
    for geom in triad_cases() + [catalog.make("sphere"), catalog.make("disclination")]:
        for q in geom.random_points(10, RNG):
            pt = geom.at(q)
            assert np.all(np.linalg.eigvalsh(pt.metric) > 0)
            assert np.allclose(pt.metric, pt.metric.T, atol=1e-14)
            assert np.allclose(pt.metric_inverse @ pt.metric, np.eye(geom.dim), atol=1e-12)
            if geom.name != "disclination":  # no square-root triad for a non-diagonal metric
                assert pt.sqrt_metric == pytest.approx(abs(np.linalg.det(pt.triad)), rel=1e-12)


# -- connections -------------------------------------------------------------


def test_flat_connection_bundle_all_zero():
    out = connection_bundle(catalog.make("flat-cartesian"), [0.1, 0.2])
    for key in ("affine", "christoffel", "torsion", "torsion_trace", "contortion"):
        assert np.allclose(out[key], 0.0)


def test_polar_christoffel_components():
    out = connection_bundle(catalog.make("polar"), [1.7, 0.4])
    r = 1.7
    gbar = out["christoffel"]
    assert gbar[1, 1, 0] == pytest.approx(-r, abs=1e-12)  # Gammabar_{phi phi}^r
    assert gbar[0, 1, 1] == pytest.approx(1 / r, abs=1e-12)
    assert gbar[1, 0, 1] == pytest.approx(1 / r, abs=1e-12)
    assert np.allclose(out["torsion"], 0.0, atol=1e-13)


def test_dislocation_torsion_vanishes_off_origin():
    geom = catalog.make("dislocation", epsilon=0.01)
    for q in geom.random_points(10, RNG):
        assert np.allclose(geom.at(q).torsion, 0.0, atol=1e-12)


def test_connection_identities_on_all_triad_geometries():
    for geom in triad_cases():
        for q in geom.random_points(20, RNG):
            pt = geom.at(q)
            # Both forms of the affine connection agree.
            assert np.max(np.abs(pt.affine - pt.affine_from_inverse)) < 1e-10
            # Torsion is the antisymmetric part, exactly.
            s = pt.torsion
            assert np.array_equal(s, 0.5 * (pt.affine - np.swapaxes(pt.affine, 0, 1)))
            # Contortion is antisymmetric in its last two (lowered) indices.
            k1 = pt.contortion_first
            assert np.max(np.abs(k1 + np.swapaxes(k1, 1, 2))) < 1e-12
            # Decomposition into Christoffel plus contortion.
            assert np.max(np.abs(pt.affine - pt.christoffel - pt.contortion)) < 1e-10
            # Trace identity: contortion drops out of the (b, c) trace.
            assert np.max(np.abs(np.einsum("abb->a", pt.affine) - np.einsum("abb->a", pt.christoffel))) < 1e-10


def test_decomposition_with_finite_differences():
    geom = catalog.make("torsion-toy")
    fd_field = TriadField(2, geom.field.triad, fd_step=1e-5, name="toy-fd")
    fd_geom = Geometry(fd_field)
    for q in geom.random_points(10, RNG):
        pt = fd_geom.at(q)
        assert np.max(np.abs(pt.affine - pt.christoffel - pt.contortion)) < 1e-5


# -- curvature ---------------------------------------------------------------


def test_flat_curvature_zero():
    out = curvature_bundle(catalog.make("flat-cartesian"), [0.5, -0.5])
    assert np.allclose(out["curvature"], 0.0)
    assert out["scalar_riemann"] == pytest.approx(0.0, abs=1e-14)


def test_sphere_scalar_curvature():
    for a in (1.0, 2.0):
        geom = catalog.make("sphere", a=a)
        for q in geom.random_points(5, RNG):
            out = curvature_bundle(geom, q)
            assert out["scalar_riemann"] == pytest.approx(2.0 / a**2, abs=1e-10)
            # Einstein tensor vanishes identically in two dimensions.
            assert np.allclose(out["einstein"], 0.0, atol=1e-10)


def test_holonomic_triads_have_zero_affine_curvature_and_rbar_matches():
    # Smooth single-valued triads are flat in the affine sense; for the
    # torsion-free members the Riemann curvature coincides with it.
    for name in ("polar", "dislocation"):
        geom = catalog.make(name)
        for q in geom.random_points(5, RNG):
            pt = geom.at(q)
            assert np.max(np.abs(pt.curvature)) < 1e-8
            assert np.max(np.abs(pt.curvature_riemann)) < 1e-8


def test_curvature_antisymmetric_first_pair():
    geom = sphere_dyad_as_triad()
    for q in geom.random_points(5, RNG):
        r = geom.at(q).curvature_riemann
        assert np.allclose(r, -np.swapaxes(r, 0, 1), atol=1e-10)


def _covariant_curl_of_contortion(pt):
    """Dbar_m K_{n l}^k - Dbar_n K_{m l}^k with the full covariant derivative."""
    k, dk, gbar = pt.contortion, pt.d_contortion, pt.christoffel
    # Dbar_m K_{nl}^k = d_m K + Gammabar_{ms}^k K_{nl}^s
    #                 - Gammabar_{mn}^s K_{sl}^k - Gammabar_{ml}^s K_{ns}^k
    dbar = (
        np.einsum("nlkm->mnlk", dk)
        + np.einsum("msk,nls->mnlk", gbar, k)
        - np.einsum("mns,slk->mnlk", gbar, k)
        - np.einsum("mls,nsk->mnlk", gbar, k)
    )
    return dbar - np.einsum("nmlk->mnlk", dbar)


def test_curvature_relation_between_affine_and_riemann():
    # R = Rbar + (covariant curl of K) - [K, K], checked componentwise on a
    # geometry with torsion.  The affine curvature of a smooth triad field
    # vanishes, which makes the check sharp.
    geom = catalog.make("torsion-toy")
    for q in geom.random_points(10, RNG):
        pt = geom.at(q)
        k = pt.contortion
        comm = np.einsum("mls,nsk->mnlk", k, k) - np.einsum("nls,msk->mnlk", k, k)
        rhs = pt.curvature_riemann + _covariant_curl_of_contortion(pt) - comm
        assert np.max(np.abs(pt.curvature - rhs)) < 1e-8


def test_curvature_relation_with_finite_differences():
    geom = catalog.make("torsion-toy")
    fd_geom = Geometry(TriadField(2, geom.field.triad, fd_step=1e-5))
    for q in geom.random_points(3, RNG):
        pt = fd_geom.at(q)
        k = pt.contortion
        comm = np.einsum("mls,nsk->mnlk", k, k) - np.einsum("nls,msk->mnlk", k, k)
        rhs = pt.curvature_riemann + _covariant_curl_of_contortion(pt) - comm
        assert np.max(np.abs(pt.curvature - rhs)) < 1e-5


def test_d_affine_matches_fd_of_affine():
    geom = catalog.make("torsion-toy")
    q = np.array([0.2, -0.1])
    h = 1e-6
    num = np.empty((2, 2, 2, 2))
    for s in range(2):
        qp, qm = q.copy(), q.copy()
        qp[s] += h
        qm[s] -= h
        num[..., s] = (geom.at(qp).affine - geom.at(qm).affine) / (2 * h)
    assert np.allclose(geom.at(q).d_affine, num, atol=1e-8)


def test_d_contortion_matches_fd():
    geom = catalog.make("torsion-toy")
    q = np.array([-0.3, 0.25])
    h = 1e-6
    num = np.empty((2, 2, 2, 2))
    for s in range(2):
        qp, qm = q.copy(), q.copy()
        qp[s] += h
        qm[s] -= h
        num[..., s] = (geom.at(qp).contortion - geom.at(qm).contortion) / (2 * h)
    assert np.allclose(geom.at(q).d_contortion, num, atol=1e-8)


# -- covariant derivatives ---------------------------------------------------


def test_covariant_derivative_constant_field_flat():
    geom = catalog.make("flat-cartesian")
    out = covariant_derivative(geom, lambda q: np.array([1.0, 2.0]), [0.1, 0.9], variance=("upper",))
    assert np.allclose(out.array, 0.0, atol=1e-9)


def test_covariant_derivative_scalar_is_gradient():
    geom = catalog.make("polar")
    q = np.array([1.2, 0.4])
    for mode in ("riemann", "affine"):
        out = covariant_derivative(geom, lambda p: np.array(p[0] ** 2 + p[1]), q, variance=(), mode=mode)
        assert np.allclose(out.array, [2 * q[0], 1.0], atol=1e-8)


@pytest.mark.parametrize("mode", ["riemann", "affine"])
def test_metric_compatibility(mode):
    # Both connections annihilate the metric they are built from.
    for name in ("polar", "torsion-toy", "sphere"):
        geom = catalog.make(name)
        for q in geom.random_points(4, RNG):
            out = covariant_derivative(
                geom, lambda p: geom.at(p).metric, q, variance=("lower", "lower"), mode=mode
            )
            assert np.max(np.abs(out.array)) < 1e-7


def test_tensor_value_validation():
    with pytest.raises(ValueError):
        TensorValue(("upper",), np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        TensorValue(("upper", "lower"), np.zeros((2, 3)), np.zeros(2))


def test_lowering_round_trip():
    geom = catalog.make("torsion-toy")
    pt = geom.at(np.array([0.1, 0.2]))
    lowered = lower_last(pt.affine, pt.metric)
    assert np.allclose(lowered, pt.affine_first, atol=1e-14)


def test_metric_field_positive_definite_guard():
    from torsiongeo.errors import MetricNotPositiveDefinite
    from torsiongeo.triads import MetricField

    field = MetricField(2, lambda q: np.diag([1.0, 1.0 - q[0] ** 2]), name="degenerate")
    field.metric(np.array([0.5, 0.0]))
    with pytest.raises(MetricNotPositiveDefinite):
        field.metric(np.array([1.5, 0.0]))
