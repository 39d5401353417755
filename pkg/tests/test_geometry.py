import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kdpe import DegenerateRotation
from kdpe import geometry

import oracles

unit_floats = st.floats(-1.0, 1.0, allow_nan=False)


@st.composite
def axes(draw):
    v = np.array([draw(unit_floats), draw(unit_floats), draw(unit_floats)])
    norm = np.linalg.norm(v)
    if norm < 1e-3:
        v = np.array([1.0, 0.0, 0.0])
        norm = 1.0
    return v / norm


@st.composite
def rotations(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    return oracles.random_rotation(np.random.default_rng(seed))


@st.composite
def tangent_vectors(draw, max_angle=math.pi - 1e-6):
    axis = draw(axes())
    theta = draw(st.floats(0.0, max_angle, allow_nan=False))
    return axis * theta


class TestSkewVee:
    def test_round_trip(self):
        v = np.array([0.3, -1.2, 2.5])
        assert np.array_equal(geometry.vee(geometry.skew(v)), v)

    def test_skew_matches_cross_product(self, rng):
        for _ in range(20):
            v, x = rng.standard_normal(3), rng.standard_normal(3)
            assert np.allclose(geometry.skew(v) @ x, np.cross(v, x),
                               rtol=1e-12, atol=1e-12)


class TestIsRotation:
    def test_accepts_identity(self):
        assert geometry.is_rotation(np.eye(3))

    def test_rejects_reflection(self):
        assert not geometry.is_rotation(np.diag([1.0, 1.0, -1.0]))

    def test_rejects_scaled(self):
        assert not geometry.is_rotation(np.eye(3) * 1.0001)

    def test_tolerance_is_configurable(self):
        near = np.eye(3)
        near[0, 1] = 1e-6
        assert not geometry.is_rotation(near)
        assert geometry.is_rotation(near, tol=1e-3)

    @given(rotations())
    def test_accepts_sampled_rotations(self, r):
        assert geometry.is_rotation(r)


class TestSixD:
    @given(rotations())
    def test_to_from_recovers_rotation(self, r):
        assert np.allclose(geometry.from6d(geometry.to6d(r)), r,
                           rtol=0, atol=1e-12)

    def test_to6d_is_first_two_columns(self):
        r = geometry.rotation_about_z(0.7)
        assert np.array_equal(geometry.to6d(r),
                              np.concatenate([r[:, 0], r[:, 1]]))

    def test_unnormalized_input_is_normalized(self, rng):
        r = oracles.random_rotation(rng)
        r6 = geometry.to6d(r)
        scaled = np.concatenate([r6[:3] * 3.7, r6[3:] * 0.2])
        assert np.allclose(geometry.from6d(scaled), r, rtol=0, atol=1e-12)

    def test_non_orthogonal_columns_are_orthonormalized(self):
        r6 = np.array([1.0, 0.0, 0.0, 0.8, 0.6, 0.0])
        r = geometry.from6d(r6)
        assert geometry.is_rotation(r)
        assert np.allclose(r[:, 0], [1, 0, 0], atol=1e-15)
        assert np.allclose(r[:, 1], [0, 1, 0], atol=1e-15)

    def test_zero_first_column_raises(self):
        with pytest.raises(DegenerateRotation):
            geometry.from6d(np.array([0.0, 0.0, 0.0, 0.0, 1.0, 0.0]))

    def test_zero_second_column_raises(self):
        with pytest.raises(DegenerateRotation):
            geometry.from6d(np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0]))

    def test_parallel_columns_raise(self):
        with pytest.raises(DegenerateRotation):
            geometry.from6d(np.array([1.0, 0.0, 0.0, 2.0, 0.0, 0.0]))

    def test_tiny_columns_raise(self):
        with pytest.raises(DegenerateRotation):
            geometry.from6d(np.array([1e-10, 0, 0, 0, 1e-10, 0]))

    def test_degeneracy_check_is_scale_invariant(self):
        # Large, nearly parallel columns: the raw cross product is big but
        # the normalized one is not, which must still be rejected.
        a = np.array([1e4, 0.0, 0.0])
        b = np.array([1e4, 0.0, 1e-6])
        with pytest.raises(DegenerateRotation):
            geometry.from6d(np.concatenate([a, b]))

    def test_small_but_valid_columns_accepted(self):
        r = geometry.rotation_about_z(0.3)
        r6 = geometry.to6d(r) * 1e-6
        assert np.allclose(geometry.from6d(r6), r, rtol=0, atol=1e-9)


class TestExpLog:
    def test_identity_maps_to_zero(self):
        assert np.array_equal(geometry.logmap(np.eye(3)), np.zeros(3))

    def test_zero_maps_to_identity(self):
        assert np.array_equal(geometry.expmap(np.zeros(3)), np.eye(3))

    def test_expmap_matches_quaternion_route(self, rng):
        for _ in range(50):
            omega = rng.standard_normal(3)
            assert np.allclose(geometry.expmap(omega), oracles.expmap(omega),
                               rtol=0, atol=1e-13)

    def test_z_rotation(self):
        theta = 0.7
        assert np.allclose(geometry.expmap([0, 0, theta]),
                           geometry.rotation_about_z(theta),
                           rtol=0, atol=1e-15)
        assert np.allclose(geometry.logmap(geometry.rotation_about_z(theta)),
                           [0, 0, theta], rtol=1e-14, atol=1e-16)

    @given(tangent_vectors())
    def test_log_exp_round_trip(self, omega):
        back = geometry.logmap(geometry.expmap(omega))
        assert np.allclose(back, omega, rtol=0, atol=1e-9)

    @given(rotations())
    def test_exp_log_round_trip(self, r):
        back = geometry.expmap(geometry.logmap(r))
        assert np.linalg.norm(back - r) < 1e-9

    @given(rotations())
    def test_log_norm_bounded_by_pi(self, r):
        assert np.linalg.norm(geometry.logmap(r)) <= math.pi + 1e-12

    def test_small_angles_pass_through(self):
        for theta in (1e-12, 1e-9, 1e-8):
            omega = np.array([0.6, -0.48, 0.64]) * theta
            back = geometry.logmap(geometry.expmap(omega))
            assert np.allclose(back, omega, rtol=1e-9, atol=1e-20)

    @pytest.mark.parametrize("axis", [
        np.array([1.0, 0.0, 0.0]),
        np.array([0.0, 1.0, 0.0]),
        np.array([0.0, 0.0, 1.0]),
        np.array([1.0, 1.0, 1.0]) / math.sqrt(3),
        np.array([-0.6, 0.0, 0.8]),
        np.array([0.36, -0.48, 0.8]),
    ])
    @pytest.mark.parametrize("theta", [
        math.pi,
        np.nextafter(math.pi, 0),
        math.pi - 1e-9,
        math.pi - 1e-7,
        math.pi - 1e-5,
    ])
    def test_near_pi_round_trip(self, axis, theta):
        omega = axis * theta
        back = geometry.logmap(geometry.expmap(omega))
        # Both signs of the axis are the same rotation at theta == pi.
        direct = np.linalg.norm(back - omega)
        flipped = np.linalg.norm(back + omega)
        assert min(direct, flipped) < 1e-9
        if math.pi - theta > 1e-12:
            assert direct < 1e-9  # away from pi the sign is determined

    def test_exact_pi_sign_convention(self):
        # At exactly pi the first nonzero axis component comes out positive.
        for axis in ([1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]):
            r = oracles.expmap(np.array(axis) * math.pi)
            out = geometry.logmap(r)
            nonzero = out[np.abs(out) > 1e-6]
            assert nonzero[0] > 0


class TestGeodesic:
    @given(rotations(), rotations())
    def test_matches_quaternion_oracle(self, ra, rb):
        assert math.isclose(geometry.geodesic_distance(ra, rb),
                            oracles.geodesic(ra, rb), abs_tol=1e-9)

    @given(rotations(), rotations())
    def test_symmetry_is_exact(self, ra, rb):
        assert geometry.geodesic_distance(ra, rb) == \
            geometry.geodesic_distance(rb, ra)

    @given(rotations())
    def test_self_distance_is_tiny(self, r):
        assert geometry.geodesic_distance(r, r) < 1e-7

    @given(rotations(), rotations(), rotations())
    def test_triangle_inequality(self, ra, rb, rc):
        d = geometry.geodesic_distance
        assert d(ra, rc) <= d(ra, rb) + d(rb, rc) + 1e-9

    @given(rotations(), rotations(), rotations())
    def test_left_invariance(self, q, ra, rb):
        d1 = geometry.geodesic_distance(ra, rb)
        d2 = geometry.geodesic_distance(q @ ra, q @ rb)
        assert math.isclose(d1, d2, rel_tol=1e-9, abs_tol=1e-9)

    def test_antipodal_distance_is_pi(self, rng):
        for _ in range(10):
            r = oracles.random_rotation(rng)
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            flipped = r @ oracles.expmap(axis * math.pi)
            assert math.isclose(geometry.geodesic_distance(r, flipped),
                                math.pi, abs_tol=1e-7)


class TestRelativeRotation:
    @given(rotations(), rotations())
    def test_swapped_arguments_give_exact_transpose(self, ra, rb):
        fwd = geometry.relative_rotation(ra, rb)
        bwd = geometry.relative_rotation(rb, ra)
        assert np.array_equal(fwd, bwd.T)

    @given(rotations(), rotations())
    def test_matches_matmul(self, ra, rb):
        assert np.allclose(geometry.relative_rotation(ra, rb), ra.T @ rb,
                           rtol=0, atol=1e-15)
