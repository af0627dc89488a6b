import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from taskcons import robot

angles = st.floats(-np.pi, np.pi, allow_nan=False)
lengths = st.floats(0.3, 4.0, allow_nan=False)
small = st.floats(-3.0, 3.0, allow_nan=False)


@pytest.mark.parametrize(
    "theta, q, expected",
    [
        ([1, 1], [0, 0], [2, 0]),
        ([1, 1], [np.pi / 2, 0], [0, 2]),
        ([2, 3], [np.pi / 6, np.pi / 3], [1.7320508075688772, 4.0]),
    ],
)
def test_forward_kinematics_examples(theta, q, expected):
    assert np.allclose(robot.forward_kinematics(theta, q), expected, atol=1e-12)


def test_jacobian_example():
    J = robot.jacobian([1, 1], [0, np.pi / 2])
    assert np.allclose(J, [[-1, -1], [1, 0]], atol=1e-12)


@given(lengths, lengths, angles)
def test_jacobian_singular_when_links_aligned(l1, l2, q1):
    assert abs(np.linalg.det(robot.jacobian([l1, l2], [q1, 0.0]))) < 1e-12


def test_jacobian_matches_finite_difference(rng):
    theta = np.array([2.0, 3.0])
    h = 1e-6
    for _ in range(50):
        q = rng.uniform(-np.pi, np.pi, 2)
        fd = np.column_stack([
            (robot.forward_kinematics(theta, q + h * e) - robot.forward_kinematics(theta, q - h * e)) / (2 * h)
            for e in np.eye(2)
        ])
        assert np.allclose(fd, robot.jacobian(theta, q), atol=1e-6)


def test_batched_calls_match_single(rng):
    theta = rng.uniform(0.5, 3, (5, 2))
    q = rng.uniform(-3, 3, (5, 2))
    J = robot.jacobian(theta, q)
    for i in range(5):
        assert np.array_equal(J[i], robot.jacobian(theta[i], q[i]))


def test_kinematic_regressor_examples():
    assert np.array_equal(robot.kinematic_regressor([0.3, 1.1], [0.0, 0.0]), np.zeros((2, 2)))
    assert np.allclose(robot.kinematic_regressor([0, 0], [1, 0]), [[0, 0], [1, 1]])


@given(angles, angles, small, small, lengths, lengths)
def test_kinematic_regressor_identity(q1, q2, x1, x2, l1, l2):
    q, xi, th = np.array([q1, q2]), np.array([x1, x2]), np.array([l1, l2])
    lhs = robot.kinematic_regressor(q, xi) @ th
    assert np.linalg.norm(lhs - robot.jacobian(th, q) @ xi) <= 1e-14 * max(1.0, np.abs(lhs).max()) * 10


def test_jacobian_rate_matches_finite_difference(rng):
    h = 1e-6
    for _ in range(20):
        th, dth = rng.uniform(1, 3, 2), rng.normal(size=2)
        q, qd = rng.uniform(-3, 3, 2), rng.normal(size=2)
        fd = (robot.jacobian(th + h * dth, q + h * qd) - robot.jacobian(th - h * dth, q - h * qd)) / (2 * h)
        assert np.allclose(fd, robot.jacobian_rate(th, q, qd, dth), atol=1e-6)


def test_inertia_example():
    M = robot.inertia([4, 1, 1.5], [0.7, 0.0])
    assert np.allclose(M, [[6, 2.5], [2.5, 1.5]])
    assert np.all(np.linalg.eigvalsh(M) > 0)


def test_coriolis_zero_at_rest():
    assert np.array_equal(robot.coriolis([4, 1, 1.5], [0.4, 1.2], [0, 0]), np.zeros((2, 2)))


def test_gravity_is_zero():
    assert np.array_equal(robot.gravity([4, 1, 1.5], np.ones((3, 2))), np.zeros((3, 2)))


def test_skew_symmetry_along_trajectories(rng):
    vt = np.array([4.0, 1.0, 1.5])
    h = 1e-6
    for _ in range(100):
        q, qd, z = rng.uniform(-3, 3, 2), rng.normal(size=2), rng.normal(size=2)
        Mdot = (robot.inertia(vt, q + h * qd) - robot.inertia(vt, q - h * qd)) / (2 * h)
        N = Mdot - 2 * robot.coriolis(vt, q, qd)
        assert abs(z @ N @ z) <= 1e-6


def test_dynamic_regressor_zero():
    assert np.array_equal(robot.dynamic_regressor([0.2, 0.5], [1, -1], [0, 0], [0, 0]), np.zeros((2, 3)))


def test_dynamic_regressor_example():
    # row 2 from the closed form is [0, cos q2 * zdot1 + sin q2 * qdot1 * z1, zdot1 + zdot2] = [0, 0, 1]
    Y = robot.dynamic_regressor([0, 0], [1, 1], [1, 0], [0, 1])
    assert np.allclose(Y, [[0, 1, 1], [0, 0, 1]])


@given(angles, angles, small, small, small, small, small, small)
def test_dynamic_regressor_identity(q1, q2, w1, w2, z1, z2, a1, a2):
    q, qd, z, zd = map(np.array, ([q1, q2], [w1, w2], [z1, z2], [a1, a2]))
    for vt in ([4.0, 1.0, 1.5], [2.5, 0.3, 0.9]):
        vt = np.array(vt)
        lhs = robot.dynamic_regressor(q, qd, z, zd) @ vt
        rhs = robot.inertia(vt, q) @ zd + robot.coriolis(vt, q, qd) @ z + robot.gravity(vt, q)
        assert np.linalg.norm(lhs - rhs) <= 1e-12


def test_solve2_matches_numpy(rng):
    A = rng.normal(size=(10, 2, 2)) + 3 * np.eye(2)
    b = rng.normal(size=(10, 2))
    x, det = robot.solve2(A, b)
    assert np.allclose(x, np.linalg.solve(A, b[..., None])[..., 0])
    assert np.allclose(det, np.linalg.det(A))


@pytest.mark.parametrize("elbow", [1.0, -1.0])
def test_inverse_kinematics_round_trip(elbow):
    theta = (2.0, 3.0)
    for x in [(1.9, 0.8), (2.7, 0.7), (-1.0, 3.0)]:
        q = robot.inverse_kinematics(theta, x, elbow)
        assert np.allclose(robot.forward_kinematics(theta, q), x, atol=1e-12)
        assert np.sign(q[1]) == elbow


def test_inverse_kinematics_unreachable():
    with pytest.raises(ValueError):
        robot.inverse_kinematics((2.0, 3.0), (0.1, 0.1))


def test_params_problems():
    assert robot.RobotParams().problems() == []
    assert robot.RobotParams(theta=(-1, 2)).problems()
    assert robot.RobotParams(vartheta=(1, 1, 1.5)).problems()  # a3 (a1 - 2 a2) - (a3 - a2)^2 < 0
