import io
import math

import numpy as np
import pytest

from stochflow.manifold import VectorFieldSpec, heisenberg_manifold, heisenberg_frame, torus
from stochflow.sde import (
    ConfigurationError,
    StratonovichSystem,
    coarsen_noise,
    fd_jacobian,
    flow,
    flow_endpoints,
    flow_with_jacobian,
    generate_noise,
    heun_step,
    noise_matrix,
    write_trajectory_csv,
)

T1 = torus(1.0)
T2 = torus(1.0, 1.0)


def translation_system(dim=1):
    m = torus(*([1.0] * dim))
    fields = []
    for i in range(dim):
        comps = ["0"] * dim
        comps[i] = "1"
        fields.append(VectorFieldSpec.from_strings(comps))
    return StratonovichSystem(manifold=m, drift=VectorFieldSpec.zero(dim),
                              diffusions=tuple(fields))


from stochflow.systems import hamiltonian_torus_system as hamiltonian_system


def sin_drift_system():
    return StratonovichSystem(manifold=T1,
                              drift=VectorFieldSpec.from_strings(["sin(2*pi*x1)"]),
                              diffusions=())


def circle_distance(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


# ---------------------------------------------------------------------------
# noise

def test_noise_is_deterministic_and_reproducible():
    a = generate_noise(123, 5, 2, 0.01, 50)
    b = generate_noise(123, 5, 2, 0.01, 50)
    assert np.array_equal(a.increments, b.increments)
    c = generate_noise(123, 6, 2, 0.01, 50)
    assert not np.array_equal(a.increments, c.increments)
    d = generate_noise(124, 5, 2, 0.01, 50)
    assert not np.array_equal(a.increments, d.increments)


def test_noise_matrix_matches_per_path_streams():
    mat = noise_matrix(9, 4, 3, 0.05, 20)
    for p in range(4):
        assert np.array_equal(mat[p], generate_noise(9, p, 3, 0.05, 20).increments)


def test_noise_moments():
    dt = 0.01
    draws = noise_matrix(3, 100, 1, dt, 1000).ravel()  # 1e5 draws
    assert draws.size == 100000
    assert abs(draws.mean()) < 4 * math.sqrt(dt) / math.sqrt(draws.size)
    assert abs(draws.var() - dt) < 0.05 * dt


def test_noise_validation():
    with pytest.raises(ValueError):
        generate_noise(0, 0, 1, -0.1, 10)
    with pytest.raises(ValueError):
        generate_noise(0, 0, 1, 0.1, 0)


def test_coarsen_noise_sums_increments():
    n = generate_noise(7, 0, 2, 0.01, 10)
    c = coarsen_noise(n, 5)
    assert c.steps == 2 and c.dt == pytest.approx(0.05)
    np.testing.assert_allclose(c.increments[0], n.increments[:5].sum(axis=0))


# ---------------------------------------------------------------------------
# single steps

def test_heun_step_zero_fields():
    sys = StratonovichSystem(manifold=T2, drift=VectorFieldSpec.zero(2),
                             diffusions=(VectorFieldSpec.zero(2),))
    x = np.array([0.4, 0.6])
    np.testing.assert_array_equal(heun_step(sys, x, np.array([0.1, 0.3])), x)


def test_heun_step_constant_drift_exact():
    sys = StratonovichSystem(manifold=T1, drift=VectorFieldSpec.from_strings(["1"]),
                             diffusions=())
    out = heun_step(sys, np.array([0.25]), np.array([0.1]))
    assert float(out[0]) == pytest.approx(0.35, abs=1e-15)


def test_heun_step_additive_noise_exact():
    sys = translation_system(1)
    w = 0.3173
    out = heun_step(sys, np.array([0.9]), np.array([0.01, w]))
    assert float(out[0]) == pytest.approx((0.9 + w) % 1.0, abs=1e-15)


def test_heun_step_shape_mismatch():
    sys = translation_system(1)
    with pytest.raises(ConfigurationError):
        heun_step(sys, np.array([0.0]), np.array([0.1, 0.2, 0.3]))


# ---------------------------------------------------------------------------
# flows

def test_flow_zero_system_constant_trajectory():
    sys = StratonovichSystem(manifold=T2, drift=VectorFieldSpec.zero(2),
                             diffusions=())
    noise = generate_noise(0, 0, 0, 0.1, 10)
    res = flow(sys, [0.2, 0.7], 1.0, 0.1, noise)
    np.testing.assert_array_equal(res.trajectory,
                                  np.tile([0.2, 0.7], (11, 1)))


def test_flow_additive_noise_closed_form():
    sys = translation_system(1)
    noise = generate_noise(11, 3, 1, 0.001, 1000)
    res = flow(sys, [0.3], 1.0, 0.001, noise)
    want = (0.3 + noise.increments.sum()) % 1.0
    assert circle_distance(float(res.endpoint[0]), want) < 1e-12


def test_flow_deterministic_rotation_exact():
    alpha = math.sqrt(2)
    sys = StratonovichSystem(
        manifold=T2, drift=VectorFieldSpec.from_strings(["1", f"{alpha!r}"]),
        diffusions=())
    noise = generate_noise(0, 0, 0, 1e-3, 1000)
    res = flow(sys, [0.1, 0.2], 1.0, 1e-3, noise)
    want = np.array([(0.1 + 1.0) % 1.0, (0.2 + alpha) % 1.0])
    assert np.max(np.abs(res.endpoint - want)) < 1e-12


def test_flow_noise_shape_mismatch():
    sys = translation_system(2)
    noise = generate_noise(0, 0, 1, 0.1, 10)  # one component, system has two
    with pytest.raises(ConfigurationError):
        flow(sys, [0.0, 0.0], 1.0, 0.1, noise)
    noise2 = generate_noise(0, 0, 2, 0.1, 10)
    with pytest.raises(ConfigurationError):
        flow(sys, [0.0, 0.0], 2.0, 0.1, noise2)


def test_flow_results_bitwise_deterministic():
    sys = hamiltonian_system()
    noise = generate_noise(21, 2, 2, 0.01, 100)
    r1 = flow_with_jacobian(sys, [0.3, 0.4], 1.0, 0.01, noise)
    r2 = flow_with_jacobian(sys, [0.3, 0.4], 1.0, 0.01,
                            generate_noise(21, 2, 2, 0.01, 100))
    assert np.array_equal(r1.trajectory, r2.trajectory)
    assert np.array_equal(r1.log_jacobian, r2.log_jacobian)


def test_flow_trajectory_is_canonical_and_starts_at_x0():
    sys = translation_system(1)
    noise = generate_noise(5, 0, 1, 0.05, 200)
    res = flow(sys, [0.99], 10.0, 0.05, noise)
    assert res.trajectory[0][0] == pytest.approx(0.99)
    assert np.all(res.trajectory >= 0) and np.all(res.trajectory < 1)


# ---------------------------------------------------------------------------
# jacobian co-evolution

def test_jacobian_zero_system_is_one():
    sys = StratonovichSystem(manifold=T1, drift=VectorFieldSpec.zero(1),
                             diffusions=())
    noise = generate_noise(0, 0, 0, 0.1, 10)
    res = flow_with_jacobian(sys, [0.5], 1.0, 0.1, noise)
    np.testing.assert_array_equal(res.log_jacobian, np.zeros(11))
    assert fd_jacobian(sys, [0.5], 1.0, 0.1, noise) == pytest.approx(1.0, abs=1e-12)


def test_jacobian_divergence_free_pathwise():
    sys = hamiltonian_system()
    for p in range(3):
        noise = generate_noise(17, p, 2, 1e-3, 1000)
        res = flow_with_jacobian(sys, [0.25, 0.6], 1.0, 1e-3, noise)
        assert np.max(np.abs(res.log_jacobian)) < 1e-2
        fd = fd_jacobian(sys, [0.25, 0.6], 1.0, 1e-3, noise)
        assert fd == pytest.approx(1.0, abs=1e-2)


def test_jacobian_sin_field_reference_and_fd():
    sys = sin_drift_system()
    dt = 1e-3
    noise = generate_noise(0, 0, 0, dt, 1000)
    res = flow_with_jacobian(sys, [0.25], 1.0, dt, noise)
    j_coarse = res.jacobian[-1]
    fine = generate_noise(0, 0, 0, dt / 100, 100000)
    j_ref = flow_with_jacobian(sys, [0.25], 1.0, dt / 100, fine).jacobian[-1]
    assert abs(j_coarse - j_ref) / j_ref < 1e-3
    fd = fd_jacobian(sys, [0.25], 1.0, dt, noise)
    assert abs(fd - j_coarse) / j_coarse < 1e-2


def test_fd_jacobian_uses_minimal_image_across_seam():
    sys = translation_system(1)
    noise = generate_noise(31, 0, 1, 0.01, 100)
    # start next to the seam; translation flow has jacobian exactly 1
    assert fd_jacobian(sys, [0.999], 1.0, 0.01, noise) == pytest.approx(1.0, abs=1e-10)


def test_flow_endpoints_batches_match_single_runs():
    sys = hamiltonian_system()
    noise = generate_noise(3, 0, 2, 0.01, 50)
    pts = np.array([[0.1, 0.2], [0.5, 0.6], [0.9, 0.1]])
    batch = flow_endpoints(sys, pts, 0.01, noise.increments)
    for i, p in enumerate(pts):
        single = flow(sys, p, 0.5, 0.01, noise).endpoint
        np.testing.assert_array_equal(batch[i], single)


def test_heisenberg_flow_stays_canonical():
    m = heisenberg_manifold()
    X, Y, Z = heisenberg_frame()
    sys = StratonovichSystem(manifold=m, drift=VectorFieldSpec.zero(3),
                             diffusions=(X, Y, Z))
    noise = generate_noise(8, 0, 3, 0.01, 500)
    res = flow(sys, [0.5, 0.5, 0.5], 5.0, 0.01, noise)
    assert np.all(res.trajectory >= 0) and np.all(res.trajectory < 1)


# ---------------------------------------------------------------------------
# csv export

def test_trajectory_csv_columns():
    sys = translation_system(2)
    noise = generate_noise(1, 0, 2, 0.5, 2)
    res = flow(sys, [0.1, 0.2], 1.0, 0.5, noise)
    buf = io.StringIO()
    write_trajectory_csv(res, buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "t,x1,x2,logJ"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[1]) == pytest.approx(0.1)
    assert float(first[3]) == 0.0
