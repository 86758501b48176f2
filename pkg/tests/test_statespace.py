import numpy as np
import pytest

from spikekal.errors import ContractViolationError, CsvFormatError, ModelValidationError
from spikekal.statespace import (
    NoiseGenerator,
    StateSpaceModel,
    Trajectory,
    evolve,
    lorenz_derivative,
    lorenz_jacobian,
    observe,
    psd_factor,
    simulate,
)


def constant_velocity(dt=0.01, q=None, r=None):
    A = np.array([[1, 0, dt, 0], [0, 1, 0, dt], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    H = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)
    Q = np.zeros((4, 4)) if q is None else np.diag(q)
    R = np.zeros((2, 2)) if r is None else np.diag(r)
    return StateSpaceModel(kind="linear", A=A, H=H, Q=Q, R_obs=R, dt=dt)


def lorenz_model(dt=0.01, q=0.0, r=1.0):
    return StateSpaceModel(
        kind="lorenz",
        A=None,
        H=np.array([[1.0, 0.0, 0.0]]),
        Q=np.eye(3) * q,
        R_obs=np.array([[r]]),
        dt=dt,
    )


class TestLorenzDerivative:
    def test_unit_point(self):
        np.testing.assert_allclose(
            lorenz_derivative(np.array([1.0, 1.0, 1.0])), [0.0, 26.0, -5.0 / 3.0]
        )

    def test_origin_fixed_point(self):
        np.testing.assert_array_equal(lorenz_derivative(np.zeros(3)), np.zeros(3))

    def test_nonzero_fixed_point(self):
        s = np.sqrt(72.0)
        np.testing.assert_allclose(
            lorenz_derivative(np.array([s, s, 27.0])), np.zeros(3), atol=1e-12
        )

    def test_dimension_check(self):
        with pytest.raises(ContractViolationError):
            lorenz_derivative(np.zeros(4))

    def test_jacobian_rows(self):
        J = lorenz_jacobian(np.array([1.0, 1.0, 1.0]))
        np.testing.assert_allclose(J[1], [27.0, -1.0, -1.0])
        np.testing.assert_allclose(J[0], [-10.0, 10.0, 0.0])
        np.testing.assert_allclose(J[2], [1.0, 1.0, -8.0 / 3.0])


class TestEvolve:
    def test_noise_free_constant_velocity(self):
        model = constant_velocity()
        noise = NoiseGenerator(0)
        out = evolve(model, np.array([0.0, 0.0, 1.0, 1.0]), noise)
        np.testing.assert_allclose(out, [0.01, 0.01, 1.0, 1.0])

    def test_lorenz_origin_is_fixed(self):
        model = lorenz_model()
        out = evolve(model, np.zeros(3), NoiseGenerator(0))
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_identity_transition(self):
        model = StateSpaceModel(
            kind="linear",
            A=np.eye(3),
            H=np.eye(3),
            Q=np.zeros((3, 3)),
            R_obs=np.eye(3),
            dt=0.1,
        )
        x = np.array([2.0, -1.0, 0.5])
        np.testing.assert_array_equal(evolve(model, x, NoiseGenerator(1)), x)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractViolationError):
            evolve(constant_velocity(), np.zeros(3), NoiseGenerator(0))


class TestObserve:
    def test_position_selector(self):
        model = constant_velocity()
        out = observe(model, np.array([3.0, 4.0, 1.0, 1.0]), NoiseGenerator(0))
        np.testing.assert_array_equal(out, [3.0, 4.0])

    def test_first_component_selector(self):
        model = StateSpaceModel(
            kind="linear",
            A=np.eye(3),
            H=np.array([[1.0, 0.0, 0.0]]),
            Q=np.zeros((3, 3)),
            R_obs=np.zeros((1, 1)),
            dt=0.1,
        )
        out = observe(model, np.array([5.0, 7.0, 9.0]), NoiseGenerator(0))
        np.testing.assert_array_equal(out, [5.0])

    def test_identity_observation(self):
        model = StateSpaceModel(
            kind="linear",
            A=np.eye(2),
            H=np.eye(2),
            Q=np.zeros((2, 2)),
            R_obs=np.zeros((2, 2)),
            dt=0.1,
        )
        x = np.array([1.5, -2.5])
        np.testing.assert_array_equal(observe(model, x, NoiseGenerator(0)), x)


class TestSimulate:
    def test_noise_free_positions(self):
        model = constant_velocity()
        traj = simulate(model, np.array([0.0, 0.0, 1.0, 0.0]), 3, NoiseGenerator(0))
        np.testing.assert_allclose(traj.truth[:, 0], [0.01, 0.02, 0.03])
        np.testing.assert_allclose(traj.truth[:, 1], [0.0, 0.0, 0.0])

    def test_duration(self):
        model = constant_velocity(q=(1e-4,) * 4, r=(0.25, 0.25))
        traj = simulate(model, np.zeros(4), 3000, NoiseGenerator(7))
        assert len(traj) == 3000
        assert traj.times[-1] == pytest.approx(30.0)

    def test_same_seed_bit_identical(self):
        model = constant_velocity(q=(1e-4,) * 4, r=(0.25, 0.25))
        a = simulate(model, np.zeros(4), 100, NoiseGenerator(42))
        b = simulate(model, np.zeros(4), 100, NoiseGenerator(42))
        assert np.array_equal(a.truth, b.truth)
        assert np.array_equal(a.observations, b.observations)

    def test_steps_contract(self):
        with pytest.raises(ContractViolationError):
            simulate(constant_velocity(), np.zeros(4), 0, NoiseGenerator(0))

    def test_noise_free_matches_matrix_power(self):
        # closed form A^k x0 within 1e-10 up to k = 1000
        rng = np.random.default_rng(5)
        A = np.eye(4) + 0.001 * rng.standard_normal((4, 4))
        model = StateSpaceModel(
            kind="linear",
            A=A,
            H=np.array([[1.0, 0, 0, 0]]),
            Q=np.zeros((4, 4)),
            R_obs=np.eye(1),
            dt=0.01,
        )
        x0 = rng.standard_normal(4)
        traj = simulate(model, x0, 1000, NoiseGenerator(0))
        for k in (0, 9, 99, 999):
            expected = np.linalg.matrix_power(A, k + 1) @ x0
            assert np.abs(traj.truth[k] - expected).max() < 1e-10

    def test_lorenz_stays_bounded(self):
        model = lorenz_model()
        traj = simulate(model, np.array([1.0, 1.0, 1.0]), 3000, NoiseGenerator(0))
        assert np.abs(traj.truth).max() < 100.0


class TestNoiseStatistics:
    def test_empirical_covariance_matches_q(self):
        q = np.array([0.04, 0.09, 0.25, 1.0])
        model = constant_velocity(q=q, r=(0.25, 0.25))
        noise = NoiseGenerator(123)
        draws = np.array(
            [noise.gaussian("process", model.q_factor) for _ in range(100_000)]
        )
        emp = draws.var(axis=0)
        np.testing.assert_allclose(emp, q, rtol=0.05)

    def test_streams_are_independent(self):
        # consuming one stream must not shift another
        a = NoiseGenerator(9)
        first = a.standard_normal("process", 5).copy()
        b = NoiseGenerator(9)
        b.standard_normal("observation", 1000)
        second = b.standard_normal("process", 5)
        np.testing.assert_array_equal(first, second)


class TestModelValidation:
    def test_non_psd_q_rejected_at_construction(self):
        Q = np.diag([1.0, -1.0, 1.0, 1.0])
        with pytest.raises(ModelValidationError):
            StateSpaceModel(
                kind="linear",
                A=np.eye(4),
                H=np.array([[1.0, 0, 0, 0]]),
                Q=Q,
                R_obs=np.eye(1),
                dt=0.01,
            )

    def test_rank_deficient_q_accepted(self):
        Q = np.diag([1.0, 0.0, 0.0, 0.0])
        model = StateSpaceModel(
            kind="linear",
            A=np.eye(4),
            H=np.array([[1.0, 0, 0, 0]]),
            Q=Q,
            R_obs=np.eye(1),
            dt=0.01,
        )
        w = model.q_factor @ model.q_factor.T
        np.testing.assert_allclose(w, Q, atol=1e-12)

    def test_wide_h_rejected(self):
        with pytest.raises(ModelValidationError):
            StateSpaceModel(
                kind="linear",
                A=np.eye(2),
                H=np.zeros((3, 2)),
                Q=np.zeros((2, 2)),
                R_obs=np.eye(3),
                dt=0.01,
            )

    def test_nonpositive_dt_rejected(self):
        with pytest.raises(ModelValidationError):
            constant_velocity(dt=0.0)

    def test_asymmetric_covariance_rejected(self):
        M = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ModelValidationError):
            psd_factor(M)


class TestTrajectoryCsv:
    def test_round_trip(self, tmp_path):
        model = constant_velocity(q=(1e-4,) * 4, r=(0.25, 0.25))
        traj = simulate(
            model, np.zeros(4), 50, NoiseGenerator(11), labels=("X", "Y", "Vx", "Vy")
        )
        path = tmp_path / "traj.csv"
        traj.write_csv(path)
        back = Trajectory.read_csv(path, n=4, dt=model.dt)
        np.testing.assert_array_equal(back.truth, traj.truth)
        np.testing.assert_array_equal(back.observations, traj.observations)
        assert back.labels == traj.labels
        assert back.obs_labels == ("X_obs", "Y_obs")

    def test_header_and_time_format(self, tmp_path):
        model = constant_velocity()
        traj = simulate(model, np.zeros(4), 2, NoiseGenerator(0), labels=("X", "Y", "Vx", "Vy"))
        path = tmp_path / "traj.csv"
        traj.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,X,Y,Vx,Vy,X_obs,Y_obs"
        assert lines[1].startswith("0.010000,")

    def test_malformed_rows_carry_line_numbers(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("t,X,X_obs\n0.01,1.0\n")
        with pytest.raises(CsvFormatError) as err:
            Trajectory.read_csv(path, n=1, dt=0.01)
        assert err.value.line == 2

    def test_length_mismatch_rejected(self):
        with pytest.raises(ContractViolationError):
            Trajectory(
                dt=0.01,
                truth=np.zeros((3, 2)),
                observations=np.zeros((2, 1)),
                labels=("a", "b"),
            )
