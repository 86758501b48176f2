"""Classic Kalman filter and extended Kalman filter.

These are the baselines of the benchmark harness and the teacher that
supervises the spiking gain network. All operations are pure functions
KalmanState -> KalmanState; covariances are re-symmetrized after every
update to keep them numerically PSD.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ContractViolationError, NumericalError
from .statespace import LORENZ, StateSpaceModel, lorenz_jacobian

_RIDGE = 1e-12


@dataclass
class KalmanState:
    """Posterior mean/covariance plus the last prior (prediction) pair."""

    x: np.ndarray
    P: np.ndarray
    x_prior: np.ndarray
    P_prior: np.ndarray

    @classmethod
    def initial(cls, x0: np.ndarray, P0: np.ndarray) -> "KalmanState":
        x0 = np.asarray(x0, dtype=float)
        P0 = np.asarray(P0, dtype=float)
        return cls(x=x0, P=P0, x_prior=x0.copy(), P_prior=P0.copy())


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def kf_predict(state: KalmanState, A: np.ndarray, Q: np.ndarray) -> KalmanState:
    """Prediction step: x_prior = A x, P_prior = A P A^T + Q."""
    A = np.asarray(A, dtype=float)
    if A.shape != (state.x.shape[0], state.x.shape[0]) or Q.shape != A.shape:
        raise ContractViolationError(
            f"A and Q must be {state.x.shape[0]}x{state.x.shape[0]}"
        )
    return KalmanState(
        x=state.x,
        P=state.P,
        x_prior=A @ state.x,
        P_prior=_symmetrize(A @ state.P @ A.T + Q),
    )


def kf_gain(P_prior: np.ndarray, H: np.ndarray, R_obs: np.ndarray) -> np.ndarray:
    """Optimal gain K = P_prior H^T (H P_prior H^T + R)^-1 via an SPD solve.

    The innovation covariance is never inverted explicitly. If its Cholesky
    factorization fails, one ridge of 1e-12 * trace is added before giving up
    with a NumericalError carrying the condition number.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    P_prior = np.asarray(P_prior, dtype=float)
    R_obs = np.atleast_2d(np.asarray(R_obs, dtype=float))
    if H.shape != (R_obs.shape[0], P_prior.shape[0]):
        raise ContractViolationError("inconsistent shapes for P_prior, H, R_obs")
    pht = P_prior @ H.T
    S = _symmetrize(H @ pht + R_obs)
    try:
        factor = scipy.linalg.cho_factor(S, lower=True)
    except np.linalg.LinAlgError:
        ridge = _RIDGE * np.trace(S)
        try:
            factor = scipy.linalg.cho_factor(
                S + ridge * np.eye(S.shape[0]), lower=True
            )
        except np.linalg.LinAlgError:
            raise NumericalError(
                "innovation covariance is singular",
                condition=float(np.linalg.cond(S)),
            ) from None
    # K = pht @ S^-1, solved as S K^T = pht^T (S symmetric)
    return scipy.linalg.cho_solve(factor, pht.T).T


def kf_update(
    state: KalmanState, K: np.ndarray, y: np.ndarray, H: np.ndarray
) -> KalmanState:
    """Measurement update: x = x_prior + K (y - H x_prior), P = (I - K H) P_prior."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = state.x_prior.shape[0]
    if y.shape != (H.shape[0],) or K.shape != (n, H.shape[0]) or H.shape[1] != n:
        raise ContractViolationError("inconsistent shapes for K, y, H")
    innovation = y - H @ state.x_prior
    identity = np.eye(n)
    return KalmanState(
        x=state.x_prior + K @ innovation,
        P=_symmetrize((identity - K @ H) @ state.P_prior),
        x_prior=state.x_prior,
        P_prior=state.P_prior,
    )


def ekf_jacobian(model: StateSpaceModel, x: np.ndarray) -> np.ndarray:
    """Discrete transition I + dt * J(x) linearizing the Lorenz dynamics at x."""
    if model.kind != LORENZ:
        raise ContractViolationError("ekf_jacobian is defined for lorenz models only")
    return np.eye(3) + model.dt * lorenz_jacobian(x)


def transition_matrix(model: StateSpaceModel, x: np.ndarray) -> np.ndarray:
    """Per-step transition matrix: A for linear models, I + dt J(x) for Lorenz."""
    if model.kind == LORENZ:
        return ekf_jacobian(model, x)
    return model.A


def kf_step(
    state: KalmanState, model: StateSpaceModel, y: np.ndarray
) -> tuple[KalmanState, np.ndarray]:
    """One predict -> gain -> update cycle. Returns the new state and the gain.

    For Lorenz models the transition is re-linearized at the current posterior
    mean each step (extended Kalman filter).
    """
    A = transition_matrix(model, state.x)
    state = kf_predict(state, A, model.Q)
    K = kf_gain(state.P_prior, model.H, model.R_obs)
    return kf_update(state, K, y, model.H), K


def initial_state(model: StateSpaceModel, y0: np.ndarray) -> KalmanState:
    """Default filter initialization: pseudo-inverse lift of the first
    observation (zeros in unobserved directions) with unit covariance."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    if y0.shape != (model.m,):
        raise ContractViolationError(
            f"first observation must have dimension {model.m}"
        )
    x0 = np.linalg.pinv(model.H) @ y0
    return KalmanState.initial(x0, np.eye(model.n))


def run_filter(
    model: StateSpaceModel,
    observations: np.ndarray,
    x0: np.ndarray | None = None,
    P0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Filter a whole observation sequence.

    Returns (estimates, gains) with shapes (T, n) and (T, n, m). When x0/P0
    are omitted the filter starts from :func:`initial_state` built on the
    first observation, which is then also processed as a measurement.
    """
    observations = np.asarray(observations, dtype=float)
    if observations.ndim != 2 or observations.shape[1] != model.m:
        raise ContractViolationError(
            f"observations must have shape (T, {model.m})"
        )
    if x0 is None:
        state = initial_state(model, observations[0])
    else:
        state = KalmanState.initial(x0, np.eye(model.n) if P0 is None else P0)
    T = len(observations)
    estimates = np.empty((T, model.n))
    gains = np.empty((T, model.n, model.m))
    for k in range(T):
        state, K = kf_step(state, model, observations[k])
        estimates[k] = state.x
        gains[k] = K
    return estimates, gains
