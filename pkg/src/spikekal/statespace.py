"""State-space models, Gaussian noise streams, and ground-truth simulation.

Supports linear systems x' = A x + w and the chaotic Lorenz system, with
observations y = H x + v. All randomness flows through :class:`NoiseGenerator`
so that simulations are reproducible bit-for-bit from a single seed.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError, CsvFormatError, ModelValidationError

LINEAR = "linear"
LORENZ = "lorenz"

_PSD_TOL = 1e-8


def psd_factor(matrix: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Return a factor L with L @ L.T == matrix for a symmetric PSD matrix.

    Uses Cholesky when the matrix is positive definite and falls back to an
    eigendecomposition with negative eigenvalues clamped at zero, so singular
    covariances (including the zero matrix) are accepted.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ModelValidationError(f"{name} must be square, got shape {matrix.shape}")
    if not np.allclose(matrix, matrix.T, atol=1e-12):
        raise ModelValidationError(f"{name} must be symmetric")
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        eigvals, eigvecs = np.linalg.eigh(matrix)
        scale = max(1.0, float(np.abs(eigvals).max(initial=0.0)))
        if eigvals.min(initial=0.0) < -_PSD_TOL * scale:
            raise ModelValidationError(
                f"{name} is not positive semi-definite "
                f"(min eigenvalue {eigvals.min():.3e})"
            ) from None
        return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


class NoiseGenerator:
    """Seeded Gaussian noise source with independent named streams.

    Each stream is backed by a counter-based Philox generator derived from
    (seed, stream name), so process and observation noise are decoupled:
    drawing more samples from one stream never shifts another.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def stream(self, name: str) -> np.random.Generator:
        gen = self._streams.get(name)
        if gen is None:
            key = zlib.crc32(name.encode("utf-8"))
            seq = np.random.SeedSequence(entropy=(self.seed, key))
            gen = np.random.Generator(np.random.Philox(seq))
            self._streams[name] = gen
        return gen

    def standard_normal(self, name: str, size: int) -> np.ndarray:
        return self.stream(name).standard_normal(size)

    def gaussian(self, name: str, factor: np.ndarray) -> np.ndarray:
        """Draw one sample of N(0, factor @ factor.T)."""
        return factor @ self.standard_normal(name, factor.shape[1])


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete-time state-space model with Gaussian process/observation noise.

    ``kind`` selects the dynamics: ``linear`` uses the transition matrix ``A``;
    ``lorenz`` integrates the Lorenz equations (``A`` is ignored and may be
    None). ``H`` maps states to observations, ``Q`` and ``R_obs`` are the
    process and observation noise covariances, ``dt`` the step size in seconds.
    """

    kind: str
    A: np.ndarray | None
    H: np.ndarray
    Q: np.ndarray
    R_obs: np.ndarray
    dt: float
    q_factor: np.ndarray = field(init=False, repr=False, compare=False)
    r_factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in (LINEAR, LORENZ):
            raise ModelValidationError(f"unknown model kind {self.kind!r}")
        if self.dt <= 0:
            raise ModelValidationError(f"dt must be > 0, got {self.dt}")
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        Q = np.asarray(self.Q, dtype=float)
        R = np.atleast_2d(np.asarray(self.R_obs, dtype=float))
        m, n = H.shape
        if m > n:
            raise ModelValidationError(f"H must be m x n with m <= n, got {H.shape}")
        if Q.shape != (n, n):
            raise ModelValidationError(f"Q must be {n}x{n}, got {Q.shape}")
        if R.shape != (m, m):
            raise ModelValidationError(f"R_obs must be {m}x{m}, got {R.shape}")
        if self.kind == LINEAR:
            if self.A is None:
                raise ModelValidationError("linear models require A")
            A = np.asarray(self.A, dtype=float)
            if A.shape != (n, n):
                raise ModelValidationError(f"A must be {n}x{n}, got {A.shape}")
            object.__setattr__(self, "A", A)
        elif n != 3:
            raise ModelValidationError("lorenz models have state dimension 3")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R_obs", R)
        object.__setattr__(self, "q_factor", psd_factor(Q, "Q"))
        object.__setattr__(self, "r_factor", psd_factor(R, "R_obs"))

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    def with_noise_scales(self, q_scale: float, r_scale: float) -> "StateSpaceModel":
        """Copy of the model with Q and R_obs scaled (mismatched-filter mode)."""
        if q_scale <= 0 or r_scale <= 0:
            raise ModelValidationError("noise scales must be > 0")
        return StateSpaceModel(
            kind=self.kind,
            A=None if self.A is None else self.A.copy(),
            H=self.H.copy(),
            Q=self.Q * q_scale,
            R_obs=self.R_obs * r_scale,
            dt=self.dt,
        )


def lorenz_derivative(x: np.ndarray) -> np.ndarray:
    """Time derivative of the Lorenz system at state ``x``.

    Parameters are the classical sigma=10, rho=28, beta=8/3.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ContractViolationError(f"lorenz state must be a 3-vector, got {x.shape}")
    x1, x2, x3 = x
    return np.array(
        [
            -10.0 * x1 + 10.0 * x2,
            28.0 * x1 - x2 - x1 * x3,
            x1 * x2 - (8.0 / 3.0) * x3,
        ]
    )


def lorenz_jacobian(x: np.ndarray) -> np.ndarray:
    """Analytic Jacobian of :func:`lorenz_derivative`."""
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise ContractViolationError(f"lorenz state must be a 3-vector, got {x.shape}")
    x1, x2, x3 = x
    return np.array(
        [
            [-10.0, 10.0, 0.0],
            [28.0 - x3, -1.0, -x1],
            [x2, x1, -8.0 / 3.0],
        ]
    )


def rk4_step(f, x: np.ndarray, dt: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step of x' = f(x)."""
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_state(model: StateSpaceModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ContractViolationError(
            f"state must have dimension {model.n}, got shape {x.shape}"
        )
    return x


def evolve(model: StateSpaceModel, x: np.ndarray, noise: NoiseGenerator) -> np.ndarray:
    """Advance the true state one step: dynamics plus process noise N(0, Q)."""
    x = _check_state(model, x)
    if model.kind == LINEAR:
        nxt = model.A @ x
    else:
        nxt = rk4_step(lorenz_derivative, x, model.dt)
    return nxt + noise.gaussian("process", model.q_factor)


def observe(model: StateSpaceModel, x: np.ndarray, noise: NoiseGenerator) -> np.ndarray:
    """Observe the state: H x plus observation noise N(0, R_obs)."""
    x = _check_state(model, x)
    return model.H @ x + noise.gaussian("observation", model.r_factor)


@dataclass
class Trajectory:
    """Time-indexed true states and noisy observations with a shared step size.

    ``truth`` has shape (T, n) and ``observations`` (T, m); sample k sits at
    time (k + 1) * dt. Arrays are frozen read-only so every consumer of a
    trajectory sees bit-identical data.
    """

    dt: float
    truth: np.ndarray
    observations: np.ndarray
    labels: tuple[str, ...]
    obs_labels: tuple[str, ...] = ()

    def __post_init__(self):
        self.truth = np.asarray(self.truth, dtype=float)
        self.observations = np.asarray(self.observations, dtype=float)
        if self.truth.ndim != 2 or self.observations.ndim != 2:
            raise ContractViolationError("truth and observations must be 2-D arrays")
        if len(self.truth) != len(self.observations) or len(self.truth) < 1:
            raise ContractViolationError(
                "truth and observations must have equal length T >= 1"
            )
        if len(self.labels) != self.truth.shape[1]:
            raise ContractViolationError("one label per state dimension required")
        if not self.obs_labels:
            self.obs_labels = tuple(
                f"obs{i}" for i in range(self.observations.shape[1])
            )
        if len(self.obs_labels) != self.observations.shape[1]:
            raise ContractViolationError("one label per observation dimension required")
        self.truth.setflags(write=False)
        self.observations.setflags(write=False)

    def __len__(self) -> int:
        return len(self.truth)

    @property
    def times(self) -> np.ndarray:
        return (np.arange(len(self)) + 1) * self.dt

    def write_csv(self, path) -> None:
        """Write `t,<truth dims...>,<obs dims...>` rows, one per step."""
        header = ",".join(["t", *self.labels, *self.obs_labels])
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(header + "\n")
            for t, xs, ys in zip(self.times, self.truth, self.observations):
                cells = [f"{t:.6f}"] + [f"{v:.17g}" for v in xs] + [
                    f"{v:.17g}" for v in ys
                ]
                fh.write(",".join(cells) + "\n")

    @classmethod
    def read_csv(cls, path, n: int, dt: float) -> "Trajectory":
        """Inverse of :meth:`write_csv` given the state dimension ``n``."""
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise CsvFormatError("empty trajectory file", line=1)
        columns = lines[0].split(",")
        if columns[0] != "t" or len(columns) <= n + 1:
            raise CsvFormatError(
                f"expected header t,<{n} truth dims>,<obs dims>", line=1
            )
        labels = tuple(columns[1 : n + 1])
        obs_labels = tuple(columns[n + 1 :])
        truth, obs = [], []
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            cells = line.split(",")
            if len(cells) != len(columns):
                raise CsvFormatError(
                    f"expected {len(columns)} columns, got {len(cells)}", line=i
                )
            try:
                values = [float(c) for c in cells[1:]]
            except ValueError as exc:
                raise CsvFormatError(str(exc), line=i) from None
            truth.append(values[:n])
            obs.append(values[n:])
        return cls(
            dt=dt,
            truth=np.array(truth),
            observations=np.array(obs),
            labels=labels,
            obs_labels=obs_labels,
        )


def default_obs_labels(model: StateSpaceModel, labels: tuple[str, ...]) -> tuple[str, ...]:
    """Name observation dims after the state they select when H rows are one-hot."""
    out = []
    for i, row in enumerate(model.H):
        hot = np.nonzero(row)[0]
        if len(hot) == 1 and row[hot[0]] == 1.0:
            out.append(f"{labels[hot[0]]}_obs")
        else:
            out.append(f"obs{i}")
    return tuple(out)


def simulate(
    model: StateSpaceModel,
    x0: np.ndarray,
    steps: int,
    noise: NoiseGenerator,
    labels: tuple[str, ...] | None = None,
) -> Trajectory:
    """Simulate ``steps`` transitions from ``x0`` and observe every state.

    truth[0] is the state after one :func:`evolve` of ``x0``; observations are
    taken at every stored state.
    """
    if steps < 1:
        raise ContractViolationError(f"steps must be >= 1, got {steps}")
    x = _check_state(model, x0)
    truth = np.empty((steps, model.n))
    obs = np.empty((steps, model.m))
    for k in range(steps):
        x = evolve(model, x, noise)
        truth[k] = x
        obs[k] = observe(model, x, noise)
    if labels is None:
        labels = tuple(f"x{i}" for i in range(model.n))
    return Trajectory(
        dt=model.dt,
        truth=truth,
        observations=obs,
        labels=labels,
        obs_labels=default_obs_labels(model, labels),
    )
