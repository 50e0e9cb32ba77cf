"""Local linear models, the discrete Riccati solve and the LQR controller."""
from dataclasses import dataclass, field

import numpy as np

from .errors import LinearizationError, ModelUnavailable, RiccatiDivergence, SimulationDiverged
from .linalg import least_squares_min_norm, solve_regularized_normal

DEFAULT_K = 64
RELATIVE_RIDGE = 1e-6


@dataclass
class LinearModel:
    """``s' = A s + B a + E`` in absolute state coordinates."""
    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    origin: np.ndarray

    def drift(self):
        """One-step deviation at the origin under zero action."""
        return self.A @ self.origin + self.E - self.origin


def _wrap_cols(arr, angle_dims):
    for i in angle_dims:
        arr[..., i] = (arr[..., i] + np.pi) % (2 * np.pi) - np.pi
    return arr


def fit_llr_model(memory, goal, k=DEFAULT_K, ridge=None, k_min=None, angle_dims=(), weights=None):
    """Fit a linear model to the ``k`` stored transitions closest to ``goal``."""
    k_min = k if k_min is None else k_min
    if len(memory) < max(k_min, 1):
        raise ModelUnavailable(f"need {k_min} transitions, have {len(memory)}")
    goal = np.asarray(goal, dtype=float)
    batch = memory.batch(memory.neighbor_indices(goal, k, weights))
    n, m = batch.state.shape[1], batch.action.shape[1]
    sbar = _wrap_cols(batch.state - goal, angle_dims)
    delta = _wrap_cols(batch.next_state - batch.state, angle_dims)
    inputs = np.hstack([sbar, batch.action, np.ones((len(batch), 1))])
    if ridge is None:
        ridge = RELATIVE_RIDGE * float(np.max(np.einsum("ij,ij->j", inputs, inputs)))
    x = solve_regularized_normal(inputs, delta, ridge)
    xt = x.T
    A = np.eye(n) + xt[:, :n]
    B = xt[:, n:n + m].copy()
    bias = xt[:, n + m]
    E = bias + (np.eye(n) - A) @ goal
    return LinearModel(A, B, E, goal.copy())


def linearize_true(env, goal, h=1e-5):
    """Central-difference linearization of one control step around (goal, 0)."""
    goal = np.asarray(goal, dtype=float)
    n, m = env.spec.state_dim, env.spec.action_dim
    angles = env.spec.angle_dims
    a0 = np.zeros(m)

    def f(s, a):
        try:
            return env.integrate(s, a)
        except SimulationDiverged as exc:
            raise LinearizationError(str(exc)) from exc

    def diff(hi, lo):
        return _wrap_cols(hi - lo, angles) / (2 * h)

    A = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        A[:, j] = diff(f(goal + e, a0), f(goal - e, a0))
    B = np.empty((n, m))
    for j in range(m):
        e = np.zeros(m)
        e[j] = h
        B[:, j] = diff(f(goal, a0 + e), f(goal, a0 - e))
    drift = _wrap_cols(f(goal, a0) - goal, angles)
    E = drift + goal - A @ goal
    return LinearModel(A, B, E, goal.copy())


def riccati_residual(P, A, B, C, D):
    K = A.T @ P @ B
    return P - (A.T @ P @ A - K @ np.linalg.solve(D + B.T @ P @ B, K.T) + C)


def solve_dare(A, B, C, D, tol=1e-10, max_iter=100_000):
    """Value-iterate the discrete algebraic Riccati equation from ``P = C``.

    Each sweep is written in closed-loop form,
    ``P <- (A - BF)' P (A - BF) + F' D F + C`` with ``F`` the current gain,
    which equals the textbook recursion but keeps ``P`` symmetric and
    positive semidefinite under roundoff.
    """
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    C, D = np.asarray(C, dtype=float), np.asarray(D, dtype=float)
    P = C.copy()
    for _ in range(max_iter):
        try:
            F = np.linalg.solve(D + B.T @ P @ B, B.T @ P @ A)
        except np.linalg.LinAlgError as exc:
            raise RiccatiDivergence("singular D + B'PB during Riccati iteration") from exc
        closed = A - B @ F
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = closed.T @ P @ closed + F.T @ D @ F + C
        nxt = 0.5 * (nxt + nxt.T)
        if not np.all(np.isfinite(nxt)):
            raise RiccatiDivergence("Riccati iteration produced non-finite values")
        change = np.max(np.abs(nxt - P))
        P = nxt
        if change < tol * (1.0 + np.max(np.abs(P))):
            return P
    raise RiccatiDivergence(f"Riccati iteration did not converge in {max_iter} steps")


def lqr_gain(P, A, B, D):
    return np.linalg.solve(D + B.T @ P @ B, B.T @ P @ A)


def spectral_radius(M, iters=2000, seed=0):
    """Power-iteration estimate of the spectral radius (robust to complex pairs)."""
    M = np.asarray(M, dtype=float)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[0])
    # the growth rate of ||M^k v||^(1/k) converges to rho(M)
    log_norm = 0.0
    for _ in range(iters):
        v = M @ v
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        log_norm += np.log(nv)
        v /= nv
    return float(np.exp(log_norm / iters))


@dataclass
class LqrController:
    P: np.ndarray
    F: np.ndarray
    a_ff: np.ndarray
    goal: np.ndarray
    action_min: np.ndarray
    action_max: np.ndarray
    angle_dims: tuple = ()
    model: LinearModel = field(default=None, repr=False)

    def deviation(self, state):
        sbar = np.asarray(state, dtype=float) - self.goal
        return _wrap_cols(sbar, self.angle_dims) if self.angle_dims else sbar

    def control(self, state):
        """Clamped ``-F sbar + a_ff``; accepts one state or a batch of rows."""
        sbar = self.deviation(state)
        a = -sbar @ self.F.T + self.a_ff
        return np.clip(a, self.action_min, self.action_max)


def build_controller(model, C, D, action_min, action_max, angle_dims=(), feedforward="cancel"):
    C = np.atleast_2d(np.asarray(C, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    P = solve_dare(model.A, model.B, C, D)
    F = lqr_gain(P, model.A, model.B, D)
    drift = model.drift()
    if feedforward == "cancel":
        a_ff = least_squares_min_norm(model.B, -drift)
    elif feedforward == "literal":
        a_ff = least_squares_min_norm(model.B, drift)
    else:
        raise ValueError(f"unknown feedforward mode {feedforward!r}")
    return LqrController(P, F, a_ff, np.asarray(model.origin, dtype=float),
                         np.asarray(action_min, dtype=float), np.asarray(action_max, dtype=float),
                         tuple(angle_dims), model)


def controller_for_env(env, model, feedforward="cancel"):
    s = env.spec
    return build_controller(model, s.C, s.D, s.action_min, s.action_max, s.angle_dims, feedforward)


def write_controller_block(fh, label, ctrl):
    """Append the model and controller matrices as labelled CSV blocks."""
    blocks = [("A", ctrl.model.A), ("B", ctrl.model.B), ("E", ctrl.model.E[None, :]),
              ("P", ctrl.P), ("F", ctrl.F), ("a_ff", ctrl.a_ff[None, :])]
    for name, mat in blocks:
        fh.write(f"# {label} {name}\n")
        for row in np.atleast_2d(mat):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
