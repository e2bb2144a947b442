"""Weight-matrix solver: event norm, objective, augmented-Lagrangian iteration
and an exhaustive grid oracle used to validate it.

The weight matrix ``W`` (N robots x E event types) maximizes::

    <W, S> + gamma1 * sum_e ||W[:, e]||_2 - gamma2 * ||W - W_prev||_F^2

subject to ``W @ 1 = 1`` and ``W >= 0``. The row-sum constraint is handled by
an augmented Lagrangian with multiplier ``lam`` and geometrically increasing
penalty ``mu``; nonnegativity by thresholding.
"""

import itertools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.validation import check_is_fitted

from ._validation import check_capabilities, check_gammas, check_utility, check_weights
from .domain import SolverParams, validate_solver_params

__all__ = [
    "AlmState",
    "CapabilityWeighting",
    "NoConvergence",
    "SingularSystem",
    "SolveResult",
    "TooLarge",
    "ZeroCapabilityRow",
    "alm_step",
    "event_norm",
    "event_norm_gradient",
    "finalize_weights",
    "init_alm_state",
    "init_weights",
    "objective",
    "oracle_solve",
    "simplex_grid",
    "solve_weights",
]

# Reciprocal-condition floor for the explicit E x E solve.
_COND_LIMIT = 1e-4 / np.finfo(float).eps


class ZeroCapabilityRow(ValueError):
    pass


class SingularSystem(np.linalg.LinAlgError):
    pass


class TooLarge(ValueError):
    pass


class NoConvergence(ConvergenceWarning):
    pass


def init_weights(capabilities):
    """Uniform weights over each robot's capable event types."""
    C = np.asarray(capabilities, dtype=float)
    if C.ndim != 2:
        raise ValueError("capabilities must be a 2-D array")
    counts = C.sum(axis=1)
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise ZeroCapabilityRow(f"rows {empty.tolist()} have no capabilities")
    return C / counts[:, None]


def event_norm(W):
    """Sum over event types of the Euclidean norm of that column."""
    return float(np.linalg.norm(np.asarray(W, dtype=float), axis=0).sum())


def objective(W, S, W_prev, gamma1, gamma2):
    W = np.asarray(W, dtype=float)
    diff = W - np.asarray(W_prev, dtype=float)
    return float(np.sum(W * S) + gamma1 * event_norm(W) - gamma2 * np.sum(diff * diff))


@dataclass
class AlmState:
    W: np.ndarray
    mu: float
    lam: np.ndarray
    k: int = 0
    D: np.ndarray = field(default=None, repr=False)


def init_alm_state(W0, params):
    W0 = np.array(W0, dtype=float)
    return AlmState(W=W0, mu=float(params.mu0), lam=np.zeros(W0.shape[0]), k=0)


def _column_weights(W, eps):
    # Diagonal of D = diag(1 / (2 max(||w_e||, eps))).
    return 1.0 / (2.0 * np.maximum(np.linalg.norm(W, axis=0), eps))


def event_norm_gradient(W, eps=1e-9, mask=None):
    """Supergradient of the event norm.

    ``W[:, e] / ||W[:, e]||`` for nonzero columns. At an all-zero column the
    norm is not differentiable; we return the unit vector spread evenly over
    the entries allowed by ``mask``, which is the steepest ascent direction
    into the nonnegative orthant.
    """
    W = np.asarray(W, dtype=float)
    norms = np.linalg.norm(W, axis=0)
    G = W * (2.0 * _column_weights(W, eps))
    zero = norms == 0
    if zero.any():
        M = np.ones_like(W) if mask is None else np.asarray(mask, dtype=float)
        cnt = M[:, zero].sum(axis=0)
        G[:, zero] = M[:, zero] / np.sqrt(np.where(cnt > 0, cnt, 1.0))
    return G


def _shifted_threshold(R, a, mu, lam, mask=None):
    """Row-wise minimizer of ``a/2 ||w||^2 - r.w + mu/2 (1.w - 1 + lam/mu)^2``
    over ``w >= 0`` (and ``w = 0`` off ``mask``).

    The solution is ``max((r - theta) / a, 0)`` where the shift ``theta`` is
    the penalty gradient evaluated on the active support; found by scanning
    support sizes in order of decreasing ``r``, as in a simplex projection.
    """
    n, e = R.shape
    Rm = R if mask is None else np.where(mask > 0, R, -np.inf)
    U = -np.sort(-Rm, axis=1)
    finite = np.isfinite(U)
    cs = np.cumsum(np.where(finite, U, 0.0), axis=1)
    k = np.arange(1, e + 1)
    theta_k = (mu * (cs / a - 1.0) + lam[:, None]) / (1.0 + mu * k / a)
    nxt = np.concatenate([U[:, 1:], np.full((n, 1), -np.inf)], axis=1)
    valid = finite & (U > theta_k) & (nxt <= theta_k)
    has = valid.any(axis=1)
    theta = np.where(has, theta_k[np.arange(n), np.argmax(valid, axis=1)], lam - mu)
    Wn = np.maximum((R - theta[:, None]) / a, 0.0)
    if mask is not None:
        Wn = np.where(mask > 0, Wn, 0.0)
    return Wn


def alm_step(state, S, W_prev, gamma1, gamma2, params=SolverParams(), mask=None):
    """One augmented-Lagrangian iteration; returns a new state.

    With ``params.update == "closed_form"`` the weight update is the literal closed
    form ``(S + 2 g2 W_prev + mu 1 1' - lam 1') (-g1 D + 2 g2 I + mu 1 1')^-1``
    followed by ``max(., 0)``. The default ``"linearized"`` update uses the
    event-norm supergradient at the current iterate instead of ``-g1 D``
    inside the inverse, adds the proximal term, and thresholds exactly on the
    active support. Both end with the same multiplier and penalty updates.
    """
    W = state.W
    n, e = W.shape
    mu = state.mu
    lam = state.lam
    d = _column_weights(W, params.column_norm_epsilon)

    if params.update == "closed_form":
        M = -gamma1 * np.diag(d) + 2.0 * gamma2 * np.eye(e) + mu * np.ones((e, e))
        c = np.linalg.cond(M)
        if not np.isfinite(c) or c > _COND_LIMIT:
            raise SingularSystem(f"update matrix is ill-conditioned (cond={c:.3g})")
        R = S + 2.0 * gamma2 * W_prev + mu - lam[:, None]
        Wn = np.maximum(np.linalg.solve(M, R.T).T, 0.0)
    else:
        a = 2.0 * gamma2 + params.proximal
        if a <= 0:
            raise SingularSystem("2*gamma2 + proximal must be positive")
        G = event_norm_gradient(W, params.column_norm_epsilon, mask)
        R = S + gamma1 * G + 2.0 * gamma2 * W_prev + params.proximal * W
        Wn = _shifted_threshold(R, a, mu, lam, mask)

    lam_next = lam + mu * (Wn.sum(axis=1) - 1.0)
    return AlmState(W=Wn, mu=mu * params.rho, lam=lam_next, k=state.k + 1, D=np.diag(d))


def finalize_weights(W, capabilities):
    """Mask to capabilities, clamp to [0, 1] and renormalize every row to sum 1.

    Rows left without mass fall back to uniform weights over capabilities.
    """
    C = np.asarray(capabilities, dtype=float)
    Wf = np.clip(np.asarray(W, dtype=float) * C, 0.0, 1.0)
    s = Wf.sum(axis=1, keepdims=True)
    uniform = C / np.maximum(C.sum(axis=1, keepdims=True), 1.0)
    return np.where(s > 0, Wf / np.where(s > 0, s, 1.0), uniform)


@dataclass
class SolveResult:
    weights: np.ndarray
    n_iter: int
    converged: bool
    change: float
    mu_history: list
    raw: np.ndarray = field(repr=False, default=None)


def solve_weights(S, W_prev, capabilities, params=SolverParams(), gamma1=1.0, gamma2=0.5, callback=None):
    """Run the ALM iteration warm-started at ``W_prev`` and finalize.

    Stops when the Frobenius change between iterates drops below
    ``params.tol`` or after ``params.max_iter`` iterations; in the latter case
    a :class:`NoConvergence` warning is emitted if the last change exceeds
    ``100 * tol``. ``callback(state)`` is invoked after every iteration.
    """
    S = check_utility(S)
    C = check_capabilities(capabilities, S.shape)
    W_prev = check_weights(W_prev, S.shape)
    gamma1, gamma2 = check_gammas(gamma1, gamma2)
    validate_solver_params(params)
    if (C.sum(axis=1) == 0).any():
        raise ZeroCapabilityRow("every row must have at least one capability")

    mask = C if params.update == "linearized" else None
    state = init_alm_state(W_prev, params)
    mus = [state.mu]
    change = math.inf
    while state.k < params.max_iter:
        nxt = alm_step(state, S, W_prev, gamma1, gamma2, params, mask)
        change = float(np.linalg.norm(nxt.W - state.W))
        state = nxt
        mus.append(state.mu)
        if callback is not None:
            callback(state)
        if change < params.tol:
            break
    converged = change < params.tol
    if not converged and change > 100 * params.tol:
        warnings.warn(
            f"ALM stopped after {state.k} iterations with change {change:.3g}",
            NoConvergence,
            stacklevel=2,
        )
    return SolveResult(
        weights=finalize_weights(state.W, C),
        n_iter=state.k,
        converged=converged,
        change=change,
        mu_history=mus,
        raw=state.W,
    )


def simplex_grid(capabilities, resolution=0.02):
    """All points of the capability-restricted simplex on a lattice of step ``resolution``."""
    caps = np.asarray(capabilities).ravel()
    steps = int(round(1.0 / resolution))
    if steps <= 0 or not math.isclose(steps * resolution, 1.0, rel_tol=1e-9):
        raise ValueError(f"1/resolution must be a positive integer (got resolution={resolution})")
    idx = np.flatnonzero(caps)
    k = idx.size
    if k == 0:
        raise ZeroCapabilityRow("row has no capabilities")
    pts = []
    # stars and bars over k free coordinates
    for bars in itertools.combinations(range(steps + k - 1), k - 1):
        edges = (-1,) + bars + (steps + k - 1,)
        pts.append([edges[i + 1] - edges[i] - 1 for i in range(k)])
    out = np.zeros((len(pts), caps.size))
    out[:, idx] = np.asarray(pts, dtype=float) / steps
    return out


def _grid_size(k, steps):
    return math.comb(steps + k - 1, k - 1)


def oracle_solve(S, W_prev, capabilities, gamma1, gamma2, resolution=0.02, max_cells=10**8, chunk=2_000_000):
    """Exhaustive maximization of the objective over the joint product grid.

    Rows interact through the column norms, so every combination of row
    grid points is evaluated. Raises :class:`TooLarge` when the product grid
    exceeds ``max_cells``.
    """
    S = check_utility(S)
    C = check_capabilities(capabilities, S.shape)
    W_prev = check_weights(W_prev, S.shape)
    n, e = S.shape
    steps = int(round(1.0 / resolution))
    sizes = [_grid_size(int(c.sum()), steps) if c.sum() else 0 for c in C]
    if 0 in sizes:
        raise ZeroCapabilityRow("every row must have at least one capability")
    total = math.prod(sizes)
    if total > max_cells:
        raise TooLarge(f"product grid has {total} cells (budget {max_cells})")

    grids = [simplex_grid(C[i], resolution) for i in range(n)]
    row_val = [g @ S[i] - gamma2 * np.sum((g - W_prev[i]) ** 2, axis=1) for i, g in enumerate(grids)]

    # Accumulate all rows but the last; the last row is swept against chunks of the rest.
    lin = np.zeros(1)
    sq = np.zeros((1, e))
    for i in range(n - 1):
        g = grids[i]
        lin = (lin[:, None] + row_val[i][None, :]).ravel()
        sq = (sq[:, None, :] + (g * g)[None, :, :]).reshape(-1, e)

    last, last_val = grids[-1], row_val[-1]
    last_sq = last * last
    best, best_combo, best_last = -np.inf, 0, 0
    per = max(1, chunk // max(1, len(last)))
    for start in range(0, lin.size, per):
        stop = min(lin.size, start + per)
        vals = (
            lin[start:stop, None]
            + last_val[None, :]
            + gamma1 * np.sqrt(sq[start:stop, None, :] + last_sq[None, :, :]).sum(axis=2)
        )
        flat = int(np.argmax(vals))
        r, c = divmod(flat, vals.shape[1])
        if vals[r, c] > best:
            best, best_combo, best_last = vals[r, c], start + r, c

    W = np.zeros((n, e))
    W[-1] = last[best_last]
    rem = best_combo
    for i in range(n - 2, -1, -1):
        rem, j = divmod(rem, len(grids[i]))
        W[i] = grids[i][j]
    return W


class CapabilityWeighting(TransformerMixin, BaseEstimator):
    """Estimator front end for the weight solver.

    ``fit`` takes the utility matrix as ``X`` (robots x event types) and
    stores the balanced weights in ``weights_``. ``transform`` solves a new
    utility matrix using the fitted weights as the previous time step (the
    estimator is left unchanged), while ``partial_fit`` advances that state.

    Parameters
    ----------
    gamma1 : float, default=1.0
        Weight of the event-norm reward spreading attention over event types.
    gamma2 : float, default=0.5
        Weight of the temporal-consistency penalty.
    mu0, rho, tol, max_iter, column_norm_epsilon, proximal, update
        Solver settings, see :class:`hetcover.domain.SolverParams`.
    """

    def __init__(
        self,
        gamma1=1.0,
        gamma2=0.5,
        mu0=1.0,
        rho=1.5,
        tol=1e-7,
        max_iter=200,
        column_norm_epsilon=1e-9,
        proximal=0.1,
        update="linearized",
    ):
        self.gamma1 = gamma1
        self.gamma2 = gamma2
        self.mu0 = mu0
        self.rho = rho
        self.tol = tol
        self.max_iter = max_iter
        self.column_norm_epsilon = column_norm_epsilon
        self.proximal = proximal
        self.update = update

    def _params(self):
        return SolverParams(
            mu0=self.mu0,
            rho=self.rho,
            tol=self.tol,
            max_iter=self.max_iter,
            column_norm_epsilon=self.column_norm_epsilon,
            proximal=self.proximal,
            update=self.update,
        )

    def _solve(self, S, capabilities, W_prev):
        return solve_weights(S, W_prev, capabilities, self._params(), self.gamma1, self.gamma2)

    def _store(self, result, S, C):
        self.weights_ = result.weights
        self.capabilities_ = C
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.mu_history_ = result.mu_history
        self.n_features_in_ = S.shape[1]
        return self

    def fit(self, X, y=None, capabilities=None, previous_weights=None):
        S = check_utility(X)
        C = np.ones_like(S) if capabilities is None else check_capabilities(capabilities, S.shape)
        W_prev = init_weights(C) if previous_weights is None else previous_weights
        self._last_prev_ = np.asarray(W_prev, dtype=float)
        return self._store(self._solve(S, C, W_prev), S, C)

    def partial_fit(self, X, y=None, capabilities=None):
        if not hasattr(self, "weights_"):
            return self.fit(X, capabilities=capabilities)
        S = check_utility(X)
        C = self.capabilities_ if capabilities is None else check_capabilities(capabilities, S.shape)
        self._last_prev_ = self.weights_
        return self._store(self._solve(S, C, self.weights_), S, C)

    def transform(self, X):
        check_is_fitted(self, "weights_")
        S = check_utility(X)
        return self._solve(S, self.capabilities_, self.weights_).weights

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).weights_

    def score(self, X, y=None):
        """Objective value of the fitted weights on utilities ``X``."""
        check_is_fitted(self, "weights_")
        S = check_utility(X)
        return objective(self.weights_, S, self._last_prev_, self.gamma1, self.gamma2)
