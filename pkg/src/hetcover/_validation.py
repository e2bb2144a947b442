"""Input checks shared by the solver, strategies and estimator front end."""

import numpy as np
from sklearn.utils import check_array


def check_utility(S):
    return check_array(S, dtype=np.float64, ensure_2d=True, ensure_min_samples=1, ensure_all_finite=True)


def check_capabilities(capabilities, shape):
    C = check_array(capabilities, dtype=None, ensure_2d=True, ensure_all_finite=True)
    if C.shape != tuple(shape):
        raise ValueError(f"capabilities have shape {C.shape}, expected {tuple(shape)}")
    if not np.isin(C, (0, 1)).all():
        raise ValueError("capabilities must contain only 0 and 1")
    return C.astype(np.float64)


def check_weights(W, shape, name="W_prev"):
    W = check_array(W, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if W.shape != tuple(shape):
        raise ValueError(f"{name} has shape {W.shape}, expected {tuple(shape)}")
    return W


def check_gammas(gamma1, gamma2):
    if not (gamma1 >= 0 and gamma2 >= 0):
        raise ValueError(f"gamma1 and gamma2 must be nonnegative (got {gamma1}, {gamma2})")
    return float(gamma1), float(gamma2)
