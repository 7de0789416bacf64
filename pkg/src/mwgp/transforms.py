"""Softplus positivity transform and its inverse/derivative."""
import numpy as np
from scipy.special import expit


def softplus(x):
    return np.logaddexp(0.0, x)


def inv_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    # log(expm1(y)) loses precision for large y; y + log(1 - exp(-y)) does not
    return y + np.log(-np.expm1(-y))


def softplus_grad(x):
    return expit(x)
