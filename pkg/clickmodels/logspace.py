"""
Numerically stable log-space primitives.

Every probability in the toolkit is carried as a natural-log value in
(-inf, 0]. The functions here accept Python scalars or numpy arrays and work
elementwise; scalar input gives a Python float back.
"""
import math
from typing import Union

import numpy as np

from .errors import UsageError

ArrayLike = Union[float, np.ndarray]

LOG2 = math.log(2.0)


def _as_array(values, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if np.isnan(array).any():
        raise UsageError(f"{name}: NaN input")
    return array


def _unwrap(array: np.ndarray) -> ArrayLike:
    return float(array) if np.ndim(array) == 0 else array


def log_sum_exp(values, axis: int = None) -> ArrayLike:
    """
    Compute log(sum(exp(values))) with a single max shift.

    Args:
        values: Sequence or array of log values, may contain -inf
        axis: Axis to reduce; None reduces over all elements

    Returns:
        float or np.ndarray: The reduced log value

    Raises:
        UsageError: If the input is empty or contains NaN
    """
    array = _as_array(values, "log_sum_exp")
    if array.size == 0:
        raise UsageError("log_sum_exp: empty input")
    if axis is None:
        array = array.ravel()
        axis = 0

    a_max = np.max(array, axis=axis, keepdims=True)
    # all -inf along the axis: shift by 0 so the result is log(0) = -inf
    shift = np.where(np.isfinite(a_max), a_max, 0.0)
    with np.errstate(divide="ignore"):
        total = np.log(np.sum(np.exp(array - shift), axis=axis))
    return _unwrap(total + np.squeeze(shift, axis=axis))


def log1mexp(a) -> ArrayLike:
    """
    Compute log(1 - exp(a)) for a <= 0.

    Switches between log(-expm1(a)) above -ln 2 and log1p(-exp(a)) below.

    Args:
        a: Log-probability (scalar or array), must be <= 0

    Returns:
        float or np.ndarray: log of the complement probability; -inf at a = 0

    Raises:
        UsageError: If any input is positive or NaN
    """
    array = _as_array(a, "log1mexp")
    if (array > 0).any():
        raise UsageError("log1mexp: input must be <= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            array > -LOG2,
            np.log(-np.expm1(array)),
            np.log1p(-np.exp(array)),
        )
    return _unwrap(out)


def log_sigmoid(x) -> ArrayLike:
    """Return log(sigmoid(x)) = -log_sum_exp([0, -x])."""
    array = _as_array(x, "log_sigmoid")
    return _unwrap(-np.logaddexp(0.0, -array))


def log1m_sigmoid(x) -> ArrayLike:
    """Return log(1 - sigmoid(x)) = -log_sum_exp([0, x])."""
    array = _as_array(x, "log1m_sigmoid")
    return _unwrap(-np.logaddexp(0.0, array))


def logit(p) -> ArrayLike:
    """Inverse sigmoid; maps a probability in (0, 1) to a real logit."""
    array = _as_array(p, "logit")
    if ((array <= 0) | (array >= 1)).any():
        raise UsageError("logit: probability must lie in (0, 1)")
    return _unwrap(np.log(array) - np.log1p(-array))
