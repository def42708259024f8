"""Closed-form primitives for the categorical and independent-Poisson families.

Natural and mean parameters are plain float arrays. The categorical family
over outcomes ``0..m`` is parameterised by ``m`` values; outcome 0 carries the
implicit parameter 0 and the implicit probability ``1 - sum(eta)``.

Every function acts on the last axis, so stacks of parameter vectors can be
passed in one call.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

from .errors import InvalidParameterError, OutOfDomainError

CATEGORICAL = "categorical"
POISSON = "poisson"
FAMILIES = (CATEGORICAL, POISSON)


def _finite(theta, name="theta"):
    theta = np.asarray(theta, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    return theta


def _check_family(family):
    if family not in FAMILIES:
        raise InvalidParameterError(f"unknown family {family!r}; expected one of {FAMILIES}")


def categorical_log_partition(theta):
    """``log(1 + sum_j exp(theta_j))`` with a max-shift for overflow safety."""
    theta = _finite(theta)
    shift = np.maximum(np.max(theta, axis=-1, initial=0.0), 0.0)
    total = np.exp(-shift) + np.sum(np.exp(theta - shift[..., None]), axis=-1)
    return shift + np.log(total)


def poisson_log_partition(theta):
    """Sum of the rates ``exp(theta_k)``."""
    theta = _finite(theta)
    return np.sum(np.exp(theta), axis=-1)


def categorical_to_mean(theta):
    """Probabilities of outcomes ``1..m`` (stabilised softmax with a zero logit)."""
    theta = _finite(theta)
    shift = np.maximum(np.max(theta, axis=-1, initial=0.0), 0.0)[..., None]
    e = np.exp(theta - shift)
    return e / (np.exp(-shift) + np.sum(e, axis=-1, keepdims=True))


def categorical_full(eta):
    """Prepend the implicit outcome-0 probability to categorical mean parameters."""
    eta = np.asarray(eta, dtype=float)
    first = 1.0 - np.sum(eta, axis=-1, keepdims=True)
    return np.concatenate([first, eta], axis=-1)


def to_mean(theta, family):
    """Map natural parameters to mean parameters."""
    _check_family(family)
    if family == CATEGORICAL:
        return categorical_to_mean(theta)
    return np.exp(_finite(theta))


def to_natural(eta, family):
    """Map mean parameters to natural parameters in closed form.

    Raises
    ------
    OutOfDomainError
        If ``eta`` lies on the boundary (a zero rate or probability, or
        categorical probabilities summing to one or more).
    """
    _check_family(family)
    eta = _finite(eta, "eta")
    if family == POISSON:
        if np.any(eta <= 0):
            raise OutOfDomainError("Poisson mean parameters must be strictly positive")
        return np.log(eta)
    rest = 1.0 - np.sum(eta, axis=-1, keepdims=True)
    if np.any(eta <= 0) or np.any(eta >= 1) or np.any(rest <= 0):
        raise OutOfDomainError(
            "categorical mean parameters must lie in (0, 1) with sum below 1"
        )
    return np.log(eta) - np.log(rest)


def log_factorial(n):
    return gammaln(np.asarray(n, dtype=float) + 1.0)


def poisson_log_density(n, theta):
    """Log-density of count vector(s) ``n`` under independent Poissons ``theta``."""
    theta = _finite(theta)
    n = np.asarray(n)
    if n.shape[-1] != theta.shape[-1]:
        raise InvalidParameterError(
            f"count vector length {n.shape[-1]} does not match {theta.shape[-1]} neurons"
        )
    return (
        np.sum(n * theta, axis=-1)
        - np.sum(log_factorial(n), axis=-1)
        - poisson_log_partition(theta)
    )


def categorical_log_density(j, theta):
    theta = _finite(theta)
    m = theta.shape[-1]
    if not 0 <= j <= m:
        raise IndexError(f"category {j} outside 0..{m}")
    logit = 0.0 if j == 0 else theta[..., j - 1]
    return logit - categorical_log_partition(theta)


def sample_poisson(rates, rng, size=None):
    """Draw independent Poisson count vectors with the given mean rates."""
    rates = _finite(rates, "rates")
    if np.any(rates < 0):
        raise OutOfDomainError("Poisson rates must be nonnegative")
    shape = rates.shape if size is None else tuple(np.atleast_1d(size)) + rates.shape
    return rng.poisson(np.broadcast_to(rates, shape))


def sample_categorical(weights, rng, size=None):
    """Draw outcomes in ``0..m`` given the mean parameters of outcomes ``1..m``."""
    probs = categorical_full(_finite(weights, "weights"))
    if np.any(probs < 0):
        raise OutOfDomainError("categorical weights must be nonnegative and sum to at most 1")
    return rng.choice(probs.shape[-1], size=size, p=probs / probs.sum())
