"""Latent-noise distributions for cumulative-link ordinal models.

A link is the distribution G of the latent noise term: the model puts
a latent z = x @ beta + eps with eps ~ G, and the observed category is
determined by which cutpoint interval z falls in.  Each link exposes
four vectorized callables:

    cdf(t)       G(t)
    pdf(t)       g(t) = G'(t)
    sf(t)        1 - G(t), computed without cancellation in the tail
    quantile(q)  G^{-1}(q) for q in (0, 1)

All five families are standardized (no free location or scale); the
model is identified by fixing the latent scale to 1 and omitting an
intercept, so links carry no parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

__all__ = ["Link", "LINKS", "get_link"]

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class Link:
    name: str
    cdf: Callable
    pdf: Callable
    sf: Callable
    quantile: Callable


def _check_q(q):
    q = np.asarray(q, dtype=float)
    if not np.all((q > 0.0) & (q < 1.0)):
        raise ValueError("quantile argument must lie strictly in (0, 1)")
    return q


def _probit_quantile(q):
    return special.ndtri(_check_q(q))


def _logit_quantile(q):
    return special.logit(_check_q(q))


def _probit_pdf(t):
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * t * t) / _SQRT_2PI


def _probit_sf(t):
    # ndtr is relatively accurate in its lower tail; reflecting keeps
    # the survival function accurate in the upper tail.
    return special.ndtr(-np.asarray(t, dtype=float))


def _logit_sf(t):
    return special.expit(-np.asarray(t, dtype=float))


def _logit_pdf(t):
    t = np.asarray(t, dtype=float)
    # expit(t) * expit(-t) stays finite for any t, unlike the
    # exp(t) / (1 + exp(t))^2 form.
    return special.expit(t) * special.expit(-t)


def _loglog_cdf(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(-np.exp(-t))


def _loglog_pdf(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(-t - np.exp(-t))
    # -t - exp(-t) is -inf at both tails; exp of it is 0 either way.
    return np.where(np.isnan(out), 0.0, out)


def _loglog_sf(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return -np.expm1(-np.exp(-t))


def _loglog_quantile(q):
    return -np.log(-np.log(_check_q(q)))


def _cloglog_cdf(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return -np.expm1(-np.exp(t))


def _cloglog_pdf(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(t - np.exp(t))
    return np.where(np.isnan(out), 0.0, out)


def _cloglog_sf(t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):
        return np.exp(-np.exp(t))


def _cloglog_quantile(q):
    return np.log(-np.log1p(-_check_q(q)))


def _cauchit_cdf(t):
    t = np.asarray(t, dtype=float)
    # arctan(t) + arctan(1/t) = -pi/2 for t < 0, so the reflected form
    # arctan(-1/t)/pi equals 0.5 + arctan(t)/pi without the cancellation
    # the direct form suffers in the lower tail.
    safe = np.where(t < -1.0, t, -1.0)
    tail = np.arctan(-1.0 / safe) / np.pi
    return np.where(t < -1.0, tail, 0.5 + np.arctan(t) / np.pi)


def _cauchit_pdf(t):
    t = np.asarray(t, dtype=float)
    return 1.0 / (np.pi * (1.0 + t * t))


def _cauchit_sf(t):
    # Symmetry of the Cauchy density.
    return _cauchit_cdf(-np.asarray(t, dtype=float))


def _cauchit_quantile(q):
    return np.tan(np.pi * (_check_q(q) - 0.5))


LINKS = {
    "probit": Link("probit", special.ndtr, _probit_pdf, _probit_sf,
                   _probit_quantile),
    "logit": Link("logit", special.expit, _logit_pdf, _logit_sf,
                  _logit_quantile),
    "loglog": Link("loglog", _loglog_cdf, _loglog_pdf, _loglog_sf,
                   _loglog_quantile),
    "cloglog": Link("cloglog", _cloglog_cdf, _cloglog_pdf, _cloglog_sf,
                    _cloglog_quantile),
    "cauchit": Link("cauchit", _cauchit_cdf, _cauchit_pdf, _cauchit_sf,
                    _cauchit_quantile),
}


def get_link(name: str) -> Link:
    """Look up a link family by name.

    Raises ValueError naming the valid families if `name` is unknown.
    """
    try:
        return LINKS[name]
    except KeyError:
        valid = ", ".join(sorted(LINKS))
        raise ValueError(
            f"unknown link {name!r}; valid links are: {valid}"
        ) from None
