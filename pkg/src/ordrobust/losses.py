"""Per-unit divergence losses, weighted objectives, prior, and gradients.

Four posterior kernels share one interface.  Writing f_i for the
probability of the observed category of unit i and s for a weight
vector on the simplex:

    loglik           -n * sum_i s_i log f_i                  - log p(theta)
    dp               -n * sum_i s_i r_DP(y_i|x_i)            - log p(theta)
    gamma_synthetic  -(n/g) log{ g * sum_i s_i r_g(y_i|x_i) }- log p(theta)
    gamma_general    -n * sum_i s_i r_g(y_i|x_i)             - log p(theta)

with the per-unit losses

    r_DP = (1/a) f^a - (1/(1+a)) sum_m P_m^{1+a}
    r_g  = (1/g) (f / ||f||_{g+1})^g,   ||f||_{g+1} = (sum_m P_m^{1+g})^{1/(1+g)}

Both robust losses tend to the log-density as the tuning constant
goes to 0, and stay bounded as f -> 0 (r_DP -> -1/(1+a), r_g -> 0),
which is what makes the resulting posteriors ignore gross outliers.
Every form is normalized so that equal weights 1/n reproduce the
unweighted negative log posterior kernel exactly: the additive kinds
carry an explicit factor n, and the synthetic kind absorbs it as the
(g/n) inside its log.  The Dirichlet weights used for posterior
sampling live on the simplex (mean 1/n), so the data term scales
like n and the prior washes out at the usual Bayesian rate.

Gradients are computed analytically in the unconstrained coordinates
(beta, delta_1, log gaps).  The prior is a product of independent
normals on those same coordinates, so every objective is smooth and
unconstrained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .links import Link
from .model import (
    ContractError,
    Dataset,
    Theta,
    _probs_from_args,
    category_probs,
    theta_to_unconstrained,
)

__all__ = [
    "LOSS_KINDS",
    "LossSpec",
    "Prior",
    "DegenerateObjectiveError",
    "unit_dp_loss",
    "unit_gamma_loss",
    "log_prior",
    "weighted_objective",
    "weighted_objective_gradient",
    "loo_log_ratio",
    "ObjectiveCore",
]

LOSS_KINDS = ("loglik", "dp", "gamma_synthetic", "gamma_general")

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class DegenerateObjectiveError(ArithmeticError):
    """Every category probability vanished; the objective is undefined."""


@dataclass(frozen=True)
class LossSpec:
    """Which posterior kernel to use and its tuning constant.

    tuning is alpha for dp and gamma for the two gamma kinds; it is
    ignored for loglik.  learning_rate multiplies the loss term only,
    never the prior, and stays at 1 unless deliberately overridden.
    """

    kind: str
    tuning: float = 0.0
    learning_rate: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ContractError(
                f"unknown loss kind {self.kind!r}; valid kinds: "
                + ", ".join(LOSS_KINDS)
            )
        if self.kind != "loglik" and not self.tuning > 0:
            raise ContractError(
                f"loss kind {self.kind!r} needs tuning > 0, got {self.tuning}"
            )
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")


@dataclass(frozen=True)
class Prior:
    """Independent normal prior on the unconstrained coordinates."""

    sd_beta: float = 10.0
    sd_cut: float = 10.0

    def __post_init__(self):
        if not (self.sd_beta > 0 and self.sd_cut > 0):
            raise ContractError("prior standard deviations must be positive")


def unit_dp_loss(theta: Theta, x, y: int, alpha: float, link: Link) -> float:
    """Density-power loss of one unit; in [-1/(1+alpha), 1/alpha]."""
    if not alpha > 0:
        raise ContractError("alpha must be positive")
    P = category_probs(theta, x, link)
    f = _observed_prob(P, y)
    return float(f ** alpha / alpha - (P ** (1.0 + alpha)).sum() / (1.0 + alpha))


def unit_gamma_loss(theta: Theta, x, y: int, gamma: float, link: Link) -> float:
    """Gamma-divergence loss of one unit; in [0, 1/gamma]."""
    if not gamma > 0:
        raise ContractError("gamma must be positive")
    P = category_probs(theta, x, link)
    f = _observed_prob(P, y)
    S = (P ** (1.0 + gamma)).sum()
    return float(f ** gamma * S ** (-gamma / (1.0 + gamma)) / gamma)


def _observed_prob(P: np.ndarray, y: int) -> float:
    if not 1 <= y <= P.size:
        raise ContractError(f"category {y} outside 1..{P.size}")
    return float(P[y - 1])


def log_prior(theta: Theta, prior: Prior) -> float:
    """Log prior density of theta, placed on its unconstrained coordinates."""
    u = theta_to_unconstrained(theta)
    val, _ = _log_prior_parts(u, theta.beta.size, prior)
    return val


def _log_prior_parts(u: np.ndarray, n_beta: int, prior: Prior):
    ub = u[:n_beta]
    uc = u[n_beta:]
    val = (
        -0.5 * float(ub @ ub) / prior.sd_beta**2
        - n_beta * (np.log(prior.sd_beta) + _LOG_SQRT_2PI)
        - 0.5 * float(uc @ uc) / prior.sd_cut**2
        - uc.size * (np.log(prior.sd_cut) + _LOG_SQRT_2PI)
    )
    grad = np.concatenate([-ub / prior.sd_beta**2, -uc / prior.sd_cut**2])
    return val, grad


def _check_weights(weights: np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ContractError(f"weights must have shape ({n},), got {w.shape}")
    if np.any(w < 0):
        raise ContractError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ContractError(f"weights must sum to 1, got {w.sum()!r}")
    return w


class ObjectiveCore:
    """Reusable workspace evaluating one weighted objective on one dataset.

    Holds the design matrix and index plumbing so that repeated calls
    inside an optimizer allocate only the per-call temporaries.  All
    methods are pure given their arguments; instances hold no mutable
    state and can be shared across threads.
    """

    def __init__(self, spec: LossSpec, data: Dataset, prior: Prior, link: Link):
        self.spec = spec
        self.data = data
        self.prior = prior
        self.link = link
        self.n = data.n
        self.p = data.p
        self.M = data.n_categories
        self.n_params = self.p + self.M - 1
        self._rows = np.arange(self.n)
        self._c = data.y - 1

    def _split(self, u: np.ndarray):
        """Decode u without the strict-ordering check.

        exp of a very negative log gap underflows to 0, giving tied
        cutpoints and zero-width categories; the probability clamp
        makes the objective finite there, so optimizers may pass
        through such points freely.
        """
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_params,):
            raise ContractError(
                f"parameter vector must have shape ({self.n_params},), "
                f"got {u.shape}"
            )
        beta = u[:self.p]
        # Overflow to inf is fine here: an infinite gap puts the later
        # cutpoints at +inf, and the probability clamp keeps the value
        # finite, mirroring the underflow-to-zero case.
        with np.errstate(over="ignore"):
            gaps = np.exp(u[self.p + 1:])
        delta = u[self.p] + np.concatenate([[0.0], np.cumsum(gaps)])
        eta = self.data.X @ beta
        A = delta[None, :] - eta[:, None]
        return u, gaps, A

    def _unit_losses(self, P: np.ndarray, f: np.ndarray):
        """Per-unit loss vector for the robust kinds; None for loglik."""
        kind, t = self.spec.kind, self.spec.tuning
        if kind == "loglik":
            return None
        if kind == "dp":
            S = (P ** (1.0 + t)).sum(axis=1)
            return f ** t / t - S / (1.0 + t)
        S = (P ** (1.0 + t)).sum(axis=1)
        return f ** t * S ** (-t / (1.0 + t)) / t

    def _loss_term(self, r, f: np.ndarray, w: np.ndarray) -> float:
        kind = self.spec.kind
        if kind == "loglik":
            return -self.n * float(w @ np.log(f))
        if kind == "gamma_synthetic":
            g = self.spec.tuning
            T = float(w @ r)
            if not np.isfinite(T) or T <= 0.0:
                raise DegenerateObjectiveError(
                    "weighted gamma loss sum is not positive; all category "
                    "probabilities vanished"
                )
            return -(self.n / g) * np.log(g * T)
        return -self.n * float(w @ r)

    def value(self, u, weights, validate_weights: bool = True) -> float:
        w = (
            _check_weights(weights, self.n)
            if validate_weights
            else np.asarray(weights, dtype=float)
        )
        u, _, A = self._split(u)
        P = _probs_from_args(A, self.link, clamp=True)
        f = P[self._rows, self._c]
        r = self._unit_losses(P, f)
        lp, _ = _log_prior_parts(u, self.p, self.prior)
        return self.spec.learning_rate * self._loss_term(r, f, w) - lp

    def value_and_grad(self, u, weights, validate_weights: bool = True):
        w = (
            _check_weights(weights, self.n)
            if validate_weights
            else np.asarray(weights, dtype=float)
        )
        u, gaps, A = self._split(u)
        kind, t = self.spec.kind, self.spec.tuning
        K = self.M - 1
        P = _probs_from_args(A, self.link, clamp=True)
        f = P[self._rows, self._c]
        gA = self.link.pdf(A)

        # Density of the latent noise at the two cutpoints bounding the
        # observed category; zero at the unbounded ends.
        gpad = np.zeros((self.n, self.M + 1))
        gpad[:, 1:self.M] = gA
        ghi = gpad[self._rows, self._c + 1]
        glo = gpad[self._rows, self._c]
        # d f_i / d eta_i; d f_i / d delta_j is +ghi at j = c_i and
        # -glo at j = c_i - 1, accumulated by _scatter_f below.
        deta_f = glo - ghi

        r = self._unit_losses(P, f)
        lp, lp_grad = _log_prior_parts(u, self.p, self.prior)
        value = self.spec.learning_rate * self._loss_term(r, f, w) - lp

        if kind == "loglik":
            coef = -self.n * w / f
            gbeta = self.data.X.T @ (coef * deta_f)
            gdelta = self._scatter_f(coef, ghi, glo)
        else:
            # V[i, k] = g(A_ik) (W_ik - W_{i,k+1}) with W = P^t gives both
            # sum_m W_m dP_m/d delta_k = V[:, k] and
            # sum_m W_m dP_m/d eta = -V.sum(axis=1).
            W = P ** t
            V = gA * (W[:, :K] - W[:, 1:])
            Vsum = V.sum(axis=1)
            if kind == "dp":
                ft1 = f ** (t - 1.0)
                # d r_i = f^{t-1} df - sum_m P^t dP_m
                ceta = w * (ft1 * deta_f + Vsum)
                gbeta = -self.n * (self.data.X.T @ ceta)
                gdelta = -self.n * (
                    self._scatter_f(w * ft1, ghi, glo) - V.T @ w
                )
            else:
                S = (P ** (1.0 + t)).sum(axis=1)
                Bfac = S ** (-t / (1.0 + t))
                ft1 = f ** (t - 1.0)
                ratio = f ** t / S
                # d r_i = B [f^{t-1} df - (f^t/S) sum_m P^t dP_m]
                ceta = w * Bfac * (ft1 * deta_f + ratio * Vsum)
                gbeta = -(self.data.X.T @ ceta)
                gdelta = -(
                    self._scatter_f(w * Bfac * ft1, ghi, glo)
                    - V.T @ (w * Bfac * ratio)
                )
                # The weighted sum T = sum_i w_i r_i enters the synthetic
                # kind through -(n/t) log(t T), so its gradient is the
                # additive one rescaled by n/(t T); the general kind is
                # plain -n T.
                if kind == "gamma_synthetic":
                    T = float(w @ r)
                    scale = self.n / (t * T)
                else:
                    scale = float(self.n)
                gbeta = scale * gbeta
                gdelta = scale * gdelta

        grad = np.empty(self.n_params)
        grad[:self.p] = gbeta
        # Chain through delta_1 = u[p], delta_{k+1} = delta_k + exp(u[p+k]):
        # each gap coordinate collects the gradient of every later cutpoint.
        tail = np.cumsum(gdelta[::-1])[::-1]
        grad[self.p] = tail[0]
        if K > 1:
            grad[self.p + 1:] = gaps * tail[1:]
        grad *= self.spec.learning_rate
        grad -= lp_grad
        return value, grad

    def _scatter_f(self, coef, ghi, glo):
        """sum_i coef_i * d f_i / d delta, accumulated over units."""
        K = self.M - 1
        up = np.bincount(self._c, weights=coef * ghi, minlength=self.M)[:K]
        down = np.bincount(self._c, weights=coef * glo, minlength=self.M)[1:]
        return up - down


def weighted_objective(
    spec: LossSpec, u, data: Dataset, weights, prior: Prior, link: Link
) -> float:
    """Value of the Dirichlet-weighted objective at unconstrained u."""
    return ObjectiveCore(spec, data, prior, link).value(u, weights)


def weighted_objective_gradient(
    spec: LossSpec, u, data: Dataset, weights, prior: Prior, link: Link
) -> np.ndarray:
    """Analytic gradient of weighted_objective in unconstrained coordinates."""
    core = ObjectiveCore(spec, data, prior, link)
    return core.value_and_grad(u, weights)[1]


def loo_log_ratio(
    spec: LossSpec, theta: Theta, data: Dataset, i: int, prior: Prior, link: Link
) -> float:
    """Log ratio of the leave-i-out posterior kernel to the full kernel.

    The prior factor cancels in the ratio (the argument is kept so all
    kernel operations share a signature).  For the additive kinds the
    ratio is -r_i(theta); for gamma_synthetic it is the difference of
    the two non-additive kernels, keeping the leading factor n.
    """
    n = data.n
    if not 0 <= i < n:
        raise ContractError(f"unit index {i} outside 0..{n - 1}")
    kind, t = spec.kind, spec.tuning
    if kind == "loglik":
        P = category_probs(theta, data.X[i], link)
        return -float(np.log(P[data.y[i] - 1]))
    if kind == "dp":
        return -unit_dp_loss(theta, data.X[i], int(data.y[i]), t, link)
    if kind == "gamma_general":
        return -unit_gamma_loss(theta, data.X[i], int(data.y[i]), t, link)
    P = category_probs(theta, data.X, link)
    f = P[np.arange(n), data.y - 1]
    S = (P ** (1.0 + t)).sum(axis=1)
    r = f ** t * S ** (-t / (1.0 + t)) / t
    total = float(r.sum())
    rest = total - float(r[i])
    if rest <= 0.0 or total <= 0.0:
        raise DegenerateObjectiveError(
            "gamma loss sum is not positive after removing the unit"
        )
    return (n / t) * (np.log(rest) - np.log(total))
