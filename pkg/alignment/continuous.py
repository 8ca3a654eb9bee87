# dav_lab/alignment/continuous.py

"""
Mundo contínuo: dados de mistura gaussiana com denoiser pré-treinado analítico e
uma política reversa ajustável p_θ(x_{t-1}|x_t) = N(μ_θ, σ_t² I).

μ_θ = média posterior do DDPM com x̂0 analítico + MLP residual(x_t, t/T).
A última camada do residual começa zerada, então θ⁰ reproduz exatamente o
modelo pré-treinado.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .exceptions import ConfigError, DomainError
from .numkit import (
    TOLERANCES, as_vec, check_finite, gaussian_logpdf, make_mlp, mlp_backward, mlp_forward,
)
from .trajectory import Trajectory


# ==============================================================================
# 1. MISTURA GAUSSIANA
# ==============================================================================
@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray   # (K,)
    means: np.ndarray     # (K, d)
    stds: np.ndarray      # (K,)

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        stds = np.asarray(self.stds, dtype=np.float64)
        if weights.ndim != 1 or means.shape[0] != weights.size or stds.shape != weights.shape:
            raise DomainError("Pesos, médias e desvios da mistura com tamanhos inconsistentes.")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > TOLERANCES.normalized_sum:
            raise DomainError(f"Pesos da mistura devem somar 1, somam {weights.sum()!r}.")
        if np.any(stds <= 0):
            raise DomainError("Desvios da mistura devem ser positivos.")
        check_finite(means, 'means')
        object.__setattr__(self, 'weights', weights)
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'stds', stds)

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_components(self):
        return self.weights.size

    def mean(self):
        return self.weights @ self.means

    def sample(self, n, rng):
        components = np.searchsorted(np.cumsum(self.weights), rng.random(n) * self.weights.sum(), side='right')
        components = np.minimum(components, self.n_components - 1)
        noise = rng.normal((n, self.dim))
        return self.means[components] + self.stds[components, None] * noise


def _posterior_terms(X, alpha_bar, mixture):
    """Responsabilidades ρ (n,K), médias condicionais m (n,K,d) e termos auxiliares."""
    root = np.sqrt(alpha_bar)
    s2 = mixture.stds ** 2
    v = alpha_bar * s2 + (1.0 - alpha_bar)                                   # (K,)
    diff = X[:, None, :] - root * mixture.means[None, :, :]                  # (n,K,d)
    d = mixture.dim
    log_dens = (np.log(mixture.weights)[None, :]
                - 0.5 * d * np.log(2.0 * np.pi * v)[None, :]
                - 0.5 * np.sum(diff * diff, axis=-1) / v[None, :])
    rho = np.exp(log_dens - logsumexp(log_dens, axis=1, keepdims=True))
    m = (root * s2[None, :, None] * X[:, None, :]
         + (1.0 - alpha_bar) * mixture.means[None, :, :]) / v[None, :, None]
    return rho, m, diff, v, root * s2 / v


def mixture_x0hat(X, alpha_bar, mixture, with_jacobian=False):
    """
    E[x_0 | x_t] em lote para X (n, d). Com with_jacobian também devolve
    J (n, d, d) com J[i, a, b] = ∂x̂0_a / ∂x_b.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if alpha_bar >= 1.0:
        x0hat = X.copy()
        if not with_jacobian:
            return x0hat
        return x0hat, np.broadcast_to(np.eye(X.shape[1]), (X.shape[0], X.shape[1], X.shape[1])).copy()

    rho, m, diff, v, c = _posterior_terms(X, alpha_bar, mixture)
    x0hat = np.einsum('nk,nkd->nd', rho, m)
    if not with_jacobian:
        return check_finite(x0hat, 'x0hat')

    g = -diff / v[None, :, None]                                              # (n,K,d)
    g_bar = np.einsum('nk,nkd->nd', rho, g)
    scaled = rho[:, :, None] * (g - g_bar[:, None, :])                        # (n,K,d)
    jac = np.einsum('nka,nkb->nab', m, scaled)
    jac += (rho @ c)[:, None, None] * np.eye(mixture.dim)[None, :, :]
    return check_finite(x0hat, 'x0hat'), check_finite(jac, 'jacobian')


def analytic_x0hat(xt, t, mixture, schedule):
    """Média posterior de Tweedie sob a mistura; em t=0 devolve x_t."""
    x = as_vec(xt, mixture.dim, 'xt')
    if t == 0:
        return x.copy()
    return mixture_x0hat(x[None, :], schedule.alpha_bar(t), mixture)[0]


def forward_marginal_sample(x0, t, rng, schedule):
    """Amostra q(x_t | x_0) = N(√ᾱ_t x_0, (1-ᾱ_t) I)."""
    x = np.asarray(x0, dtype=np.float64)
    alpha_bar = schedule.alpha_bar(t)
    if alpha_bar == 1.0:
        return x.copy()
    return np.sqrt(alpha_bar) * x + np.sqrt(1.0 - alpha_bar) * rng.normal(x.shape)


def posterior_mean_coefficients(schedule, t):
    """(c0, c1) com μ(x_t, x̂0) = c0·x̂0 + c1·x_t."""
    alpha_bar, alpha_bar_prev = schedule.alpha_bar(t), schedule.alpha_bar(t - 1)
    denom = 1.0 - alpha_bar
    c0 = np.sqrt(alpha_bar_prev) * schedule.beta(t) / denom
    c1 = np.sqrt(schedule.alpha(t)) * (1.0 - alpha_bar_prev) / denom
    return c0, c1


# ==============================================================================
# 2. POLÍTICA CONTÍNUA
# ==============================================================================
class ContinuousPolicy:
    kind = 'continuous'

    def __init__(self, schedule, mixture, residual, frozen=False, version=0):
        if residual.n_in != mixture.dim + 1 or residual.n_out != mixture.dim:
            raise ConfigError(
                f"Residual deve mapear {mixture.dim + 1} -> {mixture.dim}, recebido {residual.widths}."
            )
        self.schedule = schedule
        self.mixture = mixture
        self.residual = residual
        self.frozen = frozen
        self.version = version

    @classmethod
    def pretrained(cls, schedule, mixture, hidden, rng, activation='tanh'):
        widths = (mixture.dim + 1, *hidden, mixture.dim)
        residual = make_mlp(widths, rng, activation=activation, final_scale=0.0)
        return cls(schedule, mixture, residual)

    @property
    def T(self):
        return self.schedule.T

    @property
    def dim(self):
        return self.mixture.dim

    def parameters(self):
        return self.residual.parameters()

    def zero_grads(self):
        return [np.zeros_like(p) for p in self.parameters()]

    def snapshot(self):
        return ContinuousPolicy(self.schedule, self.mixture, self.residual.copy(), self.frozen, self.version)

    # --- média e densidade -----------------------------------------------------
    def _inputs(self, X, t):
        return np.hstack([X, np.full((X.shape[0], 1), t / self.T)])

    def residual_batch(self, X, t):
        if self.frozen:
            return np.zeros_like(X)
        return mlp_forward(self.residual, self._inputs(X, t))

    def means_batch(self, X, t):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        c0, c1 = posterior_mean_coefficients(self.schedule, t)
        x0hat = mixture_x0hat(X, self.schedule.alpha_bar(t), self.mixture)
        return c0 * x0hat + c1 * X + self.residual_batch(X, t)

    def policy_mean(self, xt, t):
        x = as_vec(xt, self.dim, 'xt')
        return self.means_batch(x[None, :], t)[0]

    def sigma_sq(self, t):
        sigma2 = self.schedule.sigma_sq(t)
        if sigma2 <= 0:
            raise ConfigError(f"σ_t² não positivo em t={t}.")
        return sigma2

    def step_logprob(self, xt, xprev, t):
        mean = self.policy_mean(xt, t)
        return float(gaussian_logpdf(as_vec(xprev, self.dim, 'xprev'), mean, self.sigma_sq(t)))

    def logprob_batch(self, Xt, Xprev, t):
        return gaussian_logpdf(Xprev, self.means_batch(Xt, t), self.sigma_sq(t))

    # --- x̂0 e gradiente de guidance --------------------------------------------
    def x0hat_batch(self, X, t):
        """x̂0 implícito na política: analítico + residual/c0 (o residual some em θ⁰)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if t == 0:
            return X.copy()
        x0hat = mixture_x0hat(X, self.schedule.alpha_bar(t), self.mixture)
        if self.frozen:
            return x0hat
        c0, _ = posterior_mean_coefficients(self.schedule, t)
        return x0hat + self.residual_batch(X, t) / c0

    def x0hat(self, x, t):
        return self.x0hat_batch(as_vec(x, self.dim, 'x')[None, :], t)[0]

    def guidance_gradient(self, xt, t, reward, jacobian='exact'):
        """∇_{x_t} r(x̂0(x_t)). Com jacobian='stop_gradient' devolve ∇r(x̂0)."""
        x = as_vec(xt, self.dim, 'xt')
        x0hat = self.x0hat(x, t)
        reward_grad = reward.grad(x0hat)
        if jacobian == 'stop_gradient' or t == 0:
            return reward_grad
        _, jac = mixture_x0hat(x[None, :], self.schedule.alpha_bar(t), self.mixture, with_jacobian=True)
        grad = jac[0].T @ reward_grad
        if not self.frozen:
            c0, _ = posterior_mean_coefficients(self.schedule, t)
            _, input_grad = mlp_backward(self.residual, self._inputs(x[None, :], t), (reward_grad / c0)[None, :])
            grad = grad + input_grad[0, :self.dim]
        return check_finite(grad, 'guidance_gradient')

    # --- gradientes para o M-step ----------------------------------------------
    def accumulate_logprob_grads(self, grads, Xt, Xprev, t, coef):
        """Soma Σ_b coef_b ∇_θ log p_θ(x_prev_b | x_t_b) em grads; devolve os log p."""
        sigma2 = self.sigma_sq(t)
        means = self.means_batch(Xt, t)
        logps = gaussian_logpdf(Xprev, means, sigma2)
        if not self.frozen:
            upstream = coef[:, None] * (Xprev - means) / sigma2
            param_grads, _ = mlp_backward(self.residual, self._inputs(Xt, t), upstream)
            for acc, g in zip(grads, param_grads):
                acc += g
        return logps

    def kl_batch(self, anchor, Xt, t):
        delta = self.residual_batch(Xt, t) - anchor.residual_batch(Xt, t)
        return np.sum(delta * delta, axis=1) / (2.0 * self.sigma_sq(t)), delta

    def accumulate_kl_grads(self, grads, anchor, Xt, t, coef):
        """KL(p_θ ‖ p_θ⁰) com variâncias iguais: ‖Δμ‖² / (2σ_t²)."""
        kls, delta = self.kl_batch(anchor, Xt, t)
        if not self.frozen:
            upstream = coef[:, None] * delta / self.sigma_sq(t)
            param_grads, _ = mlp_backward(self.residual, self._inputs(Xt, t), upstream)
            for acc, g in zip(grads, param_grads):
                acc += g
        return kls

    # --- amostragem -------------------------------------------------------------
    def initial_state(self, rng):
        return rng.normal(self.dim)

    def rollout(self, rng, n):
        """n trajetórias; a trajetória i usa o fluxo rng.child(i)."""
        if n < 1:
            raise DomainError("rollout exige n >= 1.")
        T, d = self.T, self.dim
        noise = np.stack([rng.child(i).normal((T + 1, d)) for i in range(n)])
        X = noise[:, 0, :]
        states = [X]
        logps = np.zeros((n, T))
        for t in range(T, 0, -1):
            means = self.means_batch(X, t)
            sigma2 = self.sigma_sq(t)
            X = means + np.sqrt(sigma2) * noise[:, T - t + 1, :]
            logps[:, T - t] = gaussian_logpdf(X, means, sigma2)
            states.append(X)
        return [
            Trajectory(
                states=[s[i].copy() for s in states],
                version=self.version,
                prior_logprobs=logps[i].copy(),
                proposal_logprobs=logps[i].copy(),
                log_weights=np.zeros(T),
                log_mean_weights=np.zeros(T),
            )
            for i in range(n)
        ]


def policy_mean(policy, xt, t):
    return policy.policy_mean(xt, t)


def policy_logprob(policy, xt, xprev, t):
    return policy.step_logprob(xt, xprev, t)


def rollout(policy, rng, n):
    return policy.rollout(rng, n)
