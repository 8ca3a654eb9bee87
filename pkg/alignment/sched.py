# dav_lab/alignment/sched.py

"""
Cronogramas de ruído para as duas famílias de difusão.

Os arrays do cronograma contínuo têm tamanho T e são indexados por t-1; os
acessores aceitam t em 0..T e aplicam a convenção ᾱ_0 = 1.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DomainError

# Faixa linear padrão do DDPM para T=1000 passos
DDPM_BETA_RANGE = (1e-4, 0.02)
DDPM_REFERENCE_STEPS = 1000
MAX_BETA = 0.999


def default_beta_range(T):
    """Faixa (1e-4, 0.02) reescalada por 1000/T e limitada abaixo de 1."""
    scale = DDPM_REFERENCE_STEPS / T
    beta_min = min(DDPM_BETA_RANGE[0] * scale, MAX_BETA)
    beta_max = min(DDPM_BETA_RANGE[1] * scale, MAX_BETA)
    return beta_min, beta_max


# ==============================================================================
# 1. CRONOGRAMA CONTÍNUO (DDPM)
# ==============================================================================
@dataclass(frozen=True)
class ContinuousSchedule:
    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    sigma2: np.ndarray

    def _check_step(self, t, allow_zero=False):
        low = 0 if allow_zero else 1
        if not low <= t <= self.T:
            raise DomainError(f"Passo t={t} fora de [{low}, {self.T}].")

    def beta(self, t):
        self._check_step(t)
        return float(self.betas[t - 1])

    def alpha(self, t):
        self._check_step(t)
        return float(self.alphas[t - 1])

    def alpha_bar(self, t):
        self._check_step(t, allow_zero=True)
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])

    def sigma_sq(self, t):
        self._check_step(t)
        return float(self.sigma2[t - 1])


def make_continuous_schedule(T, beta_min=None, beta_max=None):
    """
    β linear entre beta_min e beta_max. Sem faixa explícita usa default_beta_range(T).
    σ_t² é a variância posterior do DDPM; em t=1 ela é nula e é substituída por σ_2²
    (ou por β_1 quando T=1).
    """
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ConfigError(f"T deve ser inteiro >= 1, recebido {T!r}.")
    if beta_min is None or beta_max is None:
        default_min, default_max = default_beta_range(T)
        beta_min = default_min if beta_min is None else beta_min
        beta_max = default_max if beta_max is None else beta_max
    if not (0.0 < beta_min <= beta_max < 1.0):
        raise ConfigError(f"Faixa de beta inválida: ({beta_min}, {beta_max}).")

    betas = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    alpha_bars_prev = np.concatenate([[1.0], alpha_bars[:-1]])
    sigma2 = betas * (1.0 - alpha_bars_prev) / (1.0 - alpha_bars)
    sigma2[0] = sigma2[1] if T >= 2 else betas[0]

    for array in (betas, alphas, alpha_bars, sigma2):
        array.setflags(write=False)
    return ContinuousSchedule(int(T), betas, alphas, alpha_bars, sigma2)


# ==============================================================================
# 2. CRONOGRAMA DISCRETO (MASCARAMENTO LINEAR)
# ==============================================================================
@dataclass(frozen=True)
class DiscreteSchedule:
    T: int
    alpha_bars: np.ndarray  # tamanho T+1, índice t

    def alpha_bar(self, t):
        if not 0 <= t <= self.T:
            raise DomainError(f"Passo t={t} fora de [0, {self.T}].")
        return float(self.alpha_bars[t])


def make_discrete_schedule(T):
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ConfigError(f"T discreto deve ser inteiro >= 2, recebido {T!r}.")
    alpha_bars = 1.0 - np.arange(T + 1, dtype=np.float64) / T
    alpha_bars[T] = 0.0
    alpha_bars.setflags(write=False)
    return DiscreteSchedule(int(T), alpha_bars)
