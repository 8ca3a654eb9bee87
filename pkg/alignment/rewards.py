# dav_lab/alignment/rewards.py

"""
Registro de funções de recompensa R(x_0).

Cada recompensa expõe valor, flag de diferenciabilidade e gradiente analítico.
As recompensas discretas também têm uma versão relaxada (extensão multilinear)
definida sobre distribuições por posição (L, K+1), exata nos vértices one-hot.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DomainError, UnsupportedOperationError

REWARD_REGISTRY = {}


def register_reward(name, domain):
    def decorator(cls):
        cls.name = name
        cls.domain = domain
        REWARD_REGISTRY[name] = cls
        return cls
    return decorator


@dataclass
class RewardSpec:
    name: str
    domain: str
    differentiable: bool = True
    params: dict = field(default_factory=dict)


class Reward:
    """Base comum. black_box=True desliga o gradiente (caminho não diferenciável)."""
    name = None
    domain = None

    def __init__(self, black_box=False, **params):
        self.black_box = black_box
        self.params = params

    @property
    def differentiable(self):
        return not self.black_box

    @property
    def spec(self):
        return RewardSpec(self.name, self.domain, self.differentiable, dict(self.params))

    def grad(self, x0):
        if self.black_box:
            raise UnsupportedOperationError(f"Recompensa '{self.name}' marcada como caixa-preta não tem gradiente.")
        return self._grad(x0)

    def _grad(self, x0):
        raise NotImplementedError


# ==============================================================================
# 1. RECOMPENSAS CONTÍNUAS
# ==============================================================================
class ContinuousReward(Reward):
    domain = 'continuous'

    def _as_point(self, x0):
        x = np.asarray(x0, dtype=np.float64)
        if x.ndim not in (1, 2):
            raise DomainError(f"Recompensa contínua '{self.name}' recebeu entrada fora do domínio.")
        return x


@register_reward('linear', 'continuous')
class LinearReward(ContinuousReward):
    """r = cᵀx."""

    def __init__(self, coefficients, black_box=False):
        super().__init__(black_box, coefficients=list(coefficients))
        self.c = np.asarray(coefficients, dtype=np.float64)

    def value(self, x0):
        return self._as_point(x0) @ self.c

    def _grad(self, x0):
        return np.broadcast_to(self.c, np.shape(x0)).copy()


@register_reward('neg_sq_dist', 'continuous')
class NegSqDistReward(ContinuousReward):
    """r = -‖x - g‖²."""

    def __init__(self, target, black_box=False):
        super().__init__(black_box, target=list(target))
        self.g = np.asarray(target, dtype=np.float64)

    def value(self, x0):
        diff = self._as_point(x0) - self.g
        return -np.sum(diff * diff, axis=-1)

    def _grad(self, x0):
        return -2.0 * (self._as_point(x0) - self.g)


@register_reward('mode_preference', 'continuous')
class ModePreferenceReward(ContinuousReward):
    """r = Σ_k a_k exp(-‖x - μ_k‖² / 2τ²)."""

    def __init__(self, centers, amplitudes, tau=1.0, black_box=False):
        super().__init__(black_box, centers=[list(c) for c in centers], amplitudes=list(amplitudes), tau=tau)
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        self.amplitudes = np.asarray(amplitudes, dtype=np.float64)
        self.tau = float(tau)
        if self.centers.shape[0] != self.amplitudes.size or self.tau <= 0:
            raise ConfigError("mode_preference exige um amplitude por centro e tau > 0.")

    def _bumps(self, x):
        diff = x[..., None, :] - self.centers
        return self.amplitudes * np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * self.tau ** 2)), diff

    def value(self, x0):
        bumps, _ = self._bumps(self._as_point(x0))
        return bumps.sum(axis=-1)

    def _grad(self, x0):
        bumps, diff = self._bumps(self._as_point(x0))
        return -np.sum(bumps[..., None] * diff, axis=-2) / self.tau ** 2


# ==============================================================================
# 2. RECOMPENSAS DISCRETAS
# ==============================================================================
class DiscreteReward(Reward):
    domain = 'discrete'

    def __init__(self, K, black_box=False, **params):
        super().__init__(black_box, **params)
        self.K = K

    def _as_tokens(self, x0):
        tokens = np.asarray(x0)
        if not np.issubdtype(tokens.dtype, np.integer) or tokens.ndim not in (1, 2):
            raise DomainError(f"Recompensa discreta '{self.name}' recebeu entrada fora do domínio.")
        return tokens

    def _as_simplex(self, probs):
        P = np.asarray(probs, dtype=np.float64)
        if P.shape[-1] == self.K:
            pad = np.zeros(P.shape[:-1] + (1,))
            P = np.concatenate([P, pad], axis=-1)
        if P.shape[-1] != self.K + 1:
            raise DomainError(f"Entrada relaxada deve ter {self.K + 1} colunas, recebido {P.shape[-1]}.")
        return P

    def value(self, x0):
        tokens = self._as_tokens(x0)
        return self.relaxed_value(np.eye(self.K + 1)[tokens])

    def _grad(self, x0):
        return self.relaxed_grad(x0)


@register_reward('motif_count', 'discrete')
class MotifCountReward(DiscreteReward):
    """Número de ocorrências do motivo por janela deslizante; relaxação multilinear."""

    def __init__(self, motif, K, black_box=False):
        super().__init__(K, black_box, motif=list(int(m) for m in motif))
        self.motif = np.asarray(motif, dtype=np.int64)
        if self.motif.size == 0 or np.any(self.motif < 0) or np.any(self.motif >= K):
            raise ConfigError("Motivo vazio ou com tokens fora do vocabulário.")

    def _window_terms(self, P):
        L, m = P.shape[-2], self.motif.size
        starts = max(L - m + 1, 0)
        # terms[..., s, j] = P[s + j, motif_j]
        terms = np.stack([P[..., s + np.arange(m), self.motif] for s in range(starts)], axis=-2) \
            if starts else np.zeros(P.shape[:-2] + (0, m))
        return terms

    def relaxed_value(self, probs):
        terms = self._window_terms(self._as_simplex(probs))
        return terms.prod(axis=-1).sum(axis=-1)

    def relaxed_grad(self, probs):
        P = self._as_simplex(probs)
        if P.ndim != 2:
            raise DomainError("relaxed_grad espera uma única sequência (L, K+1).")
        grad = np.zeros_like(P)
        terms = self._window_terms(P)
        m = self.motif.size
        for s in range(terms.shape[0]):
            for j in range(m):
                others = np.prod(np.delete(terms[s], j))
                grad[s + j, self.motif[j]] += others
        return grad


@register_reward('composition', 'discrete')
class CompositionReward(DiscreteReward):
    """Contagem de um token designado; relaxação Σ_ℓ p_ℓ(a)."""

    def __init__(self, token, K, black_box=False):
        super().__init__(K, black_box, token=int(token))
        self.token = int(token)
        if not 0 <= self.token < K:
            raise ConfigError("Token de composição fora do vocabulário.")

    def relaxed_value(self, probs):
        return self._as_simplex(probs)[..., self.token].sum(axis=-1)

    def relaxed_grad(self, probs):
        P = self._as_simplex(probs)
        grad = np.zeros_like(P)
        grad[..., self.token] = 1.0
        return grad


# ==============================================================================
# 3. API FUNCIONAL E CONSTRUÇÃO
# ==============================================================================
def build_reward(name, params, black_box=False, K=None):
    if name not in REWARD_REGISTRY:
        raise ConfigError(f"Recompensa desconhecida: '{name}'. Opções: {sorted(REWARD_REGISTRY)}.")
    cls = REWARD_REGISTRY[name]
    kwargs = dict(params)
    if cls.domain == 'discrete':
        if K is None:
            raise ConfigError(f"Recompensa discreta '{name}' exige o tamanho do vocabulário.")
        kwargs['K'] = K
    try:
        return cls(black_box=black_box, **kwargs)
    except TypeError as exc:
        raise ConfigError(f"Parâmetros inválidos para a recompensa '{name}': {exc}") from exc


def check_domain(reward, domain):
    if reward.domain != domain:
        raise DomainError(f"Recompensa '{reward.name}' é {reward.domain}, mundo é {domain}.")


def reward_value(reward, x0):
    return reward.value(x0)


def reward_grad(reward, x0):
    return reward.grad(x0)
