# dav_lab/alignment/mstep.py

"""
M-step: máxima verossimilhança nas trajetórias do E-step (perda DAV), com âncora
KL opcional na política pré-treinada (DAV-KL), como M-step parcial.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DomainError, NonFiniteStateError, SnapshotMismatchError
from .trajectory import stack_states

logger = logging.getLogger(__name__)

KL_WEIGHTINGS = ('uniform', 'discounted')


@dataclass(frozen=True)
class MStepConfig:
    learning_rate: float = 1e-3
    distillation_steps: int = 1
    kl_coefficient: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    kl_weighting: str = 'uniform'
    gamma: float = 1.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate deve ser >= 0.")
        if self.distillation_steps < 1:
            raise ConfigError("distillation_steps deve ser >= 1.")
        if self.kl_coefficient < 0:
            raise ConfigError("kl_coefficient (λ) deve ser >= 0.")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1 e beta2 devem estar em [0, 1).")
        if self.kl_weighting not in KL_WEIGHTINGS:
            raise ConfigError(f"kl_weighting deve ser um de {KL_WEIGHTINGS}.")


# ==============================================================================
# 1. OTIMIZADOR ADAM
# ==============================================================================
class AdamOptimizer:
    """Recursão padrão de primeiro/segundo momento com correção de viés. Desce no gradiente."""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = None
        self.v = None

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.epsilon)

    def state_dict(self):
        return {
            'step_count': self.step_count,
            'm': [] if self.m is None else [a.copy() for a in self.m],
            'v': [] if self.v is None else [a.copy() for a in self.v],
        }

    def load_state_dict(self, state):
        self.step_count = int(state['step_count'])
        self.m = [np.array(a, dtype=np.float64) for a in state['m']] or None
        self.v = [np.array(a, dtype=np.float64) for a in state['v']] or None


# ==============================================================================
# 2. PERDAS
# ==============================================================================
def _coefficients(batch, weights):
    if len(batch) == 0:
        raise DomainError("Lote de trajetórias vazio.")
    if weights is None:
        return np.full(len(batch), 1.0 / len(batch))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(batch),) or np.any(weights < 0) or weights.sum() <= 0:
        raise DomainError("Pesos das trajetórias inválidos.")
    return weights / weights.sum()


def dav_loss(policy, batch, weights=None):
    """-E[Σ_t log p_θ(x_{t-1} | x_t)] sobre o lote (média ponderada) e seu gradiente."""
    coef = _coefficients(batch, weights)
    grads = policy.zero_grads()
    totals = np.zeros(len(batch))
    for t in range(policy.T, 0, -1):
        totals += policy.accumulate_logprob_grads(
            grads, stack_states(batch, t), stack_states(batch, t - 1), t, coef,
        )
    return -float(coef @ totals), [-g for g in grads]


def kl_step_weight(t, T, weighting, gamma):
    return 1.0 if weighting == 'uniform' else gamma ** (T - t)


def dav_kl_loss(policy, anchor, batch, kl_coefficient, weighting='uniform', gamma=1.0, weights=None):
    """Perda DAV + λ Σ_t κ_t KL(p_θ(·|x_t) ‖ p_θ⁰(·|x_t)) nos estados x_t do lote."""
    loss, grads = dav_loss(policy, batch, weights)
    if kl_coefficient == 0:
        return loss, grads
    coef = _coefficients(batch, weights)
    kl_grads = policy.zero_grads()
    kl_total = 0.0
    for t in range(policy.T, 0, -1):
        scale = kl_coefficient * kl_step_weight(t, policy.T, weighting, gamma)
        kls = policy.accumulate_kl_grads(kl_grads, anchor, stack_states(batch, t), t, coef * scale)
        kl_total += scale * float(coef @ kls)
    return loss + kl_total, [g + k for g, k in zip(grads, kl_grads)]


def total_loss(policy, batch, cfg, anchor=None, weights=None):
    if cfg.kl_coefficient > 0:
        if anchor is None:
            raise DomainError("DAV-KL exige o snapshot pré-treinado.")
        return dav_kl_loss(policy, anchor, batch, cfg.kl_coefficient, cfg.kl_weighting, cfg.gamma, weights)
    return dav_loss(policy, batch, weights)


# ==============================================================================
# 3. ATUALIZAÇÃO
# ==============================================================================
@dataclass
class StepReport:
    loss_before: float
    loss_after: float
    losses: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    version: int = 0


def check_snapshot(batch, expected_version):
    versions = sorted({traj.version for traj in batch})
    if versions != [expected_version]:
        raise SnapshotMismatchError(
            f"Trajetórias geradas com versões {versions}, esperado {expected_version}."
        )


def mstep_update(policy, batch, cfg, optimizer, anchor=None, weights=None, expected_version=None):
    """
    Aplica cfg.distillation_steps passos Adam na perda configurada. Em caso de
    estado não finito os parâmetros são restaurados e NonFiniteStateError é levantado.
    """
    if len(batch) == 0:
        raise DomainError("mstep_update exige um lote não vazio.")
    check_snapshot(batch, policy.version if expected_version is None else expected_version)

    report = StepReport(loss_before=float('nan'), loss_after=float('nan'))
    for step in range(cfg.distillation_steps):
        loss, grads = total_loss(policy, batch, cfg, anchor, weights)
        grad_norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
        if not np.isfinite(loss) or not np.isfinite(grad_norm):
            raise NonFiniteStateError(
                f"Perda ou gradiente não finito no passo {step} (perda={loss}, norma={grad_norm})."
            )
        if step == 0:
            report.loss_before = loss
        report.losses.append(loss)
        report.grad_norms.append(grad_norm)

        params = policy.parameters()
        backup = [p.copy() for p in params]
        optimizer.step(params, grads)
        if not all(np.all(np.isfinite(p)) for p in params):
            for p, saved in zip(params, backup):
                p[...] = saved
            raise NonFiniteStateError(f"Parâmetros não finitos após o passo {step}; restaurados.")

    report.loss_after, _ = total_loss(policy, batch, cfg, anchor, weights)
    policy.version += 1
    report.version = policy.version
    logger.debug(
        f"M-step: perda {report.loss_before:.6f} -> {report.loss_after:.6f} "
        f"em {cfg.distillation_steps} passo(s), versão {policy.version}."
    )
    return report
