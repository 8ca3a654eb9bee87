# dav_lab/alignment/softq.py

"""
Maquinário soft-Q: a aproximação Q̂ = γ^{t-1} r(x̂0(x_{t-1})) usada em tempo de
execução e os oráculos exatos por programação dinâmica (V, Q, política
soft-ótima e normalizador) para instâncias discretas enumeráveis.

Recompensa esparsa e transições determinísticas:
    Q*(x_1, x_0) = r(x_0)
    Q*(x_t, x_{t-1}) = γ V*(x_{t-1})            para t >= 2
    V*(x_t) = α log Σ p(x_{t-1} | x_t) exp(Q*/α) = α log Z(x_t)
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .discrete import (
    DEFAULT_ENUMERATION_CAP, decode_states, encode_states, enumerate_states, transition_table,
)
from .exceptions import BoundViolationError, ConfigError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SoftQConfig:
    alpha: float
    gamma: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"α deve ser > 0, recebido {self.alpha}.")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"γ deve estar em (0, 1], recebido {self.gamma}.")

    def discount(self, t):
        return self.gamma ** (t - 1)


# ==============================================================================
# 1. APROXIMAÇÃO DE TWEEDIE
# ==============================================================================
def approx_soft_q_batch(q_policy, X_prev, t, reward, cfg):
    """γ^{t-1} r(x̂0(x_{t-1})) para um lote de estados x_{t-1}."""
    if t < 1:
        raise DomainError(f"approx_soft_q exige t >= 1, recebido {t}.")
    x0hat = q_policy.x0hat_batch(X_prev, t - 1)
    if q_policy.kind == 'continuous':
        values = reward.value(x0hat)
    else:
        values = reward.relaxed_value(x0hat)
    return cfg.discount(t) * np.asarray(values, dtype=np.float64)


def approx_soft_q(q_policy, x_prev, t, reward, cfg):
    return float(approx_soft_q_batch(q_policy, np.asarray(x_prev)[None, ...], t, reward, cfg)[0])


# ==============================================================================
# 2. REDUÇÕES POR SEGMENTO (CSR)
# ==============================================================================
def segment_logsumexp(values, offsets):
    starts = offsets[:-1]
    peaks = np.maximum.reduceat(values, starts)
    sources = np.repeat(np.arange(starts.size), np.diff(offsets))
    sums = np.add.reduceat(np.exp(values - peaks[sources]), starts)
    return peaks + np.log(sums)


def segment_sum(values, offsets):
    return np.add.reduceat(values, offsets[:-1])


# ==============================================================================
# 3. TABELAS EXATAS
# ==============================================================================
@dataclass
class ExactSoftTables:
    cfg: SoftQConfig
    L: int
    K: int
    T: int
    rewards: np.ndarray                              # r(x) para cada estado como x_0
    transitions: dict = field(default_factory=dict)  # t -> TransitionTable do prior
    q: dict = field(default_factory=dict)            # t -> Q* alinhado com transitions[t]
    v: dict = field(default_factory=dict)            # t -> V* (S,), t = 0..T
    log_z: dict = field(default_factory=dict)        # t -> log Z (S,)

    @property
    def n_states(self):
        return self.rewards.size

    def state_index(self, tokens):
        return int(encode_states(np.asarray(tokens)[None, :], self.K)[0])

    def initial_index(self):
        return self.state_index(np.full(self.L, self.K))


def _bellman_q(tables, t, transitions):
    if t == 1:
        return tables.rewards[transitions.next_index].copy()
    return tables.cfg.gamma * tables.v[t - 1][transitions.next_index]


def exact_soft_tables(prior_policy, reward, cfg, cap=DEFAULT_ENUMERATION_CAP):
    """Recursão para trás de t=1 (condição terminal) até t=T."""
    states = enumerate_states(prior_policy.L, prior_policy.K, cap=cap)
    tables = ExactSoftTables(
        cfg=cfg, L=prior_policy.L, K=prior_policy.K, T=prior_policy.T,
        rewards=np.asarray(reward.value(states), dtype=np.float64),
    )
    tables.v[0] = np.zeros(states.shape[0])
    for t in range(1, prior_policy.T + 1):
        transitions = transition_table(prior_policy, t, cap=cap)
        q = _bellman_q(tables, t, transitions)
        log_z = segment_logsumexp(transitions.log_probs + q / cfg.alpha, transitions.offsets)
        tables.transitions[t] = transitions
        tables.q[t] = q
        tables.log_z[t] = log_z
        tables.v[t] = cfg.alpha * log_z
    logger.debug(f"Tabelas soft exatas: {states.shape[0]} estados, T={prior_policy.T}, α={cfg.alpha}, γ={cfg.gamma}.")
    return tables


def soft_policy_log_probs(tables, t):
    """log η*(x_{t-1} | x_t) alinhado com tables.transitions[t]."""
    transitions = tables.transitions[t]
    sources = transitions.source_index()
    return transitions.log_probs + tables.q[t] / tables.cfg.alpha - tables.log_z[t][sources]


def exact_soft_policy(tables, xt, t):
    """η*(·|x_t) ∝ p_prior exp(Q*/α). Devolve (tokens dos sucessores, probabilidades)."""
    index = tables.state_index(xt)
    transitions = tables.transitions[t]
    lo, hi = transitions.offsets[index], transitions.offsets[index + 1]
    log_eta = soft_policy_log_probs(tables, t)[lo:hi]
    probs = np.exp(log_eta)
    return decode_states(transitions.next_index[lo:hi], tables.L, tables.K), probs / probs.sum()


class SoftOptimalPolicy:
    """A política η* das tabelas exposta com a interface de política discreta."""
    kind = 'discrete'

    def __init__(self, tables):
        self.tables = tables

    @property
    def T(self):
        return self.tables.T

    @property
    def L(self):
        return self.tables.L

    @property
    def K(self):
        return self.tables.K

    def transition_logprobs(self, t):
        return soft_policy_log_probs(self.tables, t)

    def step_logprob(self, xt, xprev, t):
        successors, probs = exact_soft_policy(self.tables, xt, t)
        match = np.all(successors == np.asarray(xprev)[None, :], axis=1)
        if not np.any(match):
            raise DomainError("Transição fora do suporte de η*.")
        return float(np.log(probs[match][0]))


def aligned_log_probs(policy, tables, t, cap=DEFAULT_ENUMERATION_CAP):
    """log p_θ(x_{t-1} | x_t) na mesma ordem CSR das tabelas."""
    if hasattr(policy, 'transition_logprobs'):
        return policy.transition_logprobs(t)
    transitions = transition_table(policy, t, cap=cap)
    reference = tables.transitions[t]
    if (not np.array_equal(transitions.offsets, reference.offsets)
            or not np.array_equal(transitions.next_index, reference.next_index)):
        raise DomainError(f"Suporte da política difere do suporte das tabelas em t={t}.")
    return transitions.log_probs


# ==============================================================================
# 4. VERIFICAÇÕES
# ==============================================================================
def bellman_residual(tables):
    """Maior violação das equações de Bellman soft (e das condições terminais)."""
    worst = float(np.max(np.abs(tables.v[0])))
    for t in range(1, tables.T + 1):
        transitions = tables.transitions[t]
        expected_q = _bellman_q(tables, t, transitions)
        worst = max(worst, float(np.max(np.abs(tables.q[t] - expected_q))))
        v = tables.cfg.alpha * segment_logsumexp(
            transitions.log_probs + tables.q[t] / tables.cfg.alpha, transitions.offsets,
        )
        worst = max(worst, float(np.max(np.abs(tables.v[t] - v))))
    return worst


def expected_reward_tables(prior_policy, reward, gamma, cap=DEFAULT_ENUMERATION_CAP):
    """Limite α → ∞: E_prior[γ-descontada recompensa | x_t] para cada t."""
    states = enumerate_states(prior_policy.L, prior_policy.K, cap=cap)
    rewards = np.asarray(reward.value(states), dtype=np.float64)
    values = {0: np.zeros(states.shape[0])}
    for t in range(1, prior_policy.T + 1):
        transitions = transition_table(prior_policy, t, cap=cap)
        target = rewards if t == 1 else gamma * values[t - 1]
        values[t] = segment_sum(np.exp(transitions.log_probs) * target[transitions.next_index],
                                transitions.offsets)
    return values


def _log_expectations(transitions, rewards, scale, alpha, steps):
    """log E_prior[exp(scale·r(x_0)/α) | x_s] para s = 0..steps."""
    values = scale * rewards / alpha
    for s in range(1, steps + 1):
        tr = transitions[s]
        values = segment_logsumexp(tr.log_probs + values[tr.next_index], tr.offsets)
    return values


@dataclass
class BoundReport:
    gamma: float
    checked: int = 0
    violations: list = field(default_factory=list)
    max_lower_excess: float = -np.inf   # max(lower - Q)
    max_upper_excess: float = -np.inf   # max(Q - upper)

    @property
    def collapsed(self):
        return self.gamma == 1.0

    @property
    def passed(self):
        return not self.violations

    def raise_if_violated(self):
        if self.violations:
            t, state, successor, lower, q, upper = self.violations[0]
            raise BoundViolationError(
                f"{len(self.violations)} violações; primeira em t={t}, estado {state} -> {successor}: "
                f"{lower} <= {q} <= {upper} falhou."
            )

    def summary(self):
        return (f"checked={self.checked} violations={len(self.violations)} "
                f"max_lower_excess={self.max_lower_excess:.3e} max_upper_excess={self.max_upper_excess:.3e} "
                f"collapsed={self.collapsed}")


def check_bounds(tables, prior_policy, cfg=None, slack=1e-9, cap=DEFAULT_ENUMERATION_CAP):
    """
    Verifica α γ log E[exp(γ^{t-2} r/α)] <= Q*(x_t, x_{t-1}) <= α γ^{t-1} log E[exp(r/α)]
    para todo par enumerado com t >= 2, com expectativas exatas sob o prior dado x_{t-1}.
    """
    cfg = tables.cfg if cfg is None else cfg
    alpha, gamma = cfg.alpha, cfg.gamma
    transitions = {t: transition_table(prior_policy, t, cap=cap) for t in range(1, tables.T + 1)}
    report = BoundReport(gamma=gamma)
    upper_log = {}
    for t in range(2, tables.T + 1):
        if t - 1 not in upper_log:
            upper_log[t - 1] = _log_expectations(transitions, tables.rewards, 1.0, alpha, t - 1)
        lower_log = _log_expectations(transitions, tables.rewards, gamma ** (t - 2), alpha, t - 1)
        tr = transitions[t]
        successors = tr.next_index
        upper = alpha * gamma ** (t - 1) * upper_log[t - 1][successors]
        lower = alpha * gamma * lower_log[successors]
        q = tables.q[t]
        tolerance = slack * np.maximum(1.0, np.maximum(np.abs(lower), np.abs(upper)))
        report.checked += q.size
        report.max_lower_excess = max(report.max_lower_excess, float(np.max(lower - q)))
        report.max_upper_excess = max(report.max_upper_excess, float(np.max(q - upper)))
        bad = np.flatnonzero((lower - q > tolerance) | (q - upper > tolerance))
        sources = tr.source_index()
        for i in bad:
            report.violations.append((t, int(sources[i]), int(successors[i]),
                                      float(lower[i]), float(q[i]), float(upper[i])))
    if report.violations:
        logger.warning(f"Violações de limites do Q soft: {report.summary()}")
    return report
