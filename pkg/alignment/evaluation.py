# dav_lab/alignment/evaluation.py

"""
Métricas: ELBO descontado J_{α,γ} (exato tabular ou substituto por amostragem
de importância), estatísticas de recompensa, diversidade, cobertura de modos e
correlação de n-gramas.
"""

import itertools
from collections import Counter
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import pearsonr

from .discrete import DEFAULT_ENUMERATION_CAP
from .exceptions import DomainError
from .softq import aligned_log_probs, exact_soft_policy, soft_policy_log_probs

ESTIMATOR_EXACT = 'exact-tabular'
ESTIMATOR_SURROGATE = 'surrogate-IS'


# ==============================================================================
# 1. REGISTRO POR ÉPOCA
# ==============================================================================
@dataclass
class ElboRecord:
    """Uma linha do CSV de métricas. O ELBO é reportado por trajetória."""
    epoch: int
    elbo_per_trajectory: float
    estimator: str
    elbo_samples: int
    mean_reward: float
    reward_std: float
    diversity: float = float('nan')
    mode_coverage: float = float('nan')
    ngram1_corr: float = float('nan')
    ngram2_corr: float = float('nan')
    estep_mean_reward: float = float('nan')
    weight_entropy: float = float('nan')
    ess: float = float('nan')
    fallbacks: int = 0
    loss_before: float = float('nan')
    loss_after: float = float('nan')
    policy_version: int = 0

    def __post_init__(self):
        if self.estimator == ESTIMATOR_EXACT and self.elbo_samples != 0:
            raise DomainError("Estimativas exatas não carregam contagem de amostras.")

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]

    def as_row(self):
        row = []
        for value in asdict(self).values():
            if isinstance(value, float):
                row.append('%.17g' % value)
            else:
                row.append(str(value))
        return row

    @classmethod
    def from_row(cls, row):
        kwargs = {}
        for f, raw in zip(fields(cls), row):
            kwargs[f.name] = f.type(raw) if f.type in (int, str) else float(raw)
        return cls(**kwargs)


# ==============================================================================
# 2. ELBO
# ==============================================================================
def elbo_exact_tabular(policy, tables, cap=DEFAULT_ENUMERATION_CAP):
    """
    J = E_η[Σ_t γ^{T-t}(r_t/α + log p_θ - log η)] com η = política soft-ótima
    das tabelas, por DP para frente sobre a cadeia de η (sem amostragem).
    """
    cfg = tables.cfg
    T = tables.T
    occupancy = np.zeros(tables.n_states)
    occupancy[tables.initial_index()] = 1.0
    total = 0.0
    for t in range(T, 0, -1):
        transitions = tables.transitions[t]
        sources = transitions.source_index()
        log_eta = soft_policy_log_probs(tables, t)
        log_p = aligned_log_probs(policy, tables, t, cap=cap)
        term = log_p - log_eta
        if t == 1:
            term = term + tables.rewards[transitions.next_index] / cfg.alpha
        mass = occupancy[sources] * np.exp(log_eta)
        total += cfg.gamma ** (T - t) * float(np.sum(mass * term))
        occupancy = np.bincount(transitions.next_index, weights=mass, minlength=tables.n_states)
    return total


def elbo_by_path_enumeration(policy, tables):
    """
    ELBO sem desconto por enumeração direta de todas as trajetórias de η:
    E_η[r/α + log p_θ(τ) - log η(τ)].
    """
    alpha = tables.cfg.alpha
    total = 0.0

    def visit(state, t, log_eta_path, log_ratio):
        nonlocal total
        if t == 0:
            value = tables.rewards[tables.state_index(state)] / alpha + log_ratio
            total += np.exp(log_eta_path) * value
            return
        successors, probs = exact_soft_policy(tables, state, t)
        for successor, prob in zip(successors, probs):
            if prob <= 0:
                continue
            log_p = policy.step_logprob(state, successor, t)
            visit(successor, t - 1, log_eta_path + np.log(prob), log_ratio + log_p - np.log(prob))

    visit(np.full(tables.L, tables.K), tables.T, 0.0, 0.0)
    return float(total)


def elbo_surrogate(policy, trajectories, cfg):
    """
    Estimativa por amostragem de importância:
    média de Σ_t γ^{T-t}(r_t/α + log p_θ - log η̂ - log(M·w̃)),
    usando log η* ≈ log η̂ + log(M·w̃). Devolve (estimativa, número de trajetórias).
    """
    if not trajectories:
        raise DomainError("elbo_surrogate exige trajetórias.")
    T = policy.T
    discounts = cfg.gamma ** (T - np.arange(T, 0, -1))
    values = []
    for traj in trajectories:
        log_p = np.array([policy.step_logprob(xt, xprev, t) for t, xt, xprev in traj.transitions()])
        correction = np.log(traj.num_particles) + traj.log_weights
        terms = log_p - traj.proposal_logprobs - correction
        terms[-1] += traj.reward / cfg.alpha
        values.append(float(discounts @ terms))
    return float(np.mean(values)), len(values)


# ==============================================================================
# 3. DIVERSIDADE E COBERTURA
# ==============================================================================
def levenshtein(a, b):
    a, b = list(a), list(b)
    previous = list(range(len(b) + 1))
    for i, token_a in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        for j, token_b in enumerate(b, start=1):
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (token_a != token_b))
        previous = current
    return previous[-1]


def diversity(samples, kind=None):
    """Distância média entre pares: Levenshtein para sequências, euclidiana para vetores."""
    arr = np.asarray(samples)
    if arr.shape[0] < 2:
        raise DomainError("diversity exige pelo menos 2 amostras.")
    if kind is None:
        kind = 'discrete' if np.issubdtype(arr.dtype, np.integer) else 'continuous'
    if kind == 'continuous':
        return float(np.mean(pdist(arr.astype(np.float64), metric='euclidean')))
    distances = [levenshtein(a, b) for a, b in itertools.combinations(arr.tolist(), 2)]
    return float(np.mean(distances))


def mode_coverage(samples, mixture, radius=None):
    """Fração de componentes com ao menos uma amostra a distância <= radius (padrão 2·s_k)."""
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    radii = 2.0 * mixture.stds if radius is None else np.full(mixture.n_components, float(radius))
    distances = np.linalg.norm(X[:, None, :] - mixture.means[None, :, :], axis=-1)
    covered = np.any(distances <= radii[None, :], axis=0)
    return float(covered.mean())


def reward_statistics(reward, samples):
    values = np.asarray(reward.value(np.asarray(samples)), dtype=np.float64)
    return float(values.mean()), float(values.std())


# ==============================================================================
# 4. NATURALIDADE SINTÉTICA (N-GRAMAS)
# ==============================================================================
def ngram_frequencies(sequences, K, n, weights=None):
    sequences = np.atleast_2d(np.asarray(sequences, dtype=np.int64))
    weights = np.ones(sequences.shape[0]) if weights is None else np.asarray(weights, dtype=np.float64)
    counts = Counter()
    for sequence, weight in zip(sequences.tolist(), weights):
        for start in range(len(sequence) - n + 1):
            counts[tuple(sequence[start:start + n])] += weight
    vocabulary = list(itertools.product(range(K), repeat=n))
    freqs = np.array([counts[gram] for gram in vocabulary], dtype=np.float64)
    total = freqs.sum()
    return freqs / total if total > 0 else freqs


def ngram_correlation(samples, reference, K, n, reference_weights=None):
    """Correlação de Pearson entre as frequências de n-gramas das amostras e da referência."""
    observed = ngram_frequencies(samples, K, n)
    expected = ngram_frequencies(reference, K, n, reference_weights)
    if np.std(observed) == 0 or np.std(expected) == 0:
        return float('nan')
    return float(pearsonr(observed, expected)[0])
