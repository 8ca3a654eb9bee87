# dav_lab/alignment/estep.py

"""
E-step (exploração da posterior): propostas guiadas, M partículas, pesos de
importância com Q̂ e reamostragem de um sucessor por passo.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.special import softmax as scipy_softmax

from .exceptions import ConfigError, DegenerateWeightsError
from .numkit import gaussian_logpdf, inverse_cdf_rows, normalize_log_weights, sample_categorical
from .softq import SoftQConfig, approx_soft_q_batch
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

JACOBIAN_MODES = ('exact', 'stop_gradient')
X0HAT_SOURCES = ('prior', 'policy')


@dataclass(frozen=True)
class EStepConfig:
    alpha: float
    gamma: float = 1.0
    num_particles: int = 1
    guidance: bool = True
    x0hat_jacobian: str = 'exact'
    x0hat_source: str = 'prior'

    def __post_init__(self):
        SoftQConfig(self.alpha, self.gamma)
        if self.num_particles < 1:
            raise ConfigError("num_particles (M) deve ser >= 1.")
        if self.x0hat_jacobian not in JACOBIAN_MODES:
            raise ConfigError(f"x0hat_jacobian deve ser um de {JACOBIAN_MODES}.")
        if self.x0hat_source not in X0HAT_SOURCES:
            raise ConfigError(f"x0hat_source deve ser um de {X0HAT_SOURCES}.")

    @property
    def soft_q(self):
        return SoftQConfig(self.alpha, self.gamma)

    def discount(self, t):
        return self.gamma ** (t - 1)


@dataclass
class ParticleSet:
    states: np.ndarray
    proposal_logprobs: np.ndarray
    prior_logprobs: np.ndarray
    q_values: np.ndarray
    log_weights: np.ndarray = None   # log w não normalizado
    weights: np.ndarray = None
    fallback: bool = False

    @property
    def M(self):
        return self.states.shape[0]

    def ess(self):
        return float(1.0 / np.sum(self.weights ** 2))

    def entropy(self):
        w = self.weights[self.weights > 0]
        return float(-np.sum(w * np.log(w)))


def check_guidance(reward, cfg):
    if cfg.guidance and not reward.differentiable:
        raise ConfigError(f"Guidance ligado com a recompensa caixa-preta '{reward.name}'.")


# ==============================================================================
# 1. PROPOSTAS
# ==============================================================================
def propose_continuous(policy, xt, t, reward, cfg, rng, q_policy=None):
    """η̂ = N(μ_θ + (σ_t²/α) γ^{t-1} ∇_{x_t} r(x̂0(x_t)), σ_t² I)."""
    check_guidance(reward, cfg)
    q_policy = policy if q_policy is None else q_policy
    mean = policy.policy_mean(xt, t)
    sigma2 = policy.sigma_sq(t)
    proposal_mean = mean
    if cfg.guidance:
        grad = q_policy.guidance_gradient(xt, t, reward, cfg.x0hat_jacobian)
        proposal_mean = mean + (sigma2 / cfg.alpha * cfg.discount(t)) * grad
    samples = proposal_mean + np.sqrt(sigma2) * rng.normal((cfg.num_particles, mean.size))
    return ParticleSet(
        states=samples,
        proposal_logprobs=gaussian_logpdf(samples, proposal_mean, sigma2),
        prior_logprobs=gaussian_logpdf(samples, mean, sigma2),
        q_values=approx_soft_q_batch(q_policy, samples, t, reward, cfg.soft_q),
    )


def guided_step_probs(prior_probs, masked, grad, coef):
    """Logits = log π_prior + coef·∇r nas posições mascaradas; as demais ficam como no prior."""
    with np.errstate(divide='ignore'):
        logits = np.log(prior_probs)
    guided = scipy_softmax(logits + coef * grad, axis=-1)
    return np.where(masked[:, None], guided, prior_probs)


def _sum_logprobs(probs, samples):
    picked = probs[np.arange(probs.shape[0])[None, :], samples]
    with np.errstate(divide='ignore'):
        return np.log(picked).sum(axis=1)


def propose_discrete(policy, xt, t, reward, cfg, rng, q_policy=None):
    check_guidance(reward, cfg)
    q_policy = policy if q_policy is None else q_policy
    tokens = np.asarray(xt, dtype=np.int64)
    prior_probs = policy.step_probs(tokens[None, :], t)[0]
    proposal_probs = prior_probs
    if cfg.guidance:
        masked = tokens == policy.K
        grad = q_policy.guidance_gradient(tokens, t, reward, cfg.x0hat_jacobian)
        proposal_probs = guided_step_probs(prior_probs, masked, grad, cfg.discount(t) / cfg.alpha)

    M = cfg.num_particles
    samples = inverse_cdf_rows(
        np.broadcast_to(proposal_probs, (M,) + proposal_probs.shape), rng.random((M, tokens.size)),
    )
    unique, inverse = np.unique(samples, axis=0, return_inverse=True)
    q_values = approx_soft_q_batch(q_policy, unique, t, reward, cfg.soft_q)[np.ravel(inverse)]
    return ParticleSet(
        states=samples,
        proposal_logprobs=_sum_logprobs(proposal_probs, samples),
        prior_logprobs=_sum_logprobs(prior_probs, samples),
        q_values=q_values,
    )


def propose(policy, xt, t, reward, cfg, rng, q_policy=None):
    if policy.kind == 'continuous':
        return propose_continuous(policy, xt, t, reward, cfg, rng, q_policy)
    return propose_discrete(policy, xt, t, reward, cfg, rng, q_policy)


# ==============================================================================
# 2. PESOS E REAMOSTRAGEM
# ==============================================================================
def importance_weights(particles, cfg, t=None):
    """log w = log p_prior - log η̂ + Q̂/α, normalizado em espaço log."""
    log_w = particles.prior_logprobs - particles.proposal_logprobs + particles.q_values / cfg.alpha
    if not np.any(np.isfinite(log_w)):
        raise DegenerateWeightsError(f"Todos os {particles.M} pesos são -inf (t={t}).")
    particles.log_weights = log_w
    particles.weights, _ = normalize_log_weights(log_w)
    return particles


def uniform_fallback(particles):
    particles.weights = np.full(particles.M, 1.0 / particles.M)
    particles.fallback = True
    return particles


def resample(particles, rng):
    """Índice da partícula escolhida."""
    return sample_categorical(particles.weights, rng)


# ==============================================================================
# 3. TRAJETÓRIAS DA POSTERIOR
# ==============================================================================
def search_step(policy, xt, t, reward, cfg, rng, q_policy=None):
    """propose -> weight -> resample; devolve (partículas, índice escolhido)."""
    particles = propose(policy, xt, t, reward, cfg, rng.child(0), q_policy)
    try:
        importance_weights(particles, cfg, t)
    except DegenerateWeightsError as exc:
        logger.warning(f"{exc} Reamostragem uniforme.")
        uniform_fallback(particles)
    return particles, resample(particles, rng.child(1))


def sample_posterior_trajectory(policy, reward, cfg, rng, q_policy=None):
    T = policy.T
    x = policy.initial_state(rng.child(0))
    trajectory = Trajectory(
        states=[np.array(x, copy=True)],
        version=policy.version,
        prior_logprobs=np.zeros(T),
        proposal_logprobs=np.zeros(T),
        log_weights=np.zeros(T),
        log_mean_weights=np.zeros(T),
        num_particles=cfg.num_particles,
    )
    for t in range(T, 0, -1):
        i = T - t
        particles, chosen = search_step(policy, x, t, reward, cfg, rng.child(i + 1), q_policy)
        trajectory.prior_logprobs[i] = particles.prior_logprobs[chosen]
        trajectory.proposal_logprobs[i] = particles.proposal_logprobs[chosen]
        if particles.fallback:
            trajectory.fallbacks += 1
            trajectory.log_weights[i] = -np.log(particles.M)
        else:
            trajectory.log_weights[i] = np.log(particles.weights[chosen])
            trajectory.log_mean_weights[i] = logsumexp(particles.log_weights) - np.log(particles.M)
        trajectory.ess.append(particles.ess())
        trajectory.weight_entropy.append(particles.entropy())
        x = particles.states[chosen].copy()
        trajectory.states.append(x)
    trajectory.reward = float(reward.value(x))
    return trajectory


@dataclass
class EStepBatch:
    trajectories: list
    mean_weight_entropy: float
    mean_ess: float
    fallbacks: int
    mean_reward: float


def summarize(trajectories):
    return EStepBatch(
        trajectories=trajectories,
        mean_weight_entropy=float(np.mean([np.mean(tr.weight_entropy) if tr.weight_entropy else 0.0
                                           for tr in trajectories])),
        mean_ess=float(np.mean([np.mean(tr.ess) if tr.ess else 1.0 for tr in trajectories])),
        fallbacks=int(sum(tr.fallbacks for tr in trajectories)),
        mean_reward=float(np.mean([tr.reward for tr in trajectories])),
    )


def run_estep(policy, reward, cfg, rng, batch_size, q_policy=None, threads=1):
    """
    B trajetórias; a trajetória b usa rng.child(b), então o resultado não depende
    do número de threads nem da ordem de execução.
    """
    def sample(b):
        return sample_posterior_trajectory(policy, reward, cfg, rng.child(b), q_policy)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            trajectories = list(executor.map(sample, range(batch_size)))
    else:
        trajectories = [sample(b) for b in range(batch_size)]
    batch = summarize(trajectories)
    if batch.fallbacks:
        logger.warning(f"E-step: {batch.fallbacks} passos com pesos degenerados (fallback uniforme).")
    return batch


def empirical_next_states(policy, xt, t, reward, cfg, rng, repeats, q_policy=None):
    """Estados escolhidos em `repeats` passos de busca independentes a partir de x_t."""
    chosen = []
    for r in range(repeats):
        particles, index = search_step(policy, xt, t, reward, cfg, rng.child(r), q_policy)
        chosen.append(particles.states[index])
    return np.stack(chosen)
