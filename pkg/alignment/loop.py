# dav_lab/alignment/loop.py

"""
Laço EM externo: para cada época, E-step (lote de B trajetórias da posterior),
M-step (destilação na política) e uma linha de métricas.

Convenção das linhas: a linha 0 avalia θ⁰ no lote D_1; a linha k avalia θ^k,
já atualizado, no lote D_k com que foi treinado. Todos os fluxos aleatórios
são derivados de (seed, época), então retomar de um checkpoint reproduz a
execução contínua bit a bit.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoints import restore_parameters
from .evaluation import (
    ESTIMATOR_EXACT, ESTIMATOR_SURROGATE, ElboRecord, diversity, elbo_exact_tabular, elbo_surrogate,
    mode_coverage, ngram_correlation, reward_statistics,
)
from .estep import run_estep
from .exceptions import ConfigError
from .mstep import AdamOptimizer, mstep_update
from .softq import SoftQConfig

logger = logging.getLogger(__name__)

# Fluxos de nível superior derivados da seed da execução
WORLD_STREAM = 0
EPOCH_STREAM = 1
EVAL_STREAM = 2
POSTERIOR_STREAM = 3


@dataclass
class LoopState:
    policy: object
    anchor: object                      # snapshot congelado de θ⁰
    optimizer: AdamOptimizer
    epoch: int = 0
    records: list = field(default_factory=list)


def initial_state(world, cfg):
    return LoopState(
        policy=world.fresh_policy(),
        anchor=world.prior.snapshot(),
        optimizer=AdamOptimizer.from_config(cfg.mstep),
    )


def resume_state(world, cfg, checkpoint):
    state = initial_state(world, cfg)
    restore_parameters(state.policy, checkpoint)
    if checkpoint.optimizer_state is not None:
        state.optimizer.load_state_dict(checkpoint.optimizer_state)
    state.epoch = checkpoint.epoch
    state.records = [ElboRecord.from_row(row) for row in checkpoint.records]
    return state


# ==============================================================================
# 1. E-STEP POR VARIANTE
# ==============================================================================
def estep_config_for(variant, cfg):
    """Reweight não faz busca: rollouts on-policy (M=1, sem guidance)."""
    if variant == 'reweight':
        return replace(cfg.estep, num_particles=1, guidance=False)
    return cfg.estep


def collect_batch(world, state, cfg, variant, epoch, rng, threads=1):
    """Lote D_epoch. Search-and-distill busca sempre contra θ⁰."""
    estep_cfg = estep_config_for(variant, cfg)
    if variant == 'search_and_distill':
        base, q_policy = state.anchor, state.anchor
    else:
        base = state.policy
        q_policy = world.prior if estep_cfg.x0hat_source == 'prior' else state.policy
    return run_estep(
        base, world.reward, estep_cfg, rng.child(EPOCH_STREAM, epoch),
        batch_size=cfg.batch_size, q_policy=q_policy, threads=threads,
    )


def reweight_weights(batch, alpha):
    """w_b ∝ exp(r(x_0^b)/α), estabilizado pelo máximo."""
    rewards = np.array([traj.reward for traj in batch.trajectories])
    return np.exp((rewards - rewards.max()) / alpha)


def distill(state, batch, cfg, variant):
    weights = reweight_weights(batch, cfg.estep.alpha) if variant == 'reweight' else None
    expected = state.anchor.version if variant == 'search_and_distill' else state.policy.version
    return mstep_update(
        state.policy, batch.trajectories, cfg.mstep, state.optimizer,
        anchor=state.anchor, weights=weights, expected_version=expected,
    )


# ==============================================================================
# 2. MÉTRICAS POR ÉPOCA
# ==============================================================================
def sample_metrics(world, samples, cfg):
    """Estatísticas de recompensa, diversidade e cobertura/naturalidade de um conjunto de x_0."""
    samples = np.asarray(samples)
    mean_reward, reward_std = reward_statistics(world.reward, samples)
    metrics = {'mean_reward': mean_reward, 'reward_std': reward_std}
    metrics['diversity'] = diversity(samples, kind=world.kind) if samples.shape[0] >= 2 else float('nan')
    if world.kind == 'continuous':
        metrics['mode_coverage'] = mode_coverage(samples, world.mixture, cfg.eval.mode_radius)
    else:
        K = world.prior.K
        metrics['ngram1_corr'] = ngram_correlation(samples, world.data, K, 1, world.data_weights)
        metrics['ngram2_corr'] = ngram_correlation(samples, world.data, K, 2, world.data_weights) \
            if world.prior.L >= 2 else float('nan')
    return metrics


def elbo_estimate(world, policy, batch, cfg):
    soft_cfg = SoftQConfig(cfg.estep.alpha, cfg.estep.gamma)
    if cfg.uses_exact_elbo():
        tables = world.soft_tables(policy, soft_cfg, cfg.enumeration_cap)
        return elbo_exact_tabular(policy, tables, cap=cfg.enumeration_cap), ESTIMATOR_EXACT, 0
    value, n = elbo_surrogate(policy, batch.trajectories, soft_cfg)
    return value, ESTIMATOR_SURROGATE, n


def evaluate_epoch(world, policy, batch, cfg, epoch, rng, report=None):
    elbo, estimator, n_elbo = elbo_estimate(world, policy, batch, cfg)
    rollouts = policy.rollout(rng.child(EVAL_STREAM, epoch), cfg.eval.n_samples)
    metrics = sample_metrics(world, [traj.x0 for traj in rollouts], cfg)
    return ElboRecord(
        epoch=epoch,
        elbo_per_trajectory=elbo,
        estimator=estimator,
        elbo_samples=n_elbo,
        estep_mean_reward=batch.mean_reward,
        weight_entropy=batch.mean_weight_entropy,
        ess=batch.mean_ess,
        fallbacks=batch.fallbacks,
        loss_before=float('nan') if report is None else report.loss_before,
        loss_after=float('nan') if report is None else report.loss_after,
        policy_version=policy.version,
        **metrics,
    )


# ==============================================================================
# 3. LAÇO EM
# ==============================================================================
def run_em(world, cfg, rng, variant=None, threads=1, state=None, on_epoch=None):
    """
    Executa as épocas restantes até cfg.epochs. `state` retomado de checkpoint
    continua da época seguinte; `on_epoch(state, record)` é chamado após cada linha.
    """
    variant = variant or cfg.variant
    if variant not in ('dav', 'search_and_distill', 'reweight'):
        raise ConfigError(f"Variante desconhecida: '{variant}'.")
    state = initial_state(world, cfg) if state is None else state
    if state.epoch > cfg.epochs:
        raise ConfigError(f"Checkpoint na época {state.epoch} além de epochs={cfg.epochs}.")

    batch = None
    if state.epoch == 0 and not state.records:
        batch = collect_batch(world, state, cfg, variant, 1, rng, threads)
        record = evaluate_epoch(world, state.policy, batch, cfg, 0, rng)
        state.records.append(record)
        logger.info(f"[{variant}] época 0: ELBO {record.elbo_per_trajectory:.6f}, recompensa {record.mean_reward:.4f}.")
        if on_epoch:
            on_epoch(state, record)

    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        if batch is None:
            batch = collect_batch(world, state, cfg, variant, epoch, rng, threads)
        report = distill(state, batch, cfg, variant)
        record = evaluate_epoch(world, state.policy, batch, cfg, epoch, rng, report)
        state.epoch = epoch
        state.records.append(record)
        logger.info(
            f"[{variant}] época {epoch}/{cfg.epochs}: ELBO {record.elbo_per_trajectory:.6f}, "
            f"recompensa {record.mean_reward:.4f}, fallbacks {record.fallbacks}."
        )
        if on_epoch:
            on_epoch(state, record)
        batch = None
    return state


def run_ablation(variant, world, cfg, rng, threads=1, on_epoch=None):
    """Mesmo mundo, seeds e orçamento da execução DAV; muda apenas o E-step/M-step."""
    if variant not in ('search_and_distill', 'reweight'):
        raise ConfigError(f"Ablação desconhecida: '{variant}'.")
    return run_em(world, cfg, rng, variant=variant, threads=threads, on_epoch=on_epoch).records
