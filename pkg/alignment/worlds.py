# dav_lab/alignment/worlds.py

"""Montagem do mundo (cronograma, política pré-treinada θ⁰, recompensa) a partir da configuração."""

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .continuous import ContinuousPolicy, GaussianMixture
from .discrete import (
    DiscretePolicy, MlpDenoiser, MotifMixture, TabularDenoiser, pretrain_discrete, pretraining_loss,
)
from .rewards import build_reward, check_domain
from .sched import make_continuous_schedule, make_discrete_schedule
from .softq import exact_soft_tables

logger = logging.getLogger(__name__)

# Sub-fluxos do RngStream do mundo
INIT_STREAM = 0
DATA_STREAM = 1
PRETRAIN_STREAM = 2

# Quantos conjuntos de tabelas soft exatas ficam em memória por mundo
TABLES_CACHE_SIZE = 4


@dataclass
class World:
    kind: str
    prior: object                       # θ⁰, versão 0
    reward: object
    mixture: GaussianMixture = None
    reference: MotifMixture = None
    alphabet: str = None
    data: np.ndarray = None             # sequências de pré-treino (discreto)
    data_weights: np.ndarray = None
    pretraining_loss: float = float('nan')
    tables_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def T(self):
        return self.prior.T

    def fresh_policy(self):
        """Cópia mutável de θ⁰ para ser ajustada."""
        return self.prior.snapshot()

    def soft_tables(self, policy, soft_cfg, cap):
        """
        Tabelas soft exatas inclinadas a partir de `policy`, reaproveitadas enquanto
        os parâmetros, α, γ e o limite de enumeração não mudam.
        """
        key = (parameter_digest(policy), soft_cfg.alpha, soft_cfg.gamma, cap)
        tables = self.tables_cache.get(key)
        if tables is None:
            tables = exact_soft_tables(policy, self.reward, soft_cfg, cap=cap)
            if len(self.tables_cache) >= TABLES_CACHE_SIZE:
                self.tables_cache.pop(next(iter(self.tables_cache)))
            self.tables_cache[key] = tables
        else:
            logger.debug(f"Tabelas soft exatas reaproveitadas (versão {policy.version}).")
        return tables


def parameter_digest(policy):
    digest = hashlib.sha256()
    for p in policy.parameters():
        digest.update(np.ascontiguousarray(p, dtype='<f8').tobytes())
    return digest.hexdigest()


def pretraining_data(reference, cfg, rng, cap):
    """Suporte exato com probabilidades quando K^L cabe no limite; senão amostras."""
    if reference.K ** reference.L <= cap:
        return reference.support(cap)
    return reference.sample(cfg.n_samples, rng), None


def build_denoiser(spec, rng, cap):
    if spec.denoiser == 'tabular':
        return TabularDenoiser(spec.L, spec.K, spec.T, cap=cap)
    return MlpDenoiser.initialize(spec.L, spec.K, spec.T, tuple(spec.hidden), rng, spec.activation)


def _build_continuous(cfg, rng):
    spec = cfg.world.continuous
    schedule = make_continuous_schedule(spec.T, spec.beta_min, spec.beta_max)
    mixture = GaussianMixture(
        weights=np.asarray(spec.mixture.weights),
        means=np.asarray(spec.mixture.means),
        stds=np.asarray(spec.mixture.stds),
    )
    prior = ContinuousPolicy.pretrained(schedule, mixture, tuple(spec.hidden), rng.child(INIT_STREAM), spec.activation)
    reward = build_reward(cfg.reward.name, cfg.reward.params, cfg.reward.black_box)
    return World(kind='continuous', prior=prior, reward=reward, mixture=mixture)


def _build_discrete(cfg, rng, denoiser=None):
    spec = cfg.world.discrete
    schedule = make_discrete_schedule(spec.T)
    reference = MotifMixture(
        motifs=np.asarray(spec.pretraining.motifs), weights=np.asarray(spec.pretraining.weights),
        noise=spec.pretraining.noise, K=spec.K,
    )
    data, weights = pretraining_data(reference, spec.pretraining, rng.child(DATA_STREAM), cfg.enumeration_cap)
    if denoiser is None:
        initial = build_denoiser(spec, rng.child(INIT_STREAM), cfg.enumeration_cap)
        denoiser = pretrain_discrete(
            initial, schedule, data, weights,
            epochs=spec.pretraining.epochs, rng=rng.child(PRETRAIN_STREAM),
            learning_rate=spec.pretraining.learning_rate, batch_size=spec.pretraining.batch_size,
            smoothing=spec.pretraining.smoothing,
        )
    loss = pretraining_loss(denoiser, schedule, data, weights)
    logger.info(f"Denoiser {spec.denoiser} pronto: perda de pré-treino {loss:.6f}.")
    reward = build_reward(cfg.reward.name, cfg.reward.params, cfg.reward.black_box, K=spec.K)
    return World(
        kind='discrete', prior=DiscretePolicy(schedule, denoiser, version=0), reward=reward,
        reference=reference, alphabet=spec.alphabet, data=data, data_weights=weights,
        pretraining_loss=loss,
    )


def build_world(cfg, rng, denoiser=None):
    """
    `rng` é o fluxo reservado ao mundo. Para o discreto, `denoiser` permite
    reaproveitar um denoiser já pré-treinado (checkpoint do subcomando pretrain).
    """
    if cfg.world.kind == 'continuous':
        world = _build_continuous(cfg, rng)
    else:
        world = _build_discrete(cfg, rng, denoiser)
    check_domain(world.reward, world.kind)
    return world
