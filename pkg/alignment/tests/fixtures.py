# dav_lab/alignment/tests/fixtures.py

"""Instâncias pequenas compartilhadas pelos testes."""

import copy

from alignment.continuous import ContinuousPolicy, GaussianMixture
from alignment.discrete import DiscretePolicy, MotifMixture, TabularDenoiser, pretrain_discrete
from alignment.numkit import RngStream
from alignment.rewards import build_reward
from alignment.sched import make_continuous_schedule, make_discrete_schedule

TINY_DISCRETE = {
    'name': 'tiny',
    'world': {
        'kind': 'discrete',
        'discrete': {
            'L': 2, 'K': 2, 'T': 3, 'alphabet': 'AB',
            'pretraining': {'motifs': ['AA', 'AB', 'BA', 'BB'], 'weights': [0.4, 0.1, 0.3, 0.2]},
        },
    },
    'reward': {'name': 'motif_count', 'params': {'motif': [0, 1]}},
    'estep': {'alpha': 0.5},
    'mstep': {'learning_rate': 0.05},
    'epochs': 3,
    'batch_size': 6,
    'seed': 7,
    'eval': {'n_samples': 16},
}

SMALL_CONTINUOUS = {
    'name': 'small-continuous',
    'world': {
        'kind': 'continuous',
        'continuous': {
            'T': 4,
            'mixture': {
                'weights': [0.5, 0.5],
                'means': [[-2.0, 0.0], [2.0, 0.0]],
                'stds': [0.5, 0.5],
            },
            'hidden': [8],
        },
    },
    'reward': {'name': 'linear', 'params': {'coefficients': [1.0, 0.0]}},
    'estep': {'alpha': 0.5},
    'mstep': {'learning_rate': 0.01},
    'epochs': 2,
    'batch_size': 4,
    'seed': 3,
    'eval': {'n_samples': 8},
}

FOUR_MODE_CONTINUOUS = {
    'name': 'four-mode',
    'world': {
        'kind': 'continuous',
        'continuous': {
            'T': 10,
            'mixture': {
                'weights': [0.25, 0.25, 0.25, 0.25],
                'means': [[-3.0, -3.0], [-3.0, 3.0], [3.0, -3.0], [3.0, 3.0]],
                'stds': [0.5, 0.5, 0.5, 0.5],
            },
            'hidden': [8],
        },
    },
    'reward': {
        'name': 'mode_preference',
        'params': {
            'centers': [[-3.0, -3.0], [-3.0, 3.0], [3.0, -3.0], [3.0, 3.0]],
            'amplitudes': [1.0, 1.0, 1.0, 0.2],
            'tau': 1.0,
        },
    },
    'estep': {'alpha': 0.5},
    'mstep': {'learning_rate': 0.01},
    'epochs': 2,
    'batch_size': 16,
    'seed': 5,
    'eval': {'n_samples': 128},
}


def payload(base, **overrides):
    data = copy.deepcopy(base)
    data.update(overrides)
    return data


def tiny_discrete_policy(L=2, K=2, T=3, weights=(0.4, 0.1, 0.3, 0.2)):
    """Prior tabular pré-treinado exatamente na mistura de motivos sem ruído."""
    schedule = make_discrete_schedule(T)
    reference = MotifMixture(motifs=[[0, 0], [0, 1], [1, 0], [1, 1]], weights=list(weights), noise=0.0, K=K)
    sequences, probs = reference.support()
    denoiser = pretrain_discrete(TabularDenoiser(L, K, T), schedule, sequences, probs)
    return DiscretePolicy(schedule, denoiser)


def motif_reward(motif=(0, 1), K=2, black_box=False):
    return build_reward('motif_count', {'motif': list(motif)}, black_box=black_box, K=K)


def two_mode_policy(T=4, hidden=(8,), seed=0):
    schedule = make_continuous_schedule(T)
    mixture = GaussianMixture(weights=[0.5, 0.5], means=[[-2.0, 0.0], [2.0, 0.0]], stds=[0.5, 0.5])
    return ContinuousPolicy.pretrained(schedule, mixture, hidden, RngStream(seed))


def perturb(policy, scale=0.1, seed=11):
    """Desloca todos os parâmetros para sair do ponto em que o residual é nulo."""
    rng = RngStream(seed)
    for p in policy.parameters():
        p += scale * rng.normal(p.shape)
    return policy
