# dav_lab/alignment/trajectory.py

"""Trajetória de remoção de ruído x_T ... x_0 com a contabilidade por passo do E-step."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    """
    states[i] é o estado no tempo T - i, então states[0] = x_T e states[-1] = x_0.

    Os arrays por passo têm tamanho T e seguem a mesma ordem (passo t = T ... 1):
      prior_logprobs     log p_θ(x_{t-1} | x_t) sob o snapshot que gerou a trajetória
      proposal_logprobs  log η̂(x_{t-1} | x_t) da proposta usada
      log_weights        log w̃ normalizado da partícula escolhida
      log_mean_weights   log da média dos pesos não normalizados
    """
    states: list
    version: int
    reward: float = float('nan')
    prior_logprobs: np.ndarray = None
    proposal_logprobs: np.ndarray = None
    log_weights: np.ndarray = None
    log_mean_weights: np.ndarray = None
    num_particles: int = 1
    fallbacks: int = 0
    ess: list = field(default_factory=list)
    weight_entropy: list = field(default_factory=list)

    @property
    def T(self):
        return len(self.states) - 1

    @property
    def x0(self):
        return self.states[-1]

    def state_at(self, t):
        return self.states[self.T - t]

    def transitions(self):
        """Gera (t, x_t, x_{t-1}) para t = T ... 1."""
        for i in range(self.T):
            yield self.T - i, self.states[i], self.states[i + 1]

    def step_index(self, t):
        return self.T - t


def stack_states(trajectories, t):
    """Empilha x_t de um lote de trajetórias num array (B, ...)."""
    return np.stack([traj.state_at(t) for traj in trajectories])
