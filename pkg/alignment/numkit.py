# dav_lab/alignment/numkit.py

"""
Núcleo numérico mínimo: vetores/matrizes (arrays numpy com shape verificado),
reduções estáveis, amostradores, fluxos de RNG determinísticos e uma rede
feed-forward pequena com retropropagação derivada à mão.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.special import softmax as scipy_softmax

from .exceptions import DomainError


# ==============================================================================
# 1. TOLERÂNCIAS CENTRALIZADAS
# ==============================================================================
@dataclass(frozen=True)
class Tolerances:
    """Constantes de tolerância usadas em todo o pacote."""
    probability_sum: float = 1e-9       # desvio máximo de soma antes de renormalizar
    normalized_sum: float = 1e-12       # soma de distribuições já normalizadas
    finite_difference_step: float = 1e-5
    gradient_relative_error: float = 1e-4
    bellman_residual: float = 1e-10


TOLERANCES = Tolerances()


def check_finite(array, name='array'):
    array = np.asarray(array, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise DomainError(f"'{name}' contém valores não finitos.")
    return array


def as_vec(x, length=None, name='x'):
    """Converte para vetor float64 1-D, verificando tamanho e finitude."""
    vec = np.asarray(x, dtype=np.float64)
    if vec.ndim != 1:
        raise DomainError(f"'{name}' deve ser 1-D, recebido shape {vec.shape}.")
    if length is not None and vec.shape[0] != length:
        raise DomainError(f"'{name}' deve ter tamanho {length}, recebido {vec.shape[0]}.")
    return check_finite(vec, name)


# ==============================================================================
# 2. REDUÇÕES ESTÁVEIS
# ==============================================================================
def log_sum_exp(v):
    """log Σ exp(v_i) com deslocamento pelo máximo."""
    vec = np.asarray(v, dtype=np.float64).ravel()
    if vec.size == 0:
        raise DomainError("log_sum_exp de vetor vazio.")
    check_finite(vec, 'v')
    return float(logsumexp(vec))


def softmax(v):
    vec = np.asarray(v, dtype=np.float64)
    if vec.size == 0:
        raise DomainError("softmax de vetor vazio.")
    check_finite(vec, 'logits')
    probs = scipy_softmax(vec, axis=-1)
    return probs / probs.sum(axis=-1, keepdims=True)


def normalize_log_weights(log_weights):
    """
    Normaliza pesos em espaço log. Aceita -inf (massa zero), mas exige ao menos
    uma entrada finita. Retorna (pesos normalizados, log da soma).
    """
    log_w = np.asarray(log_weights, dtype=np.float64)
    if np.any(np.isnan(log_w)) or np.any(log_w == np.inf):
        raise DomainError("Pesos em log contêm NaN ou +inf.")
    if not np.any(np.isfinite(log_w)):
        raise DomainError("Todos os pesos em log são -inf.")
    total = float(logsumexp(log_w))
    weights = np.exp(log_w - total)
    return weights / weights.sum(), total


def gaussian_logpdf(x, mean, var):
    """Densidade log de N(mean, var·I) avaliada em x."""
    if var <= 0:
        raise DomainError(f"Variância deve ser positiva, recebido {var}.")
    diff = np.asarray(x, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    d = diff.shape[-1]
    return -0.5 * d * np.log(2.0 * np.pi * var) - 0.5 * np.sum(diff * diff, axis=-1) / var


# ==============================================================================
# 3. FLUXOS DE RNG (Philox, baseado em contador)
# ==============================================================================
class RngStream:
    """
    Fluxo de números aleatórios identificado por (seed, stream-id).

    O stream-id é uma tupla de inteiros usada como spawn_key do SeedSequence,
    então fluxos com ids distintos são independentes e a ordem em que são
    consumidos não altera os resultados.
    """

    def __init__(self, seed, *stream_id):
        if seed < 0:
            raise DomainError("A seed deve ser não negativa.")
        self.seed = int(seed)
        self.stream_id = tuple(int(i) for i in stream_id)
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.stream_id)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def child(self, *ids):
        return RngStream(self.seed, *self.stream_id, *ids)

    def random(self, size=None):
        return self._generator.random(size)

    def normal(self, size=None):
        return self._generator.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self._generator.integers(low, high, size=size)

    def describe(self):
        return {'seed': self.seed, 'stream_id': list(self.stream_id)}

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def _checked_probabilities(probs):
    p = np.asarray(probs, dtype=np.float64).ravel()
    if p.size == 0:
        raise DomainError("Distribuição categórica vazia.")
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise DomainError("Probabilidades negativas ou não finitas.")
    total = p.sum()
    if abs(total - 1.0) > TOLERANCES.probability_sum:
        raise DomainError(f"Probabilidades somam {total!r}, fora da tolerância.")
    return p / total


def sample_categorical(probs, rng):
    """Sorteia um índice i com probabilidade probs[i]."""
    p = _checked_probabilities(probs)
    cumulative = np.cumsum(p)
    index = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side='right'))
    return min(index, p.size - 1)


def sample_categorical_n(probs, rng, n):
    """Versão vetorizada: n sorteios independentes da mesma distribuição."""
    p = _checked_probabilities(probs)
    cumulative = np.cumsum(p)
    indices = np.searchsorted(cumulative, rng.random(n) * cumulative[-1], side='right')
    return np.minimum(indices, p.size - 1)


def inverse_cdf_rows(probs, uniforms):
    """
    Um sorteio por linha de probs (..., C) usando uniformes (...) já gerados.
    Cada linha é validada como em sample_categorical.
    """
    p = np.asarray(probs, dtype=np.float64)
    if np.any(~np.isfinite(p)) or np.any(p < 0):
        raise DomainError("Probabilidades negativas ou não finitas.")
    totals = p.sum(axis=-1)
    if np.any(np.abs(totals - 1.0) > TOLERANCES.probability_sum):
        raise DomainError("Linha de probabilidades fora da tolerância de soma.")
    cumulative = np.cumsum(p, axis=-1)
    targets = np.asarray(uniforms)[..., None] * cumulative[..., -1:]
    indices = np.sum(cumulative <= targets, axis=-1)
    return np.minimum(indices, p.shape[-1] - 1)


def sample_categorical_rows(probs, rng):
    p = np.asarray(probs, dtype=np.float64)
    return inverse_cdf_rows(p, rng.random(p.shape[:-1]))


# ==============================================================================
# 4. MLP COM RETROPROPAGAÇÃO MANUAL
# ==============================================================================
_ACTIVATIONS = {
    'tanh': (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    'relu': (lambda z: np.maximum(z, 0.0), lambda z: np.where(z > 0, 1.0, 0.0)),
    'identity': (lambda z: z, lambda z: np.ones_like(z)),
}


@dataclass
class Mlp:
    """Rede feed-forward densa. Pesos W_i têm shape (saída, entrada)."""
    widths: tuple
    weights: list = field(repr=False)
    biases: list = field(repr=False)
    activation: str = 'tanh'
    final_scale: float = 0.0

    @property
    def n_in(self):
        return self.widths[0]

    @property
    def n_out(self):
        return self.widths[-1]

    def parameters(self):
        """Lista [W0, b0, W1, b1, ...] com referências mutáveis."""
        params = []
        for W, b in zip(self.weights, self.biases):
            params.extend([W, b])
        return params

    def copy(self):
        return Mlp(
            widths=tuple(self.widths),
            weights=[W.copy() for W in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
            final_scale=self.final_scale,
        )


def make_mlp(widths, rng, activation='tanh', final_scale=0.0):
    """
    Inicializa uma MLP. A última camada é multiplicada por final_scale
    (0 por padrão, saída identicamente nula).
    """
    if activation not in _ACTIVATIONS:
        raise DomainError(f"Ativação desconhecida: {activation}")
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise DomainError(f"Larguras inválidas: {widths}")
    weights, biases = [], []
    n_layers = len(widths) - 1
    for i in range(n_layers):
        fan_in, fan_out = widths[i], widths[i + 1]
        scale = 1.0 / np.sqrt(fan_in)
        if i == n_layers - 1:
            scale *= final_scale
        weights.append(rng.normal((fan_out, fan_in)) * scale)
        biases.append(np.zeros(fan_out))
    return Mlp(tuple(widths), weights, biases, activation, final_scale)


def _check_input(net, x):
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != net.n_in or arr.ndim not in (1, 2):
        raise DomainError(f"Entrada com shape {arr.shape} incompatível com largura {net.n_in}.")
    return check_finite(arr, 'x')


def _forward_with_cache(net, x):
    act, _ = _ACTIVATIONS[net.activation]
    h = np.atleast_2d(x)
    inputs, pre_activations = [], []
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ W.T + b
        pre_activations.append(z)
        h = act(z) if i < last else z
    return h, inputs, pre_activations


def mlp_forward(net, x):
    arr = _check_input(net, x)
    out, _, _ = _forward_with_cache(net, arr)
    out = check_finite(out, 'mlp_output')
    return out[0] if arr.ndim == 1 else out


def mlp_backward(net, x, upstream):
    """
    Retorna (gradientes dos parâmetros na ordem de net.parameters(), gradiente da entrada).
    Para entradas em lote, os gradientes dos parâmetros são somados no lote.
    """
    arr = _check_input(net, x)
    _, dact = _ACTIVATIONS[net.activation]
    g = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    batch = 1 if arr.ndim == 1 else arr.shape[0]
    if g.shape != (batch, net.n_out):
        raise DomainError(f"Upstream com shape {np.shape(upstream)} incompatível com a saída.")

    _, inputs, pre_activations = _forward_with_cache(net, arr)
    last = len(net.weights) - 1
    grads = [None] * (2 * len(net.weights))
    for i in range(last, -1, -1):
        if i < last:
            g = g * dact(pre_activations[i])
        grads[2 * i] = g.T @ inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i]
    input_grad = g[0] if arr.ndim == 1 else g
    return grads, check_finite(input_grad, 'input_grad')
