# dav_lab/alignment/discrete.py

"""
Mundo discreto: difusão mascarada sobre sequências de tamanho L com vocabulário
K mais o token MASK (índice K), processo reverso SUBS e denoisers tabular ou MLP.
"""

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax
from scipy.special import softmax as scipy_softmax

from .exceptions import DomainError, OracleUnavailableError, UnreachableTransitionError
from .mstep import AdamOptimizer
from .numkit import check_finite, inverse_cdf_rows, make_mlp, mlp_backward, mlp_forward
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_CAP = 20000
MASK_CHAR = '_'


# ==============================================================================
# 1. ESTADOS, CODIFICAÇÃO E ENUMERAÇÃO
# ==============================================================================
def mask_token(K):
    return K


@dataclass(frozen=True)
class SeqState:
    tokens: np.ndarray
    t: int

    def __post_init__(self):
        object.__setattr__(self, 'tokens', np.asarray(self.tokens, dtype=np.int64))

    def is_consistent(self, K, T):
        masked = self.tokens == K
        if self.t == T:
            return bool(np.all(masked))
        if self.t == 0:
            return not bool(np.any(masked))
        return True


def _check_enumerable(L, K, cap, base=None):
    size = (K + 1 if base is None else base) ** L
    if size > cap:
        raise OracleUnavailableError(f"{size} estados excedem o limite de enumeração {cap}.")
    return size


def encode_states(tokens, K):
    """Índice de base (K+1); a posição 0 é o dígito mais significativo."""
    tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
    L = tokens.shape[1]
    powers = (K + 1) ** np.arange(L - 1, -1, -1, dtype=np.int64)
    return tokens @ powers


def decode_states(indices, L, K):
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    powers = (K + 1) ** np.arange(L - 1, -1, -1, dtype=np.int64)
    return (indices[:, None] // powers[None, :]) % (K + 1)


def enumerate_states(L, K, t=None, T=None, cap=DEFAULT_ENUMERATION_CAP):
    """
    Todos os arrays de tokens sobre {0..K-1, MASK} em ordem de índice.
    Com t=0 só sequências sem MASK; com t=T só a sequência toda mascarada.
    """
    size = _check_enumerable(L, K, cap)
    states = decode_states(np.arange(size), L, K)
    if t == 0:
        states = states[np.all(states != K, axis=1)]
    elif T is not None and t == T:
        states = states[np.all(states == K, axis=1)]
    return states


def one_hot_states(tokens, K):
    """Codificação relaxada: (n, L) -> (n, L, K+1)."""
    tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
    return np.eye(K + 1)[tokens]


def tokens_to_text(tokens, alphabet):
    return ''.join(MASK_CHAR if tok == len(alphabet) else alphabet[tok] for tok in tokens)


def text_to_tokens(text, alphabet):
    try:
        return np.array([len(alphabet) if ch == MASK_CHAR else alphabet.index(ch) for ch in text],
                        dtype=np.int64)
    except ValueError as exc:
        raise DomainError(f"Sequência '{text}' usa caracteres fora do alfabeto '{alphabet}'.") from exc


# ==============================================================================
# 2. DENOISERS
# ==============================================================================
class TabularDenoiser:
    """Mapa completo (sequência mascarada, t) -> logits (L, K); tabela (S, T, L, K)."""
    variant = 'tabular'

    def __init__(self, L, K, T, table=None, cap=DEFAULT_ENUMERATION_CAP):
        self.L, self.K, self.T = L, K, T
        size = _check_enumerable(L, K, cap)
        self.table = np.zeros((size, T, L, K)) if table is None else np.asarray(table, dtype=np.float64)
        if self.table.shape != (size, T, L, K):
            raise DomainError(f"Tabela com shape {self.table.shape}, esperado {(size, T, L, K)}.")

    def parameters(self):
        return [self.table]

    def copy(self):
        denoiser = TabularDenoiser.__new__(TabularDenoiser)
        denoiser.L, denoiser.K, denoiser.T = self.L, self.K, self.T
        denoiser.table = self.table.copy()
        return denoiser

    def logits_batch(self, tokens, t):
        return self.table[encode_states(tokens, self.K), t - 1]

    def accumulate_grads(self, grads, tokens, t, upstream):
        np.add.at(grads[0], (encode_states(tokens, self.K), t - 1), upstream)

    def input_grads(self, tokens, t, upstream):
        """A tabela é constante por partes na codificação one-hot: Jacobiano nulo."""
        tokens = np.atleast_2d(tokens)
        return np.zeros(tokens.shape + (self.K + 1,))


class MlpDenoiser:
    """One-hot L(K+1) + t/T -> logits L·K."""
    variant = 'mlp'

    def __init__(self, L, K, T, net):
        if net.n_in != L * (K + 1) + 1 or net.n_out != L * K:
            raise DomainError(f"MLP do denoiser com larguras {net.widths} incompatíveis com L={L}, K={K}.")
        self.L, self.K, self.T = L, K, T
        self.net = net

    @classmethod
    def initialize(cls, L, K, T, hidden, rng, activation='tanh'):
        widths = (L * (K + 1) + 1, *hidden, L * K)
        return cls(L, K, T, make_mlp(widths, rng, activation=activation, final_scale=1.0))

    def parameters(self):
        return self.net.parameters()

    def copy(self):
        return MlpDenoiser(self.L, self.K, self.T, self.net.copy())

    def _inputs(self, tokens, t):
        flat = one_hot_states(tokens, self.K).reshape(len(tokens), -1)
        return np.hstack([flat, np.full((len(tokens), 1), t / self.T)])

    def logits_batch(self, tokens, t):
        tokens = np.atleast_2d(tokens)
        out = mlp_forward(self.net, self._inputs(tokens, t))
        return out.reshape(len(tokens), self.L, self.K)

    def accumulate_grads(self, grads, tokens, t, upstream):
        tokens = np.atleast_2d(tokens)
        param_grads, _ = mlp_backward(self.net, self._inputs(tokens, t), upstream.reshape(len(tokens), -1))
        for acc, g in zip(grads, param_grads):
            acc += g

    def input_grads(self, tokens, t, upstream):
        """Gradiente em relação à entrada one-hot (n, L, K+1); a coordenada t/T é descartada."""
        tokens = np.atleast_2d(tokens)
        _, input_grad = mlp_backward(self.net, self._inputs(tokens, t), upstream.reshape(len(tokens), -1))
        return input_grad[:, :self.L * (self.K + 1)].reshape(len(tokens), self.L, self.K + 1)


def x0hat_probs(denoiser, tokens, t):
    """
    Distribuição x̂0 por posição (n, L, K). Posições desmascaradas recebem massa
    pontual no token observado.
    """
    tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
    K = denoiser.K
    masked = tokens == K
    point = np.eye(K)[np.where(masked, 0, tokens)]
    if t == 0 or not np.any(masked):
        return point
    probs = scipy_softmax(check_finite(denoiser.logits_batch(tokens, t), 'logits'), axis=-1)
    return np.where(masked[..., None], probs, point)


def subs_coefficients(schedule, s, t):
    """(prob. de continuar MASK, prob. total de emitir um token) para uma posição mascarada."""
    if not s < t:
        raise DomainError(f"Passo reverso exige s < t, recebido s={s}, t={t}.")
    alpha_s, alpha_t = schedule.alpha_bar(s), schedule.alpha_bar(t)
    denom = 1.0 - alpha_t
    return (1.0 - alpha_s) / denom, (alpha_s - alpha_t) / denom


def subs_probs(denoiser, schedule, tokens, s, t):
    """Probabilidades de transição SUBS (n, L, K+1) sobre {0..K-1, MASK}."""
    tokens = np.atleast_2d(np.asarray(tokens, dtype=np.int64))
    K = denoiser.K
    c_mask, c_emit = subs_coefficients(schedule, s, t)
    masked = tokens == K
    out = np.zeros(tokens.shape + (K + 1,))
    out[..., :K] = c_emit * x0hat_probs(denoiser, tokens, t)
    out[..., K] = c_mask
    carry = np.eye(K + 1)[tokens]
    return np.where(masked[..., None], out, carry)


def forward_mask_sample(x0, t, rng, schedule, K):
    """Cada posição é mantida com probabilidade ᾱ_t, senão vira MASK."""
    tokens = np.asarray(x0, dtype=np.int64)
    if np.any(tokens == K):
        raise DomainError("forward_mask_sample exige x0 sem MASK.")
    alpha_bar = schedule.alpha_bar(t)
    keep = rng.random(tokens.shape) < alpha_bar
    return np.where(keep, tokens, K)


# ==============================================================================
# 3. POLÍTICA DISCRETA
# ==============================================================================
class DiscretePolicy:
    kind = 'discrete'

    def __init__(self, schedule, denoiser, version=0):
        if denoiser.T != schedule.T:
            raise DomainError(f"Denoiser com T={denoiser.T} e cronograma com T={schedule.T}.")
        self.schedule = schedule
        self.denoiser = denoiser
        self.version = version

    @property
    def T(self):
        return self.schedule.T

    @property
    def L(self):
        return self.denoiser.L

    @property
    def K(self):
        return self.denoiser.K

    def parameters(self):
        return self.denoiser.parameters()

    def zero_grads(self):
        return [np.zeros_like(p) for p in self.parameters()]

    def snapshot(self):
        return DiscretePolicy(self.schedule, self.denoiser.copy(), self.version)

    def initial_state(self, rng=None):
        return np.full(self.L, self.K, dtype=np.int64)

    def x0hat_batch(self, tokens, t):
        return x0hat_probs(self.denoiser, tokens, t)

    def step_probs(self, tokens, t):
        return subs_probs(self.denoiser, self.schedule, tokens, t - 1, t)

    def guidance_gradient(self, xt, t, reward, jacobian='exact'):
        """
        ∇ de r(x̂0) na codificação one-hot relaxada E (L, K+1), com
        x̂0_ℓ(E) = E_ℓ[:K] + E_ℓ[MASK]·softmax(f(E))_ℓ, que coincide com x̂0 nos vértices.
        Com jacobian='stop_gradient' a dependência do denoiser na entrada é ignorada.
        """
        tokens = np.asarray(xt, dtype=np.int64)
        masked = tokens == self.K
        x0hat = self.x0hat_batch(tokens[None, :], t)[0]
        g = np.asarray(reward.grad(x0hat), dtype=np.float64)[:, :self.K]
        predicted = scipy_softmax(self.denoiser.logits_batch(tokens[None, :], t)[0], axis=-1)
        expected = np.sum(predicted * g, axis=-1)
        grad = np.concatenate([g, expected[:, None]], axis=-1)
        if jacobian == 'exact' and np.any(masked):
            upstream = np.where(masked[:, None], predicted * (g - expected[:, None]), 0.0)
            grad = grad + self.denoiser.input_grads(tokens[None, :], t, upstream[None])[0]
        return check_finite(grad, 'guidance_gradient')

    # --- densidades ---------------------------------------------------------------
    def _transition_logprobs(self, probs, Xprev, Xt, t):
        chosen = np.take_along_axis(probs, Xprev[..., None], axis=-1)[..., 0]
        if np.any(chosen <= 0.0):
            bad = np.argwhere(chosen <= 0.0)[0]
            raise UnreachableTransitionError(
                f"Transição inalcançável em t={t}: posição {bad[-1]} de "
                f"{Xt[bad[0]].tolist()} para {Xprev[bad[0]].tolist()}."
            )
        return np.log(chosen).sum(axis=-1)

    def logprob_batch(self, Xt, Xprev, t):
        Xt = np.atleast_2d(np.asarray(Xt, dtype=np.int64))
        Xprev = np.atleast_2d(np.asarray(Xprev, dtype=np.int64))
        return self._transition_logprobs(self.step_probs(Xt, t), Xprev, Xt, t)

    def step_logprob(self, xt, xprev, t):
        return float(self.logprob_batch(xt, xprev, t)[0])

    def accumulate_logprob_grads(self, grads, Xt, Xprev, t, coef):
        """∂ log p / ∂ logits = onehot - softmax nas posições que emitem um token."""
        Xt = np.atleast_2d(np.asarray(Xt, dtype=np.int64))
        Xprev = np.atleast_2d(np.asarray(Xprev, dtype=np.int64))
        logps = self._transition_logprobs(self.step_probs(Xt, t), Xprev, Xt, t)
        emits = (Xt == self.K) & (Xprev != self.K)
        if np.any(emits):
            probs = scipy_softmax(self.denoiser.logits_batch(Xt, t), axis=-1)
            onehot = np.eye(self.K)[np.where(emits, Xprev, 0)]
            upstream = np.where(emits[..., None], onehot - probs, 0.0) * coef[:, None, None]
            self.denoiser.accumulate_grads(grads, Xt, t, upstream)
        return logps

    def kl_batch(self, anchor, Xt, t):
        """Σ_posições mascaradas c_emit · KL(x̂0_θ ‖ x̂0_θ⁰)."""
        Xt = np.atleast_2d(np.asarray(Xt, dtype=np.int64))
        masked = Xt == self.K
        _, c_emit = subs_coefficients(self.schedule, t - 1, t)
        log_p = log_softmax(self.denoiser.logits_batch(Xt, t), axis=-1)
        log_q = log_softmax(anchor.denoiser.logits_batch(Xt, t), axis=-1)
        p = np.exp(log_p)
        per_position = np.sum(p * (log_p - log_q), axis=-1)
        per_position = np.where(masked, per_position, 0.0)
        return c_emit * per_position.sum(axis=-1), (p, log_p, log_q, per_position, masked, c_emit)

    def accumulate_kl_grads(self, grads, anchor, Xt, t, coef):
        Xt = np.atleast_2d(np.asarray(Xt, dtype=np.int64))
        kls, (p, log_p, log_q, per_position, masked, c_emit) = self.kl_batch(anchor, Xt, t)
        upstream = c_emit * p * ((log_p - log_q) - per_position[..., None])
        upstream = np.where(masked[..., None], upstream, 0.0) * coef[:, None, None]
        self.denoiser.accumulate_grads(grads, Xt, t, upstream)
        return kls

    # --- amostragem -------------------------------------------------------------------
    def rollout(self, rng, n):
        if n < 1:
            raise DomainError("rollout exige n >= 1.")
        T = self.T
        uniforms = np.stack([rng.child(i).random((T, self.L)) for i in range(n)])
        X = np.full((n, self.L), self.K, dtype=np.int64)
        states = [X]
        logps = np.zeros((n, T))
        for t in range(T, 0, -1):
            probs = self.step_probs(X, t)
            Xprev = inverse_cdf_rows(probs, uniforms[:, T - t, :])
            logps[:, T - t] = self._transition_logprobs(probs, Xprev, X, t)
            X = Xprev
            states.append(X)
        return [
            Trajectory(
                states=[s[i].copy() for s in states],
                version=self.version,
                prior_logprobs=logps[i].copy(),
                proposal_logprobs=logps[i].copy(),
                log_weights=np.zeros(T),
                log_mean_weights=np.zeros(T),
            )
            for i in range(n)
        ]


def subs_reverse_step(denoiser, schedule, xt, s, t, rng):
    tokens = np.asarray(xt, dtype=np.int64)
    probs = subs_probs(denoiser, schedule, tokens[None, :], s, t)[0]
    return inverse_cdf_rows(probs, rng.random(tokens.shape[0]))


def policy_logprob_discrete(denoiser, schedule, xt, xprev, s, t):
    """Σ_posições log prob da transição; transições fora do suporte SUBS levantam erro."""
    tokens = np.asarray(xt, dtype=np.int64)
    probs = subs_probs(denoiser, schedule, tokens[None, :], s, t)[0]
    chosen = probs[np.arange(tokens.shape[0]), np.asarray(xprev, dtype=np.int64)]
    if np.any(chosen <= 0.0):
        raise UnreachableTransitionError(
            f"Transição inalcançável de {tokens.tolist()} para {list(xprev)} (s={s}, t={t})."
        )
    return float(np.log(chosen).sum())


# ==============================================================================
# 4. ESTRUTURA DE SUCESSORES (ORÁCULOS)
# ==============================================================================
@dataclass(frozen=True)
class TransitionTable:
    """Transições de todos os estados no tempo t em formato CSR."""
    t: int
    offsets: np.ndarray     # (S+1,)
    next_index: np.ndarray  # (nnz,)
    log_probs: np.ndarray   # (nnz,)

    def row(self, state_index):
        lo, hi = self.offsets[state_index], self.offsets[state_index + 1]
        return self.next_index[lo:hi], self.log_probs[lo:hi]

    def source_index(self):
        return np.repeat(np.arange(self.offsets.size - 1), np.diff(self.offsets))


def transition_table(policy, t, cap=DEFAULT_ENUMERATION_CAP):
    states = enumerate_states(policy.L, policy.K, cap=cap)
    probs = policy.step_probs(states, t)
    offsets = [0]
    next_chunks, logp_chunks = [], []
    for i in range(states.shape[0]):
        supports = [np.flatnonzero(probs[i, l] > 0.0) for l in range(policy.L)]
        grid = np.array(list(itertools.product(*supports)), dtype=np.int64)
        logp = np.log(probs[i, np.arange(policy.L)[None, :], grid]).sum(axis=1)
        next_chunks.append(encode_states(grid, policy.K))
        logp_chunks.append(logp)
        offsets.append(offsets[-1] + grid.shape[0])
    return TransitionTable(
        t=t,
        offsets=np.asarray(offsets, dtype=np.int64),
        next_index=np.concatenate(next_chunks),
        log_probs=np.concatenate(logp_chunks),
    )


# ==============================================================================
# 5. DISTRIBUIÇÃO DE REFERÊNCIA E PRÉ-TREINO
# ==============================================================================
@dataclass(frozen=True)
class MotifMixture:
    """
    Mistura de motivos: escolhe o motivo m com peso w_m e troca cada token,
    independentemente, por um token uniforme com probabilidade noise.
    """
    motifs: np.ndarray   # (n_motifs, L)
    weights: np.ndarray
    noise: float
    K: int

    def __post_init__(self):
        motifs = np.atleast_2d(np.asarray(self.motifs, dtype=np.int64))
        weights = np.asarray(self.weights, dtype=np.float64)
        if motifs.shape[0] != weights.size or np.any(motifs < 0) or np.any(motifs >= self.K):
            raise DomainError("Motivos inválidos para a mistura de referência.")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise DomainError("Pesos dos motivos devem somar 1.")
        if not 0.0 <= self.noise <= 1.0:
            raise DomainError("Ruído dos motivos deve estar em [0, 1].")
        object.__setattr__(self, 'motifs', motifs)
        object.__setattr__(self, 'weights', weights / weights.sum())

    @property
    def L(self):
        return self.motifs.shape[1]

    def probabilities(self, sequences):
        sequences = np.atleast_2d(np.asarray(sequences, dtype=np.int64))
        match = sequences[:, None, :] == self.motifs[None, :, :]
        per_token = np.where(match, 1.0 - self.noise + self.noise / self.K, self.noise / self.K)
        return per_token.prod(axis=2) @ self.weights

    def support(self, cap=DEFAULT_ENUMERATION_CAP):
        size = _check_enumerable(self.L, self.K, cap, base=self.K)
        powers = self.K ** np.arange(self.L - 1, -1, -1, dtype=np.int64)
        sequences = (np.arange(size)[:, None] // powers[None, :]) % self.K
        return sequences, self.probabilities(sequences)

    def sample(self, n, rng):
        cumulative = np.cumsum(self.weights)
        chosen = np.minimum(np.searchsorted(cumulative, rng.random(n) * cumulative[-1], side='right'),
                            self.weights.size - 1)
        sequences = self.motifs[chosen].copy()
        flips = rng.random(sequences.shape) < self.noise
        sequences[flips] = rng.integers(0, self.K, size=int(flips.sum()))
        return sequences


def _mask_patterns(L):
    return np.array(list(itertools.product([False, True], repeat=L)), dtype=bool)


def _masked_views(sequences, weights, schedule, t, K):
    """Todas as combinações (sequência, padrão de máscara) com seu peso de probabilidade."""
    patterns = _mask_patterns(sequences.shape[1])
    alpha_bar = schedule.alpha_bar(t)
    n_masked = patterns.sum(axis=1)
    pattern_probs = alpha_bar ** (patterns.shape[1] - n_masked) * (1.0 - alpha_bar) ** n_masked
    tokens = np.where(patterns[None, :, :], K, sequences[:, None, :]).reshape(-1, sequences.shape[1])
    masks = np.broadcast_to(patterns[None], (sequences.shape[0],) + patterns.shape).reshape(tokens.shape)
    targets = np.repeat(sequences, patterns.shape[0], axis=0)
    combo_weights = (weights[:, None] * pattern_probs[None, :]).ravel()
    keep = combo_weights > 0
    return tokens[keep], masks[keep], targets[keep], combo_weights[keep]


def _dataset(sequences, weights):
    sequences = np.atleast_2d(np.asarray(sequences, dtype=np.int64))
    if sequences.shape[0] == 0 or sequences.size == 0:
        raise DomainError("Conjunto de dados de pré-treino vazio.")
    if weights is None:
        weights = np.full(sequences.shape[0], 1.0 / sequences.shape[0])
    weights = np.asarray(weights, dtype=np.float64)
    return sequences, weights / weights.sum()


def pretraining_loss(denoiser, schedule, sequences, weights=None):
    """
    Entropia cruzada mascarada exata, peso (ᾱ_{t-1} - ᾱ_t)/(1 - ᾱ_t) por passo,
    somando apenas posições mascaradas e enumerando os padrões de máscara.
    """
    sequences, weights = _dataset(sequences, weights)
    total = 0.0
    for t in range(1, schedule.T + 1):
        _, step_weight = subs_coefficients(schedule, t - 1, t)
        tokens, masks, targets, combo_weights = _masked_views(sequences, weights, schedule, t, denoiser.K)
        if not np.any(masks):
            continue
        log_p = log_softmax(denoiser.logits_batch(tokens, t), axis=-1)
        picked = np.take_along_axis(log_p, targets[..., None], axis=-1)[..., 0]
        total -= step_weight * float(np.sum(combo_weights[:, None] * np.where(masks, picked, 0.0)))
    return total


def _pretrain_tabular(denoiser, schedule, sequences, weights, smoothing):
    counts = np.zeros_like(denoiser.table)
    for t in range(1, schedule.T + 1):
        tokens, masks, targets, combo_weights = _masked_views(sequences, weights, schedule, t, denoiser.K)
        rows, positions = np.nonzero(masks)
        np.add.at(
            counts,
            (encode_states(tokens[rows], denoiser.K), t - 1, positions, targets[rows, positions]),
            combo_weights[rows],
        )
    smoothed = counts + smoothing
    denoiser.table = np.log(smoothed / smoothed.sum(axis=-1, keepdims=True))
    return denoiser


def _pretrain_mlp(denoiser, schedule, sequences, weights, epochs, rng, learning_rate, batch_size):
    optimizer = AdamOptimizer(learning_rate=learning_rate)
    steps_per_epoch = max(1, math.ceil(sequences.shape[0] / batch_size))
    cumulative = np.cumsum(weights)
    for epoch in range(epochs):
        for step in range(steps_per_epoch):
            stream = rng.child(epoch, step)
            picks = np.minimum(np.searchsorted(cumulative, stream.random(batch_size) * cumulative[-1],
                                               side='right'), sequences.shape[0] - 1)
            batch = sequences[picks]
            timesteps = stream.integers(1, schedule.T + 1, size=batch_size)
            grads = [np.zeros_like(p) for p in denoiser.parameters()]
            for t in np.unique(timesteps):
                rows = batch[timesteps == t]
                masks = stream.random(rows.shape) >= schedule.alpha_bar(int(t))
                if not np.any(masks):
                    continue
                tokens = np.where(masks, denoiser.K, rows)
                _, step_weight = subs_coefficients(schedule, int(t) - 1, int(t))
                probs = scipy_softmax(denoiser.logits_batch(tokens, int(t)), axis=-1)
                upstream = np.where(masks[..., None], probs - np.eye(denoiser.K)[rows], 0.0)
                denoiser.accumulate_grads(grads, tokens, int(t), upstream * step_weight / batch_size)
            optimizer.step(denoiser.parameters(), grads)
        logger.debug(f"Pré-treino MLP: época {epoch + 1}/{epochs} concluída.")
    return denoiser


def pretrain_discrete(denoiser, schedule, sequences, weights=None, epochs=1, rng=None,
                      learning_rate=1e-2, batch_size=64, smoothing=1e-4):
    """
    Treina uma cópia do denoiser pela entropia cruzada mascarada. O tabular usa o
    minimizador fechado (contagens ponderadas exatas); o MLP usa Adam.
    """
    sequences, weights = _dataset(sequences, weights)
    trained = denoiser.copy()
    if epochs == 0:
        return trained
    if trained.variant == 'tabular':
        return _pretrain_tabular(trained, schedule, sequences, weights, smoothing)
    if rng is None:
        raise DomainError("Pré-treino do MLP exige um RngStream.")
    return _pretrain_mlp(trained, schedule, sequences, weights, epochs, rng, learning_rate, batch_size)
