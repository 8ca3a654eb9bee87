# dav_lab/alignment/exceptions.py

"""
Hierarquia de exceções do laboratório de alinhamento.

Todas herdam de AlignmentError para que os comandos de gerenciamento e a tarefa
Celery possam tratá-las de forma uniforme.
"""


class AlignmentError(Exception):
    """Raiz de todos os erros do domínio."""


class DomainError(AlignmentError, ValueError):
    """Entrada numérica inválida (shape, probabilidades, valores não finitos)."""


class ConfigError(AlignmentError):
    """Configuração inválida. Sempre levantado antes de qualquer cálculo."""


class UnsupportedOperationError(AlignmentError):
    """Operação não suportada (ex: gradiente de recompensa caixa-preta)."""


class OracleUnavailableError(AlignmentError):
    """Instância grande demais para enumeração exata."""


class UnreachableTransitionError(AlignmentError):
    """Transição discreta fora do suporte do processo reverso SUBS."""


class DegenerateWeightsError(AlignmentError):
    """Todos os pesos de importância são -inf."""


class SnapshotMismatchError(AlignmentError):
    """Trajetórias geradas com uma versão de parâmetros diferente da esperada."""


class NonFiniteStateError(AlignmentError):
    """Perda, gradiente ou parâmetros não finitos durante o treino."""


class BoundViolationError(AlignmentError):
    """Valor de Q exato fora dos limites analíticos."""


class CheckpointError(AlignmentError):
    """Checkpoint ilegível, de versão incompatível ou com hash divergente."""
