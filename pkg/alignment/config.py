# dav_lab/alignment/config.py

"""
Configuração de experimento já validada, em dataclasses imutáveis.

A validação (padrões por domínio e regras entre campos) fica em serializers.py;
aqui ficam apenas os tipos, a conversão a partir do payload validado e o hash
canônico usado por checkpoints.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from .discrete import DEFAULT_ENUMERATION_CAP
from .estep import EStepConfig
from .exceptions import ConfigError
from .mstep import MStepConfig

VARIANTS = ('dav', 'search_and_distill', 'reweight')
WORLD_KINDS = ('continuous', 'discrete')
DENOISERS = ('tabular', 'mlp')


# ==============================================================================
# 1. MUNDO
# ==============================================================================
@dataclass(frozen=True)
class MixtureConfig:
    weights: tuple
    means: tuple
    stds: tuple


@dataclass(frozen=True)
class ContinuousWorldConfig:
    T: int
    mixture: MixtureConfig
    beta_min: float = None
    beta_max: float = None
    hidden: tuple = (32, 32)
    activation: str = 'tanh'


@dataclass(frozen=True)
class PretrainingConfig:
    motifs: tuple
    weights: tuple
    noise: float = 0.1
    epochs: int = 1
    learning_rate: float = 1e-2
    batch_size: int = 64
    smoothing: float = 1e-4
    n_samples: int = 4096


@dataclass(frozen=True)
class DiscreteWorldConfig:
    L: int
    K: int
    T: int
    alphabet: str
    pretraining: PretrainingConfig
    denoiser: str = 'tabular'
    hidden: tuple = (64,)
    activation: str = 'tanh'
    pretrained_checkpoint: str = None


@dataclass(frozen=True)
class WorldConfig:
    kind: str
    continuous: ContinuousWorldConfig = None
    discrete: DiscreteWorldConfig = None

    @property
    def T(self):
        return self.spec.T

    @property
    def spec(self):
        return self.continuous if self.kind == 'continuous' else self.discrete


# ==============================================================================
# 2. RECOMPENSA, AVALIAÇÃO E EXPERIMENTO
# ==============================================================================
@dataclass(frozen=True)
class RewardConfig:
    name: str
    params: dict = field(default_factory=dict)
    black_box: bool = False


@dataclass(frozen=True)
class EvalConfig:
    n_samples: int = 256
    mode_radius: float = None
    checkpoint_every: int = 1
    elbo: str = 'auto'          # auto | exact | surrogate


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    world: WorldConfig
    reward: RewardConfig
    estep: EStepConfig
    mstep: MStepConfig
    epochs: int
    batch_size: int
    seed: int
    variant: str = 'dav'
    eval: EvalConfig = EvalConfig()
    out: str = None
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP

    def to_dict(self):
        return asdict(self)

    def canonical_json(self):
        payload = self.to_dict()
        payload.pop('out')
        return json.dumps(payload, sort_keys=True, separators=(',', ':'))

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode('utf-8')).hexdigest()

    def with_overrides(self, seed=None, out=None, variant=None):
        changes = {}
        if seed is not None:
            changes['seed'] = int(seed)
        if out is not None:
            changes['out'] = str(out)
        if variant is not None:
            if variant not in VARIANTS:
                raise ConfigError(f"variant: deve ser um de {VARIANTS}.")
            changes['variant'] = variant
        return replace(self, **changes) if changes else self

    @property
    def is_tabular_discrete(self):
        return self.world.kind == 'discrete' and self.world.discrete.denoiser == 'tabular'

    def uses_exact_elbo(self):
        if self.eval.elbo == 'auto':
            return self.is_tabular_discrete
        return self.eval.elbo == 'exact'


def require_enumerable(cfg, operation):
    """Oráculo e ELBO exato só existem para o mundo discreto tabular dentro do limite."""
    if not cfg.is_tabular_discrete:
        raise ConfigError(f"{operation} exige world.kind='discrete' com denoiser tabular.")
    spec = cfg.world.discrete
    if (spec.K + 1) ** spec.L > cfg.enumeration_cap:
        raise ConfigError(
            f"{operation}: (K+1)^L = {(spec.K + 1) ** spec.L} excede o limite de enumeração {cfg.enumeration_cap}."
        )


# ==============================================================================
# 3. CONVERSÃO DO PAYLOAD VALIDADO
# ==============================================================================
def _tuples(value):
    if isinstance(value, (list, tuple)):
        return tuple(_tuples(v) for v in value)
    return value


def _world_from_data(data):
    kind = data['kind']
    if kind == 'continuous':
        spec = dict(data['continuous'])
        mixture = MixtureConfig(**{k: _tuples(v) for k, v in spec.pop('mixture').items()})
        spec['hidden'] = _tuples(spec.get('hidden', (32, 32)))
        return WorldConfig(kind=kind, continuous=ContinuousWorldConfig(mixture=mixture, **spec))
    spec = dict(data['discrete'])
    pretraining = {k: _tuples(v) for k, v in spec.pop('pretraining').items()}
    spec['hidden'] = _tuples(spec.get('hidden', (64,)))
    return WorldConfig(kind=kind, discrete=DiscreteWorldConfig(pretraining=PretrainingConfig(**pretraining), **spec))


def experiment_from_data(data):
    """Constrói o ExperimentConfig a partir de `serializer.validated_data` (padrões já aplicados)."""
    try:
        return ExperimentConfig(
            name=data['name'],
            world=_world_from_data(data['world']),
            reward=RewardConfig(
                name=data['reward']['name'],
                params=dict(data['reward'].get('params', {})),
                black_box=data['reward'].get('black_box', False),
            ),
            estep=EStepConfig(**data['estep']),
            mstep=MStepConfig(**data['mstep']),
            epochs=data['epochs'],
            batch_size=data['batch_size'],
            seed=data['seed'],
            variant=data.get('variant', 'dav'),
            eval=EvalConfig(**data.get('eval', {})),
            out=data.get('out'),
            enumeration_cap=data.get('enumeration_cap', DEFAULT_ENUMERATION_CAP),
        )
    except TypeError as exc:
        raise ConfigError(f"Configuração com campos inesperados: {exc}") from exc
