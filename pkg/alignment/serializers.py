# dav_lab/alignment/serializers.py

import json
import logging
from pathlib import Path

import numpy as np
from django.conf import settings
from rest_framework import serializers

from .config import DENOISERS, VARIANTS, WORLD_KINDS, experiment_from_data
from .discrete import MASK_CHAR
from .estep import JACOBIAN_MODES, X0HAT_SOURCES
from .exceptions import AlignmentError, ConfigError
from .mstep import KL_WEIGHTINGS
from .rewards import REWARD_REGISTRY, build_reward

logger = logging.getLogger(__name__)

# Padrões por domínio (continuous: um passo de destilação; discrete: dois passos, M=10)
DOMAIN_DEFAULTS = {
    'continuous': {'alpha': 0.005, 'gamma': 0.9, 'num_particles': 4, 'distillation_steps': 1},
    'discrete': {'alpha': 0.01, 'gamma': 1.0, 'num_particles': 10, 'distillation_steps': 2},
}
DAV_KL_COEFFICIENT = 0.01


# ==============================================================================
# 1. MUNDO
# ==============================================================================
class MixtureSerializer(serializers.Serializer):
    weights = serializers.ListField(child=serializers.FloatField(min_value=0.0), min_length=1)
    means = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=1), min_length=1,
    )
    stds = serializers.ListField(child=serializers.FloatField(), min_length=1)

    def validate(self, data):
        n = len(data['weights'])
        if len(data['means']) != n or len(data['stds']) != n:
            raise serializers.ValidationError("weights, means e stds devem ter o mesmo número de componentes.")
        if len({len(m) for m in data['means']}) != 1:
            raise serializers.ValidationError({'means': "Todas as médias devem ter a mesma dimensão."})
        if any(s <= 0 for s in data['stds']):
            raise serializers.ValidationError({'stds': "Desvios devem ser positivos."})
        if abs(sum(data['weights']) - 1.0) > 1e-12:
            raise serializers.ValidationError({'weights': f"Pesos devem somar 1, somam {sum(data['weights'])!r}."})
        return data


class ContinuousWorldSerializer(serializers.Serializer):
    T = serializers.IntegerField(min_value=1)
    mixture = MixtureSerializer()
    beta_min = serializers.FloatField(required=False, allow_null=True, default=None)
    beta_max = serializers.FloatField(required=False, allow_null=True, default=None)
    hidden = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False, default=[32, 32])
    activation = serializers.ChoiceField(choices=['tanh', 'relu'], required=False, default='tanh')

    def validate(self, data):
        if (data['beta_min'] is None) != (data['beta_max'] is None):
            raise serializers.ValidationError("beta_min e beta_max devem ser informados juntos.")
        if data['beta_min'] is not None and not 0 < data['beta_min'] <= data['beta_max'] < 1:
            raise serializers.ValidationError({'beta_max': "Exige 0 < beta_min <= beta_max < 1."})
        return data


class PretrainingSerializer(serializers.Serializer):
    motifs = serializers.ListField(child=serializers.CharField(), min_length=1)
    weights = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False)
    noise = serializers.FloatField(min_value=0.0, max_value=1.0, required=False, default=0.1)
    epochs = serializers.IntegerField(min_value=0, required=False, default=1)
    learning_rate = serializers.FloatField(min_value=0.0, required=False, default=1e-2)
    batch_size = serializers.IntegerField(min_value=1, required=False, default=64)
    smoothing = serializers.FloatField(min_value=0.0, required=False, default=1e-4)
    n_samples = serializers.IntegerField(min_value=1, required=False, default=4096)

    def validate(self, data):
        if 'weights' not in data:
            data['weights'] = [1.0 / len(data['motifs'])] * len(data['motifs'])
        if len(data['weights']) != len(data['motifs']) or sum(data['weights']) <= 0:
            raise serializers.ValidationError({'weights': "Um peso positivo por motivo."})
        total = sum(data['weights'])
        data['weights'] = [w / total for w in data['weights']]
        return data


class DiscreteWorldSerializer(serializers.Serializer):
    L = serializers.IntegerField(min_value=1)
    K = serializers.IntegerField(min_value=1)
    T = serializers.IntegerField(min_value=2)
    alphabet = serializers.CharField(required=False)
    pretraining = PretrainingSerializer()
    denoiser = serializers.ChoiceField(choices=DENOISERS, required=False, default='tabular')
    hidden = serializers.ListField(child=serializers.IntegerField(min_value=1), required=False, default=[64])
    activation = serializers.ChoiceField(choices=['tanh', 'relu'], required=False, default='tanh')
    pretrained_checkpoint = serializers.CharField(required=False, allow_null=True, default=None)

    def validate(self, data):
        alphabet = data.get('alphabet') or 'ABCDEFGHIJKLMNOPQRSTUVWXYZ'[:data['K']]
        if len(alphabet) != data['K'] or len(set(alphabet)) != data['K'] or MASK_CHAR in alphabet:
            raise serializers.ValidationError(
                {'alphabet': f"Deve ter {data['K']} caracteres distintos, sem '{MASK_CHAR}'."}
            )
        data['alphabet'] = alphabet
        motifs = []
        for motif in data['pretraining']['motifs']:
            if len(motif) != data['L'] or any(ch not in alphabet for ch in motif):
                raise serializers.ValidationError(
                    {'pretraining': f"Motivo '{motif}' deve ter L={data['L']} caracteres do alfabeto."}
                )
            motifs.append([alphabet.index(ch) for ch in motif])
        data['pretraining']['motifs'] = motifs
        return data


class WorldSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=WORLD_KINDS)
    continuous = ContinuousWorldSerializer(required=False)
    discrete = DiscreteWorldSerializer(required=False)

    def validate(self, data):
        if data['kind'] not in data:
            raise serializers.ValidationError({data['kind']: "Bloco obrigatório para este tipo de mundo."})
        other = 'discrete' if data['kind'] == 'continuous' else 'continuous'
        data.pop(other, None)
        return data


# ==============================================================================
# 2. RECOMPENSA, E-STEP, M-STEP, AVALIAÇÃO
# ==============================================================================
class RewardSerializer(serializers.Serializer):
    name = serializers.ChoiceField(choices=sorted(REWARD_REGISTRY))
    params = serializers.DictField(required=False, default=dict)
    black_box = serializers.BooleanField(required=False, default=False)


class EStepSerializer(serializers.Serializer):
    alpha = serializers.FloatField(required=False)
    gamma = serializers.FloatField(required=False)
    num_particles = serializers.IntegerField(min_value=1, required=False)
    guidance = serializers.BooleanField(required=False)
    x0hat_jacobian = serializers.ChoiceField(choices=JACOBIAN_MODES, required=False, default='exact')
    x0hat_source = serializers.ChoiceField(choices=X0HAT_SOURCES, required=False, default='prior')

    def validate_alpha(self, value):
        if not value > 0:
            raise serializers.ValidationError("α deve ser > 0.")
        return value

    def validate_gamma(self, value):
        if not 0 < value <= 1:
            raise serializers.ValidationError("γ deve estar em (0, 1].")
        return value


class MStepSerializer(serializers.Serializer):
    learning_rate = serializers.FloatField(min_value=0.0, required=False, default=1e-3)
    distillation_steps = serializers.IntegerField(min_value=1, required=False)
    kl_coefficient = serializers.FloatField(min_value=0.0, required=False, default=0.0)
    dav_kl = serializers.BooleanField(required=False, default=False, write_only=True)
    beta1 = serializers.FloatField(min_value=0.0, max_value=0.999999, required=False, default=0.9)
    beta2 = serializers.FloatField(min_value=0.0, max_value=0.999999, required=False, default=0.999)
    epsilon = serializers.FloatField(min_value=0.0, required=False, default=1e-8)
    kl_weighting = serializers.ChoiceField(choices=KL_WEIGHTINGS, required=False, default='uniform')


class EvalSerializer(serializers.Serializer):
    n_samples = serializers.IntegerField(min_value=1, required=False, default=256)
    mode_radius = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    checkpoint_every = serializers.IntegerField(min_value=1, required=False, default=1)
    elbo = serializers.ChoiceField(choices=['auto', 'exact', 'surrogate'], required=False, default='auto')


# ==============================================================================
# 3. EXPERIMENTO (REGRAS ENTRE CAMPOS)
# ==============================================================================
class ExperimentConfigSerializer(serializers.Serializer):
    name = serializers.CharField(required=False, default='experiment')
    world = WorldSerializer()
    reward = RewardSerializer()
    estep = EStepSerializer(required=False, default=dict)
    mstep = MStepSerializer(required=False, default=dict)
    epochs = serializers.IntegerField(min_value=0)
    batch_size = serializers.IntegerField(min_value=1)
    seed = serializers.IntegerField(min_value=0, required=False, default=0)
    variant = serializers.ChoiceField(choices=VARIANTS, required=False, default='dav')
    eval = EvalSerializer(required=False, default=dict)
    out = serializers.CharField(required=False, allow_null=True, default=None)
    enumeration_cap = serializers.IntegerField(min_value=1, required=False)

    def _fill_defaults(self, data):
        kind = data['world']['kind']
        defaults = DOMAIN_DEFAULTS[kind]
        estep = dict(EStepSerializer().to_internal_value({}) if not data.get('estep') else data['estep'])
        for key in ('alpha', 'gamma', 'num_particles'):
            estep.setdefault(key, defaults[key])
        estep.setdefault('x0hat_jacobian', 'exact')
        estep.setdefault('x0hat_source', 'prior')
        estep.setdefault('guidance', not data['reward']['black_box'])

        mstep = dict(MStepSerializer().to_internal_value({}) if not data.get('mstep') else data['mstep'])
        mstep.setdefault('distillation_steps', defaults['distillation_steps'])
        if mstep.pop('dav_kl', False) and mstep['kl_coefficient'] == 0:
            mstep['kl_coefficient'] = DAV_KL_COEFFICIENT
        mstep['gamma'] = estep['gamma']

        data['estep'] = estep
        data['mstep'] = mstep
        data['eval'] = dict(EvalSerializer().to_internal_value({}) if not data.get('eval') else data['eval'])
        data.setdefault('enumeration_cap', getattr(settings, 'DAV_ENUMERATION_CAP', 20000))
        return data

    def _check_reward(self, data):
        world = data['world']
        reward_cfg = data['reward']
        reward_cls = REWARD_REGISTRY[reward_cfg['name']]
        if reward_cls.domain != world['kind']:
            raise serializers.ValidationError(
                {'reward': f"Recompensa '{reward_cfg['name']}' é {reward_cls.domain}, mundo é {world['kind']}."}
            )
        K = world['discrete']['K'] if world['kind'] == 'discrete' else None
        try:
            reward = build_reward(reward_cfg['name'], reward_cfg['params'], reward_cfg['black_box'], K=K)
            if world['kind'] == 'continuous':
                origin = np.zeros(len(world['continuous']['mixture']['means'][0]))
                value = reward.value(origin)
                if not np.isfinite(value):
                    raise ConfigError("valor não finito na origem")
        except (AlignmentError, ValueError) as exc:
            raise serializers.ValidationError({'reward': f"Parâmetros inválidos: {exc}"})

    def validate(self, data):
        data = self._fill_defaults(data)
        self._check_reward(data)
        if data['estep']['guidance'] and data['reward']['black_box']:
            raise serializers.ValidationError(
                {'estep': "guidance exige recompensa diferenciável (reward.black_box=true)."}
            )
        if data['eval']['elbo'] == 'exact':
            world = data['world']
            if world['kind'] != 'discrete' or world['discrete']['denoiser'] != 'tabular':
                raise serializers.ValidationError({'eval': "ELBO exato exige mundo discreto tabular."})
        return data


# ==============================================================================
# 4. CARGA DE ARQUIVO
# ==============================================================================
def _flatten_errors(errors, prefix=''):
    messages = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            name = prefix if key == 'non_field_errors' else (f"{prefix}.{key}" if prefix else str(key))
            messages.extend(_flatten_errors(value, name))
    elif isinstance(errors, list):
        for value in errors:
            messages.extend(_flatten_errors(value, prefix))
    else:
        messages.append(f"{prefix or 'config'}: {errors}")
    return messages


def parse_config(payload):
    """Valida o payload (dict) e devolve um ExperimentConfig; erros viram ConfigError com o campo."""
    serializer = ExperimentConfigSerializer(data=payload)
    if not serializer.is_valid():
        messages = _flatten_errors(serializer.errors)
        raise ConfigError("; ".join(messages))
    return experiment_from_data(serializer.validated_data)


def read_payload(path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Não foi possível ler a configuração {path}: {exc}") from exc


def apply_overrides(payload, seed=None, out=None, variant=None):
    """Flags da linha de comando têm precedência sobre o arquivo."""
    payload = dict(payload)
    for key, value in (('seed', seed), ('out', out), ('variant', variant)):
        if value is not None:
            payload[key] = str(value) if key == 'out' else value
    return payload


def load_config(path, seed=None, out=None, variant=None):
    cfg = parse_config(apply_overrides(read_payload(path), seed=seed, out=out, variant=variant))
    logger.debug(f"Configuração {path} carregada (hash {cfg.config_hash[:12]}).")
    return cfg
