# dav_lab/alignment/checkpoints.py

"""
Checkpoints autodescritivos em .npz: arrays de parâmetros e momentos do Adam em
float64 little-endian, mais um bloco JSON (versão do formato, hash da
configuração, época, seed, versão da política, linhas de métricas).
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
META_KEY = 'meta'


@dataclass
class Checkpoint:
    epoch: int
    config_hash: str
    seed: int
    policy_version: int
    parameters: list
    optimizer_state: dict = None
    records: list = field(default_factory=list)   # linhas do CSV (listas de str)
    kind: str = 'align'

    def meta(self):
        return {
            'format_version': FORMAT_VERSION,
            'kind': self.kind,
            'epoch': self.epoch,
            'config_hash': self.config_hash,
            'seed': self.seed,
            'policy_version': self.policy_version,
            'n_parameters': len(self.parameters),
            'optimizer_step': None if self.optimizer_state is None else self.optimizer_state['step_count'],
            'n_moments': 0 if self.optimizer_state is None else len(self.optimizer_state['m']),
            'records': self.records,
        }


def _f8(array):
    return np.ascontiguousarray(array, dtype='<f8')


def save_checkpoint(path, checkpoint):
    """Escrita atômica (arquivo temporário + os.replace), um único escritor por execução."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f'param_{i}': _f8(p) for i, p in enumerate(checkpoint.parameters)}
    if checkpoint.optimizer_state is not None:
        for i, (m, v) in enumerate(zip(checkpoint.optimizer_state['m'], checkpoint.optimizer_state['v'])):
            arrays[f'adam_m_{i}'] = _f8(m)
            arrays[f'adam_v_{i}'] = _f8(v)
    meta = json.dumps(checkpoint.meta(), sort_keys=True).encode('utf-8')
    arrays[META_KEY] = np.frombuffer(meta, dtype=np.uint8)

    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'wb') as handle:
        np.savez(handle, **arrays)
    os.replace(tmp, path)
    logger.info(f"Checkpoint da época {checkpoint.epoch} gravado em {path}.")
    return path


def load_checkpoint(path, expected_hash=None, kind=None):
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(archive[META_KEY].tobytes().decode('utf-8'))
            if meta.get('format_version') != FORMAT_VERSION:
                raise CheckpointError(
                    f"Versão de formato {meta.get('format_version')} em {path}, esperado {FORMAT_VERSION}."
                )
            parameters = [np.array(archive[f'param_{i}'], dtype=np.float64) for i in range(meta['n_parameters'])]
            optimizer_state = None
            if meta['optimizer_step'] is not None:
                optimizer_state = {
                    'step_count': meta['optimizer_step'],
                    'm': [np.array(archive[f'adam_m_{i}'], dtype=np.float64) for i in range(meta['n_moments'])],
                    'v': [np.array(archive[f'adam_v_{i}'], dtype=np.float64) for i in range(meta['n_moments'])],
                }
    except CheckpointError:
        raise
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"Checkpoint ilegível em {path}: {exc}") from exc

    if expected_hash is not None and meta['config_hash'] != expected_hash:
        raise CheckpointError(
            f"Hash da configuração diverge: checkpoint {meta['config_hash'][:12]}, atual {expected_hash[:12]}."
        )
    if kind is not None and meta['kind'] != kind:
        raise CheckpointError(f"Checkpoint do tipo '{meta['kind']}', esperado '{kind}'.")
    return Checkpoint(
        epoch=meta['epoch'], config_hash=meta['config_hash'], seed=meta['seed'],
        policy_version=meta['policy_version'], parameters=parameters,
        optimizer_state=optimizer_state, records=meta['records'], kind=meta['kind'],
    )


def restore_parameters(policy, checkpoint):
    """Copia os arrays do checkpoint para os parâmetros da política (in-place)."""
    params = policy.parameters()
    if len(params) != len(checkpoint.parameters):
        raise CheckpointError(f"Checkpoint com {len(checkpoint.parameters)} arrays, política com {len(params)}.")
    for target, source in zip(params, checkpoint.parameters):
        if target.shape != source.shape:
            raise CheckpointError(f"Shape {source.shape} no checkpoint, esperado {target.shape}.")
        target[...] = source
    policy.version = checkpoint.policy_version
    return policy
