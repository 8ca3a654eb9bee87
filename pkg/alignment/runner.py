# dav_lab/alignment/runner.py

"""
Subcomandos do laboratório (pretrain, align, eval, oracle, ablate) sem
dependência do ORM: cada função recebe um ExperimentConfig validado, escreve
os artefatos no diretório da execução e devolve um resultado em memória.
"""

import csv
import json
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from django.conf import settings

from .checkpoints import Checkpoint, load_checkpoint, restore_parameters, save_checkpoint
from .config import require_enumerable
from .discrete import DiscretePolicy, encode_states, enumerate_states, tokens_to_text
from .estep import empirical_next_states, run_estep
from .evaluation import ElboRecord, elbo_by_path_enumeration, elbo_exact_tabular
from .exceptions import ConfigError, NonFiniteStateError
from .loop import (
    EVAL_STREAM, POSTERIOR_STREAM, WORLD_STREAM, resume_state, run_ablation, run_em, sample_metrics,
)
from .numkit import TOLERANCES, RngStream
from .sched import make_discrete_schedule
from .softq import SoftQConfig, bellman_residual, check_bounds, exact_soft_policy, exact_soft_tables
from .worlds import INIT_STREAM, build_denoiser, build_world

logger = logging.getLogger(__name__)

METRICS_FILE = 'metrics.csv'
CHECKPOINT_FILE = 'checkpoint.npz'
PRETRAINED_FILE = 'pretrained.npz'
LOCK_FILE = '.lock'
ORACLE_PARTICLES = (1, 4, 16, 64)


@dataclass
class RunResult:
    run_dir: Path
    records: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


# ==============================================================================
# 1. DIRETÓRIO DA EXECUÇÃO E ARTEFATOS
# ==============================================================================
def run_directory(cfg, suffix=None):
    if cfg.out:
        return Path(cfg.out)
    name = f"{cfg.name}-{suffix or cfg.variant}-seed{cfg.seed}"
    return Path(getattr(settings, 'DAV_RUNS_DIR', 'runs')) / name


@contextmanager
def owned_directory(path):
    """Uma execução é dona exclusiva do seu diretório enquanto roda."""
    path.mkdir(parents=True, exist_ok=True)
    lock = path / LOCK_FILE
    try:
        handle = open(lock, 'x')
    except FileExistsError as exc:
        raise ConfigError(f"Diretório {path} já está em uso por outra execução ({lock}).") from exc
    handle.close()
    try:
        yield path
    finally:
        lock.unlink(missing_ok=True)


def write_resolved_config(cfg, run_dir):
    payload = {'config_hash': cfg.config_hash, **cfg.to_dict()}
    (run_dir / 'config.json').write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n', encoding='utf-8')


def write_metrics(path, records):
    """CSV com cabeçalho fixo, floats com 17 dígitos significativos, sem timestamps."""
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(ElboRecord.header())
        for record in records:
            writer.writerow(record.as_row())


def dump_samples(path, world, samples):
    samples = np.asarray(samples)
    if world.kind == 'continuous':
        path = path.with_suffix('.csv')
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow([f'x{i + 1}' for i in range(samples.shape[1])])
            for row in samples:
                writer.writerow(['%.17g' % v for v in row])
    else:
        path = path.with_suffix('.txt')
        lines = [tokens_to_text(row, world.alphabet) for row in samples]
        path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return path


def _json_metrics(metrics):
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in metrics.items()}


# ==============================================================================
# 2. MUNDO
# ==============================================================================
def root_rng(cfg):
    """Raiz dos fluxos da execução: mundo, épocas, avaliação e posterior."""
    return RngStream(cfg.seed)


def world_rng(cfg):
    return root_rng(cfg).child(WORLD_STREAM)


def load_world(cfg):
    rng = world_rng(cfg)
    denoiser = None
    spec = cfg.world.discrete
    if cfg.world.kind == 'discrete' and spec.pretrained_checkpoint:
        checkpoint = load_checkpoint(spec.pretrained_checkpoint, kind='pretrain')
        denoiser = build_denoiser(spec, rng.child(INIT_STREAM), cfg.enumeration_cap)
        restore_parameters(DiscretePolicy(make_discrete_schedule(spec.T), denoiser), checkpoint)
        logger.info(f"Denoiser pré-treinado carregado de {spec.pretrained_checkpoint}.")
    return build_world(cfg, rng, denoiser)


# ==============================================================================
# 3. PRETRAIN
# ==============================================================================
def run_pretrain(cfg):
    if cfg.world.kind != 'discrete':
        raise ConfigError("pretrain só se aplica a world.kind='discrete' (o mundo contínuo é analítico).")
    run_dir = run_directory(cfg, suffix='pretrain')
    with owned_directory(run_dir):
        write_resolved_config(cfg, run_dir)
        world = build_world(cfg, world_rng(cfg))
        save_checkpoint(run_dir / PRETRAINED_FILE, Checkpoint(
            epoch=0, config_hash=cfg.config_hash, seed=cfg.seed, policy_version=0,
            parameters=world.prior.parameters(), kind='pretrain',
        ))
        rollouts = world.prior.rollout(RngStream(cfg.seed, EVAL_STREAM, 0), cfg.eval.n_samples)
        samples = [traj.x0 for traj in rollouts]
        metrics = sample_metrics(world, samples, cfg)
        report = {'pretraining_loss': world.pretraining_loss, **_json_metrics(metrics)}
        (run_dir / 'pretrain_report.json').write_text(json.dumps(report, indent=2, sort_keys=True) + '\n')
        dump_samples(run_dir / 'samples_pretrained', world, samples)
    logger.info(f"Pré-treino concluído em {run_dir}: perda {world.pretraining_loss:.6f}.")
    return RunResult(run_dir=run_dir, extra=report)


# ==============================================================================
# 4. ALIGN / ABLATE
# ==============================================================================
def _epoch_writer(cfg, run_dir, metrics_name, on_record):
    def on_epoch(state, record):
        write_metrics(run_dir / metrics_name, state.records)
        if state.epoch % cfg.eval.checkpoint_every == 0 or state.epoch == cfg.epochs:
            checkpoint = Checkpoint(
                epoch=state.epoch, config_hash=cfg.config_hash, seed=cfg.seed,
                policy_version=state.policy.version, parameters=state.policy.parameters(),
                optimizer_state=state.optimizer.state_dict(),
                records=[r.as_row() for r in state.records],
            )
            save_checkpoint(run_dir / 'checkpoints' / f'epoch_{state.epoch:04d}.npz', checkpoint)
            save_checkpoint(run_dir / CHECKPOINT_FILE, checkpoint)
        if on_record:
            on_record(record)
    return on_epoch


def _final_samples(world, state, cfg, run_dir, name):
    rollouts = state.policy.rollout(RngStream(cfg.seed, EVAL_STREAM, state.epoch), cfg.eval.n_samples)
    return dump_samples(run_dir / name, world, [traj.x0 for traj in rollouts])


def run_align(cfg, resume=None, threads=None, on_record=None):
    """
    Executa o laço EM completo. Erros de configuração surgem antes de qualquer
    cálculo; estado não finito aborta mantendo o último checkpoint bom.
    """
    threads = threads or getattr(settings, 'DAV_THREADS', 1)
    run_dir = run_directory(cfg)
    with owned_directory(run_dir):
        write_resolved_config(cfg, run_dir)
        world = load_world(cfg)
        state = None
        if resume is not None:
            checkpoint = load_checkpoint(resume, expected_hash=cfg.config_hash, kind='align')
            state = resume_state(world, cfg, checkpoint)
            logger.info(f"Retomando '{cfg.name}' da época {state.epoch} ({resume}).")
        logger.info(f"Execução '{cfg.name}' ({cfg.variant}, seed {cfg.seed}) iniciada em {run_dir}.")
        try:
            state = run_em(world, cfg, root_rng(cfg), threads=threads, state=state,
                           on_epoch=_epoch_writer(cfg, run_dir, METRICS_FILE, on_record))
        except NonFiniteStateError as exc:
            logger.error(f"Execução '{cfg.name}' abortada: {exc} Último checkpoint mantido em {run_dir}.")
            raise
        _final_samples(world, state, cfg, run_dir, 'samples')
    logger.info(f"Execução '{cfg.name}' concluída: {len(state.records)} linhas em {run_dir / METRICS_FILE}.")
    return RunResult(run_dir=run_dir, records=state.records)


def _variant_writer(run_dir, variant, on_record):
    def on_epoch(state, record):
        write_metrics(run_dir / f'metrics_{variant}.csv', state.records)
        if on_record:
            on_record(variant, record)
    return on_epoch


def run_ablate(cfg, variants=('dav', 'search_and_distill', 'reweight'), threads=None, on_record=None):
    """Todas as variantes no mesmo mundo, com as mesmas seeds e orçamento; um CSV por variante."""
    threads = threads or getattr(settings, 'DAV_THREADS', 1)
    run_dir = run_directory(cfg, suffix='ablate')
    results = {}
    with owned_directory(run_dir):
        write_resolved_config(cfg, run_dir)
        world = load_world(cfg)
        for variant in variants:
            writer = _variant_writer(run_dir, variant, on_record)
            if variant == 'dav':
                results[variant] = run_em(world, cfg, root_rng(cfg), threads=threads, on_epoch=writer).records
            else:
                results[variant] = run_ablation(variant, world, cfg, root_rng(cfg), threads=threads, on_epoch=writer)
        with open(run_dir / 'ablation_summary.csv', 'w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(['variant', 'final_epoch', 'elbo_per_trajectory', 'estimator', 'mean_reward'])
            for variant, records in results.items():
                last = records[-1]
                writer.writerow([variant, last.epoch, '%.17g' % last.elbo_per_trajectory,
                                 last.estimator, '%.17g' % last.mean_reward])
    logger.info(f"Ablação concluída em {run_dir}: {', '.join(results)}.")
    return RunResult(run_dir=run_dir, extra={'variants': results})


# ==============================================================================
# 5. EVAL
# ==============================================================================
def run_eval(cfg, checkpoint_path, n_samples=None, posterior=False):
    """Amostras amortizadas da política do checkpoint e, opcionalmente, amostras da busca (posterior)."""
    checkpoint = load_checkpoint(checkpoint_path, expected_hash=cfg.config_hash, kind='align')
    n = n_samples or cfg.eval.n_samples
    run_dir = Path(cfg.out) if cfg.out else Path(checkpoint_path).resolve().parent / f'eval_epoch{checkpoint.epoch:04d}'
    with owned_directory(run_dir):
        world = load_world(cfg)
        policy = restore_parameters(world.fresh_policy(), checkpoint)
        rollouts = policy.rollout(RngStream(cfg.seed, EVAL_STREAM, checkpoint.epoch), n)
        amortized = [traj.x0 for traj in rollouts]
        report = {
            'epoch': checkpoint.epoch,
            'n_samples': n,
            'amortized': _json_metrics(sample_metrics(world, amortized, cfg)),
        }
        dump_samples(run_dir / 'samples_amortized', world, amortized)
        if posterior:
            q_policy = world.prior if cfg.estep.x0hat_source == 'prior' else policy
            batch = run_estep(policy, world.reward, cfg.estep, RngStream(cfg.seed, POSTERIOR_STREAM, checkpoint.epoch),
                              batch_size=n, q_policy=q_policy, threads=getattr(settings, 'DAV_THREADS', 1))
            searched = [traj.x0 for traj in batch.trajectories]
            report['posterior'] = _json_metrics(sample_metrics(world, searched, cfg))
            report['posterior']['fallbacks'] = batch.fallbacks
            dump_samples(run_dir / 'samples_posterior', world, searched)
        (run_dir / 'eval_report.json').write_text(json.dumps(report, indent=2, sort_keys=True) + '\n')
    logger.info(f"Avaliação da época {checkpoint.epoch} gravada em {run_dir}.")
    return RunResult(run_dir=run_dir, extra=report)


# ==============================================================================
# 6. ORACLE
# ==============================================================================
@dataclass
class OracleCheck:
    name: str
    passed: bool
    detail: str


@dataclass
class OracleReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(check.passed for check in self.checks)

    def add(self, name, passed, detail):
        self.checks.append(OracleCheck(name, bool(passed), detail))
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, f"[oracle] {name}: {'OK' if passed else 'FALHOU'} ({detail})")

    def as_dict(self):
        return {'passed': self.passed, 'checks': [vars(c) for c in self.checks]}


def total_variation(samples, successors, probs, K):
    """TV entre a frequência empírica dos estados amostrados e a distribuição exata."""
    exact_index = encode_states(successors, K)
    sample_index = encode_states(samples, K)
    support = np.union1d(exact_index, sample_index)
    empirical = np.array([np.mean(sample_index == s) for s in support])
    exact = np.zeros(support.size)
    exact[np.searchsorted(support, exact_index)] = probs
    return 0.5 * float(np.abs(empirical - exact).sum())


def oracle_checks(world, cfg, repeats=10_000, particles=ORACLE_PARTICLES, tv_threshold=0.05):
    report = OracleReport()
    prior, reward, cap = world.prior, world.reward, cfg.enumeration_cap
    soft_cfg = SoftQConfig(cfg.estep.alpha, cfg.estep.gamma)
    tables = exact_soft_tables(prior, reward, soft_cfg, cap=cap)

    # Processo SUBS
    states = enumerate_states(prior.L, prior.K, cap=cap)
    worst = max(float(np.max(np.abs(prior.step_probs(states, t).sum(axis=-1) - 1.0))) for t in range(1, prior.T + 1))
    report.add('subs_normalization', worst <= TOLERANCES.normalized_sum, f"max |Σp - 1| = {worst:.3e}")

    # Bellman soft e condições terminais
    residual = bellman_residual(tables)
    report.add('soft_bellman', residual <= TOLERANCES.bellman_residual, f"resíduo máximo {residual:.3e}")
    terminal = bool(np.all(tables.v[0] == 0.0)) and np.array_equal(tables.q[1], tables.rewards[tables.transitions[1].next_index])
    report.add('terminal_conditions', terminal, "V*(x_0)=0 e Q*(x_1, x_0)=r(x_0)")

    # Limites do Q soft
    for gamma in sorted({0.8, 1.0, cfg.estep.gamma}):
        gamma_cfg = SoftQConfig(cfg.estep.alpha, gamma)
        bounds = check_bounds(exact_soft_tables(prior, reward, gamma_cfg, cap=cap), prior, cap=cap)
        report.add(f'soft_q_bounds[gamma={gamma:g}]', bounds.passed, bounds.summary())

    # V* não crescente em α
    wider = exact_soft_tables(prior, reward, SoftQConfig(2.0 * cfg.estep.alpha, cfg.estep.gamma), cap=cap)
    start = tables.initial_index()
    report.add('value_monotone_in_alpha', tables.v[prior.T][start] >= wider.v[prior.T][start] - 1e-12,
               f"V(α)={tables.v[prior.T][start]:.6f}, V(2α)={wider.v[prior.T][start]:.6f}")

    # ELBO com γ=1 contra enumeração de caminhos
    undiscounted = exact_soft_tables(prior, reward, SoftQConfig(cfg.estep.alpha, 1.0), cap=cap)
    dp = elbo_exact_tabular(prior, undiscounted, cap=cap)
    paths = elbo_by_path_enumeration(prior, undiscounted)
    gap = abs(dp - paths)
    report.add('elbo_reduction', gap <= 1e-10 * max(1.0, abs(paths)), f"DP {dp:.12f}, caminhos {paths:.12f}")

    # E-step contra η* exato no último passo
    x1 = np.full(prior.L, prior.K, dtype=np.int64)
    successors, probs = exact_soft_policy(tables, x1, 1)
    rng = RngStream(cfg.seed, POSTERIOR_STREAM)
    tvs = []
    for i, M in enumerate(particles):
        estep_cfg = replace(cfg.estep, num_particles=M)
        chosen = empirical_next_states(prior, x1, 1, reward, estep_cfg, rng.child(i), repeats, q_policy=prior)
        tvs.append(total_variation(chosen, successors, probs, prior.K))
    inversions = sum(b > a for a, b in zip(tvs, tvs[1:]))
    detail = ', '.join(f"M={M}: {tv:.4f}" for M, tv in zip(particles, tvs))
    report.add('estep_tv', tvs[-1] < tv_threshold, f"TV {detail}")
    report.add('estep_tv_decreasing', inversions <= 1, f"{inversions} inversões")
    return report


def run_oracle(cfg, repeats=10_000):
    require_enumerable(cfg, 'oracle')
    run_dir = run_directory(cfg, suffix='oracle')
    with owned_directory(run_dir):
        write_resolved_config(cfg, run_dir)
        world = load_world(cfg)
        report = oracle_checks(world, cfg, repeats=repeats)
        (run_dir / 'oracle_report.json').write_text(json.dumps(report.as_dict(), indent=2) + '\n')
    return RunResult(run_dir=run_dir, extra={'report': report})
