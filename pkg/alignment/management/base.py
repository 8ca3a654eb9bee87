# dav_lab/alignment/management/base.py

from django.core.management.base import BaseCommand, CommandError

from alignment.exceptions import AlignmentError
from alignment.models import ExperimentRun
from alignment.serializers import apply_overrides, parse_config, read_payload


class ExperimentCommand(BaseCommand):
    """Base dos subcomandos: --config, --seed e --out, com erros do domínio virando CommandError."""

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help="Arquivo JSON da configuração do experimento.")
        parser.add_argument('--seed', type=int, default=None, help="Sobrescreve a seed da configuração.")
        parser.add_argument('--out', default=None, help="Diretório da execução (padrão: DAV_RUNS_DIR/<nome>).")

    def load_payload(self, options, variant=None):
        """Devolve (payload com overrides, ExperimentConfig validado); nada é calculado antes disso."""
        try:
            payload = apply_overrides(
                read_payload(options['config']), seed=options['seed'], out=options['out'], variant=variant,
            )
            return payload, parse_config(payload)
        except AlignmentError as exc:
            raise CommandError(str(exc)) from exc

    def register_run(self, payload, cfg, command, resume=None):
        return ExperimentRun.objects.create(
            name=cfg.name,
            command=command,
            kind=cfg.world.kind,
            variant=cfg.variant if command == 'align' else 'ablate',
            seed=cfg.seed,
            config=payload,
            config_hash=cfg.config_hash,
            resume_from=str(resume or ''),
        )

    def dispatch_run(self, run, run_async):
        """Enfileira no Celery (--async) ou executa a mesma tarefa no processo atual."""
        from alignment.tasks import execute_experiment_run

        if run_async:
            execute_experiment_run.delay(run.pk)
            self.stdout.write(self.style.SUCCESS(f"Execução {run.pk} ('{run.name}') enfileirada."))
            return run
        try:
            execute_experiment_run(run.pk)
        except Exception as exc:
            raise CommandError(f"Execução {run.pk} ('{run.name}') falhou: {exc}") from exc
        run.refresh_from_db()
        if run.status != 'COMPLETED':
            raise CommandError(f"Execução {run.pk} ('{run.name}') falhou: {run.error_message}")
        return run
