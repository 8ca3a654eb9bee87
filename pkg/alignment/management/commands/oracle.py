from django.core.management.base import CommandError

from alignment.exceptions import AlignmentError
from alignment.management.base import ExperimentCommand
from alignment.runner import run_oracle


class Command(ExperimentCommand):
    help = "Verifica Q soft, limites, ELBO e convergência do E-step contra enumeração exata."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--repeats', type=int, default=10_000, help="Repetições por teste de TV do E-step.")

    def handle(self, *args, **options):
        _, cfg = self.load_payload(options)
        try:
            result = run_oracle(cfg, repeats=options['repeats'])
        except AlignmentError as exc:
            raise CommandError(str(exc)) from exc
        report = result.extra['report']
        for check in report.checks:
            style = self.style.SUCCESS if check.passed else self.style.ERROR
            self.stdout.write(style(f"{'OK ' if check.passed else 'FALHOU'} {check.name}: {check.detail}"))
        if not report.passed:
            raise CommandError(f"Oráculo falhou; relatório em {result.run_dir}.")
        self.stdout.write(self.style.SUCCESS(f"Todas as verificações passaram ({result.run_dir})."))
