import json

from django.core.management.base import CommandError

from alignment.exceptions import AlignmentError
from alignment.management.base import ExperimentCommand
from alignment.runner import run_eval


class Command(ExperimentCommand):
    help = "Avalia um checkpoint: amostras amortizadas e, com --posterior, amostras da busca."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--n-samples', type=int, default=None, dest='n_samples')
        parser.add_argument('--posterior', action='store_true')

    def handle(self, *args, **options):
        _, cfg = self.load_payload(options)
        if options['n_samples'] is not None and options['n_samples'] < 1:
            raise CommandError("--n-samples deve ser >= 1.")
        try:
            result = run_eval(cfg, options['checkpoint'], n_samples=options['n_samples'], posterior=options['posterior'])
        except AlignmentError as exc:
            raise CommandError(str(exc)) from exc
        self.stdout.write(json.dumps(result.extra, indent=2, sort_keys=True))
        self.stdout.write(self.style.SUCCESS(f"Avaliação gravada em {result.run_dir}."))
