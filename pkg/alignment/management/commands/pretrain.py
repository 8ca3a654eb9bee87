from django.core.management.base import CommandError

from alignment.exceptions import AlignmentError
from alignment.management.base import ExperimentCommand
from alignment.runner import run_pretrain


class Command(ExperimentCommand):
    help = "Pré-treina o denoiser discreto na distribuição de motivos e grava pretrained.npz."

    def handle(self, *args, **options):
        _, cfg = self.load_payload(options)
        try:
            result = run_pretrain(cfg)
        except AlignmentError as exc:
            raise CommandError(str(exc)) from exc
        self.stdout.write(self.style.SUCCESS(
            f"Denoiser pré-treinado em {result.run_dir} (perda {result.extra['pretraining_loss']:.6f})."
        ))
