from alignment.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Executa o laço EM (E-step por busca + M-step por destilação) e grava métricas e checkpoints."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--resume', default=None, help="Checkpoint a partir do qual continuar.")
        parser.add_argument('--variant', default=None, choices=['dav', 'search_and_distill', 'reweight'])
        parser.add_argument('--async', action='store_true', dest='run_async', help="Enfileira no worker Celery.")

    def handle(self, *args, **options):
        payload, cfg = self.load_payload(options, variant=options['variant'])
        run = self.register_run(payload, cfg, 'align', resume=options['resume'])
        run = self.dispatch_run(run, options['run_async'])
        if options['run_async']:
            return
        last = run.epochs.order_by('-epoch').first()
        self.stdout.write(self.style.SUCCESS(
            f"'{cfg.name}' concluída em {run.run_dir}: época {last.epoch}, "
            f"ELBO {last.elbo_per_trajectory:.6f} ({last.estimator})."
        ))
