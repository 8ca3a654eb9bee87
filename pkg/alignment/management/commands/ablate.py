from alignment.management.base import ExperimentCommand


class Command(ExperimentCommand):
    help = "Compara DAV, search-and-distill e reweight no mesmo mundo, seeds e orçamento."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--async', action='store_true', dest='run_async', help="Enfileira no worker Celery.")

    def handle(self, *args, **options):
        payload, cfg = self.load_payload(options)
        run = self.register_run(payload, cfg, 'ablate')
        run = self.dispatch_run(run, options['run_async'])
        if options['run_async']:
            return
        for variant in ('dav', 'search_and_distill', 'reweight'):
            last = run.epochs.filter(variant=variant).order_by('-epoch').first()
            if last is not None:
                self.stdout.write(f"  {variant:<20} ELBO {last.elbo_per_trajectory:.6f}  recompensa {last.mean_reward}")
        self.stdout.write(self.style.SUCCESS(f"Ablação gravada em {run.run_dir}."))
