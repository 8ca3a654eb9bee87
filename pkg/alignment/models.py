# dav_lab/alignment/models.py
import math
from dataclasses import asdict

from django.db import models
from django.utils import timezone

RUN_STATUS = [
    ('PENDING', 'Pendente'),
    ('RUNNING', 'Executando'),
    ('COMPLETED', 'Concluída'),
    ('FAILED', 'Falhou'),
]

RUN_COMMANDS = [
    ('align', 'Alinhamento (DAV)'),
    ('ablate', 'Ablação de E-step'),
]


# ==============================================================================
# 1. MODELO EXPERIMENTRUN (REGISTRO DE EXECUÇÕES)
# ==============================================================================
class ExperimentRun(models.Model):
    """
    Índice de uma execução do laboratório. Os artefatos (CSV, checkpoints,
    amostras) ficam em run_dir; o banco apenas os referencia.
    """
    name = models.CharField('Nome', max_length=100, help_text="Nome do experimento (campo 'name' da configuração)")
    command = models.CharField('Comando', max_length=20, choices=RUN_COMMANDS, default='align')
    kind = models.CharField('Mundo', max_length=20, help_text="continuous ou discrete")
    variant = models.CharField('Variante', max_length=30, default='dav')
    seed = models.PositiveIntegerField('Seed', default=0)
    config = models.JSONField('Configuração', help_text="Configuração resolvida (padrões incluídos)")
    config_hash = models.CharField('Hash da Configuração', max_length=64, db_index=True)
    run_dir = models.CharField('Diretório', max_length=500, blank=True, default='')
    resume_from = models.CharField('Retomar de', max_length=500, blank=True, default='')

    status = models.CharField(
        'Status',
        max_length=10,
        choices=RUN_STATUS,
        default='PENDING',
        help_text="Apenas execuções 'Pendente' são aceitas pelo worker."
    )
    error_message = models.TextField('Erro', blank=True, default='')

    created_at = models.DateTimeField(auto_now_add=True)
    started_at = models.DateTimeField('Início', null=True, blank=True)
    finished_at = models.DateTimeField('Fim', null=True, blank=True)

    def __str__(self):
        return f"{self.name} [{self.variant}, seed {self.seed}] ({self.status})"

    def mark_running(self, run_dir=''):
        self.status = 'RUNNING'
        self.started_at = timezone.now()
        self.run_dir = str(run_dir)
        self.save(update_fields=['status', 'started_at', 'run_dir'])

    def mark_finished(self, status, error_message=''):
        self.status = status
        self.error_message = error_message
        self.finished_at = timezone.now()
        self.save(update_fields=['status', 'error_message', 'finished_at'])

    def record_epoch(self, record, variant=None):
        """Grava (ou substitui) a linha de métricas da época; NaN vira NULL."""
        values = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(record).items()}
        epoch = values.pop('epoch')
        row, _ = EpochRecord.objects.update_or_create(
            run=self, variant=variant or self.variant, epoch=epoch, defaults=values,
        )
        return row

    class Meta:
        verbose_name = "Execução"
        verbose_name_plural = "Execuções"
        ordering = ['-created_at']


# ==============================================================================
# 2. MODELO EPOCHRECORD (UMA LINHA DO CSV DE MÉTRICAS)
# ==============================================================================
class EpochRecord(models.Model):
    run = models.ForeignKey(
        ExperimentRun,
        verbose_name='Execução',
        on_delete=models.CASCADE,
        related_name='epochs',
    )
    variant = models.CharField('Variante', max_length=30, default='dav')
    epoch = models.PositiveIntegerField('Época')

    # ELBO por trajetória
    elbo_per_trajectory = models.FloatField('ELBO')
    estimator = models.CharField('Estimador', max_length=20)
    elbo_samples = models.PositiveIntegerField('Amostras do ELBO', default=0)

    # Amostras amortizadas
    mean_reward = models.FloatField('Recompensa média', null=True, blank=True)
    reward_std = models.FloatField('Desvio da recompensa', null=True, blank=True)
    diversity = models.FloatField('Diversidade', null=True, blank=True)
    mode_coverage = models.FloatField('Cobertura de modos', null=True, blank=True)
    ngram1_corr = models.FloatField('Correlação 1-grama', null=True, blank=True)
    ngram2_corr = models.FloatField('Correlação 2-grama', null=True, blank=True)

    # E-step e M-step
    estep_mean_reward = models.FloatField('Recompensa do E-step', null=True, blank=True)
    weight_entropy = models.FloatField('Entropia dos pesos', null=True, blank=True)
    ess = models.FloatField('ESS', null=True, blank=True)
    fallbacks = models.PositiveIntegerField('Fallbacks', default=0)
    loss_before = models.FloatField('Perda antes', null=True, blank=True)
    loss_after = models.FloatField('Perda depois', null=True, blank=True)
    policy_version = models.PositiveIntegerField('Versão da política', default=0)

    def __str__(self):
        return f"{self.run.name} [{self.variant}] época {self.epoch}"

    class Meta:
        verbose_name = "Registro de Época"
        verbose_name_plural = "Registros de Época"
        ordering = ['run', 'variant', 'epoch']
        constraints = [
            models.UniqueConstraint(fields=['run', 'variant', 'epoch'], name='unique_epoch_per_variant'),
        ]
