# Generated by Django 5.2.7 on 2026-10-19 10:00

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('name', models.CharField(help_text="Nome do experimento (campo 'name' da configuração)", max_length=100, verbose_name='Nome')),
                ('command', models.CharField(choices=[('align', 'Alinhamento (DAV)'), ('ablate', 'Ablação de E-step')], default='align', max_length=20, verbose_name='Comando')),
                ('kind', models.CharField(help_text='continuous ou discrete', max_length=20, verbose_name='Mundo')),
                ('variant', models.CharField(default='dav', max_length=30, verbose_name='Variante')),
                ('seed', models.PositiveIntegerField(default=0, verbose_name='Seed')),
                ('config', models.JSONField(help_text='Configuração resolvida (padrões incluídos)', verbose_name='Configuração')),
                ('config_hash', models.CharField(db_index=True, max_length=64, verbose_name='Hash da Configuração')),
                ('run_dir', models.CharField(blank=True, default='', max_length=500, verbose_name='Diretório')),
                ('resume_from', models.CharField(blank=True, default='', max_length=500, verbose_name='Retomar de')),
                ('status', models.CharField(choices=[('PENDING', 'Pendente'), ('RUNNING', 'Executando'), ('COMPLETED', 'Concluída'), ('FAILED', 'Falhou')], default='PENDING', help_text="Apenas execuções 'Pendente' são aceitas pelo worker.", max_length=10, verbose_name='Status')),
                ('error_message', models.TextField(blank=True, default='', verbose_name='Erro')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('started_at', models.DateTimeField(blank=True, null=True, verbose_name='Início')),
                ('finished_at', models.DateTimeField(blank=True, null=True, verbose_name='Fim')),
            ],
            options={
                'verbose_name': 'Execução',
                'verbose_name_plural': 'Execuções',
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='EpochRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('variant', models.CharField(default='dav', max_length=30, verbose_name='Variante')),
                ('epoch', models.PositiveIntegerField(verbose_name='Época')),
                ('elbo_per_trajectory', models.FloatField(verbose_name='ELBO')),
                ('estimator', models.CharField(max_length=20, verbose_name='Estimador')),
                ('elbo_samples', models.PositiveIntegerField(default=0, verbose_name='Amostras do ELBO')),
                ('mean_reward', models.FloatField(blank=True, null=True, verbose_name='Recompensa média')),
                ('reward_std', models.FloatField(blank=True, null=True, verbose_name='Desvio da recompensa')),
                ('diversity', models.FloatField(blank=True, null=True, verbose_name='Diversidade')),
                ('mode_coverage', models.FloatField(blank=True, null=True, verbose_name='Cobertura de modos')),
                ('ngram1_corr', models.FloatField(blank=True, null=True, verbose_name='Correlação 1-grama')),
                ('ngram2_corr', models.FloatField(blank=True, null=True, verbose_name='Correlação 2-grama')),
                ('estep_mean_reward', models.FloatField(blank=True, null=True, verbose_name='Recompensa do E-step')),
                ('weight_entropy', models.FloatField(blank=True, null=True, verbose_name='Entropia dos pesos')),
                ('ess', models.FloatField(blank=True, null=True, verbose_name='ESS')),
                ('fallbacks', models.PositiveIntegerField(default=0, verbose_name='Fallbacks')),
                ('loss_before', models.FloatField(blank=True, null=True, verbose_name='Perda antes')),
                ('loss_after', models.FloatField(blank=True, null=True, verbose_name='Perda depois')),
                ('policy_version', models.PositiveIntegerField(default=0, verbose_name='Versão da política')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='alignment.experimentrun', verbose_name='Execução')),
            ],
            options={
                'verbose_name': 'Registro de Época',
                'verbose_name_plural': 'Registros de Época',
                'ordering': ['run', 'variant', 'epoch'],
                'constraints': [models.UniqueConstraint(fields=('run', 'variant', 'epoch'), name='unique_epoch_per_variant')],
            },
        ),
    ]
