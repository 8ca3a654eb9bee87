# dav_lab/alignment/tasks.py

from celery import shared_task

from .exceptions import AlignmentError
from .models import ExperimentRun
from .runner import run_ablate, run_align, run_directory
from .serializers import parse_config
import logging

# Configuração de logger para melhor rastreamento no Celery Worker
logger = logging.getLogger(__name__)


# ==============================================================================
# TAREFA PRINCIPAL: EXECUTA UMA EXECUÇÃO REGISTRADA (ALIGN OU ABLATE)
# ==============================================================================
@shared_task
def execute_experiment_run(run_id):
    """
    Busca o ExperimentRun pelo ID, valida a configuração salva, executa o laço EM
    (ou a ablação) e grava cada linha de métricas como EpochRecord.
    """
    try:
        run = ExperimentRun.objects.get(pk=run_id)
    except ExperimentRun.DoesNotExist:
        logger.error(f"Execução com ID {run_id} não encontrada.")
        return

    # Só processa se a execução estiver PENDENTE.
    if run.status != 'PENDING':
        logger.warning(f"Execução {run.pk} ('{run.name}') não está PENDENTE. Pulando execução.")
        return

    try:
        cfg = parse_config(run.config)
    except AlignmentError as exc:
        logger.error(f"Configuração inválida na execução {run.pk}: {exc}")
        run.mark_finished('FAILED', str(exc))
        return

    suffix = 'ablate' if run.command == 'ablate' else None
    run.mark_running(run_directory(cfg, suffix=suffix))

    try:
        if run.command == 'ablate':
            result = run_ablate(cfg, on_record=lambda variant, record: run.record_epoch(record, variant))
        else:
            result = run_align(cfg, resume=run.resume_from or None, on_record=run.record_epoch)
    except AlignmentError as exc:
        logger.error(f"Execução {run.pk} ('{run.name}') falhou: {exc}")
        run.mark_finished('FAILED', str(exc))
        return
    except Exception as exc:
        # Erros inesperados (I/O, numpy) também encerram a execução como FALHA.
        logger.exception(f"Erro inesperado na execução {run.pk} ('{run.name}'): {exc}")
        run.mark_finished('FAILED', str(exc))
        raise

    run.mark_finished('COMPLETED')
    logger.info(f"Execução {run.pk} ('{run.name}') concluída em {result.run_dir}.")
    return str(result.run_dir)
