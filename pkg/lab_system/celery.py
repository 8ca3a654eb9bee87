# dav_lab/lab_system/celery.py

import os

from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'lab_system.settings')

# Configurações prefixadas com CELERY_ no settings.py (ex: CELERY_BROKER_URL)
app = Celery('lab_system')
app.config_from_object('django.conf:settings', namespace='CELERY')

# Procura tasks.py em cada app registrado (alignment.tasks)
app.autodiscover_tasks()
