"""
WSGI config for lab_system project (admin do registro de execuções).
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'lab_system.settings')

application = get_wsgi_application()
