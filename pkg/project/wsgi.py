"""
WSGI entry point for the measure-data laboratory service.

Exposes ``application`` for WSGI servers; the REST surface lives under ``/lab/``.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'project.settings')

application = get_wsgi_application()
