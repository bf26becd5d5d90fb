"""
ASGI entry point for the measure-data laboratory service.

Exposes ``application`` for ASGI servers; the REST surface lives under ``/lab/``.
"""

import os

from django.core.asgi import get_asgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'project.settings')

application = get_asgi_application()
