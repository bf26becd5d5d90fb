import os
from typing import Any

from django.conf import settings

SETTINGS_MODULE = "project.settings"


def lab_setting(name: str) -> Any:
    """Return ``settings.PDE_LAB[name]``.

    ``project/settings.py`` holds every tunable and its ``PDE_LAB_<NAME>`` override.
    Outside ``manage.py`` the project settings module is loaded on first access.
    """
    if not settings.configured:
        os.environ.setdefault("DJANGO_SETTINGS_MODULE", SETTINGS_MODULE)
    table = settings.PDE_LAB
    if name not in table:
        raise KeyError(f"Unknown lab setting: {name}")
    return table[name]
