from django.conf import settings
from django.test import TestCase, override_settings

from lab.conf import lab_setting


class TestLabSetting(TestCase):
    def test_reads_the_project_table(self):
        self.assertEqual(lab_setting("ADM_GROWTH"), settings.PDE_LAB["ADM_GROWTH"])
        self.assertEqual(lab_setting("DIRAC_CAUCHY_TOL"), 0.15)

    def test_follows_overridden_settings(self):
        with override_settings(PDE_LAB={**settings.PDE_LAB, "ADM_TAU": 0.5}):
            self.assertEqual(lab_setting("ADM_TAU"), 0.5)

    def test_unknown_name(self):
        with self.assertRaises(KeyError):
            lab_setting("NEWTON_DAMPING")
