import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase
from rest_framework.test import APIClient

from lab.models import RunLog
from lab.scenarios import run_scenario, to_jsonable


class TestScenarioViews(TestCase):
    def setUp(self):
        self.client = APIClient()

    def test_health(self):
        response = self.client.get('/lab/health/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['status'], 'ok')

    def test_solve(self):
        response = self.client.post('/lab/solve/', {"grid": {"n": 8}, "boundary_value": 1.0}, format='json')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['verdict'], 'converged')
        self.assertTrue(response.data['report']['converged'])
        self.assertEqual(RunLog.objects.count(), 1)
        self.assertEqual(RunLog.objects.get().kind, 'solve')

    def test_solve_rejects_a_tiny_grid(self):
        response = self.client.post('/lab/solve/', {"grid": {"n": 2}}, format='json')
        self.assertEqual(response.status_code, 400)
        self.assertIn('details', response.data)
        self.assertEqual(RunLog.objects.count(), 0)

    def test_measure_and_constant_are_exclusive(self):
        payload = {"grid": {"n": 8}, "boundary_value": 1.0,
                   "measure": {"atoms": [{"mass": 1.0, "s": 0.5}]}}
        response = self.client.post('/lab/solve/', payload, format='json')
        self.assertEqual(response.status_code, 400)

    def test_unknown_experiment(self):
        response = self.client.post('/lab/experiment/percolation/', {}, format='json')
        self.assertEqual(response.status_code, 400)

    def test_orlicz_norm_of_a_constant(self):
        payload = {"grid": {"n": 8}, "field": {"kind": "constant", "value": 0.0}}
        response = self.client.post('/lab/orlicz-norm/', payload, format='json')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.data['report']['value'], 0.0)

    def test_metrics_count_requests(self):
        before = self.client.get('/lab/metrics/').data['total_requests']
        self.client.post('/lab/solve/', {"grid": {"n": 2}}, format='json')
        after = self.client.get('/lab/metrics/').data
        self.assertEqual(after['total_requests'], before + 1)
        self.assertGreaterEqual(after['failed_runs'], 1)


class TestScenarios(TestCase):
    def test_non_finite_values_become_strings(self):
        self.assertEqual(to_jsonable({"a": float('inf'), "b": [float('nan'), 1]}),
                         {"a": "inf", "b": ["nan", 1]})

    def test_report_is_deterministic(self):
        config = {"grid": {"n": 8}, "measure": {"atoms": [{"mass": 0.5, "s": 1.5}]}}
        first = run_scenario('solve', config)
        second = run_scenario('solve', config)
        self.assertEqual(json.dumps(first.report, sort_keys=True), json.dumps(second.report, sort_keys=True))
        self.assertNotEqual(first.trace_id, second.trace_id)


class TestLabCommand(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def _config(self, payload):
        path = self.dir / 'config.json'
        path.write_text(json.dumps(payload))
        return str(path)

    def test_solve_writes_report_and_field(self):
        out = StringIO()
        config = self._config({"grid": {"n": 8}, "boundary_value": 1.0})
        call_command('lab', 'solve', config=config, output=str(self.dir / 'runs'), stdout=out)
        reports = list((self.dir / 'runs').glob('*.json'))
        self.assertEqual(len(reports), 1)
        envelope = json.loads(reports[0].read_text())
        self.assertEqual(envelope['kind'], 'solve')
        self.assertTrue(list((self.dir / 'runs').glob('*_u.csv')))
        self.assertEqual(RunLog.objects.count(), 1)
        self.assertIn('converged', out.getvalue())

    def test_no_log(self):
        config = self._config({"grid": {"n": 8}})
        call_command('lab', 'solve', config=config, output=str(self.dir), no_log=True, stdout=StringIO())
        self.assertEqual(RunLog.objects.count(), 0)

    def test_experiment_needs_a_kind(self):
        with self.assertRaises(CommandError):
            call_command('lab', 'experiment', config=self._config({}), stdout=StringIO())

    def test_invalid_config(self):
        with self.assertRaises(CommandError):
            call_command('lab', 'solve', config=self._config({"grid": {"n": 2}}), stdout=StringIO())

    def test_missing_config_file(self):
        with self.assertRaises(CommandError):
            call_command('lab', 'solve', config=str(self.dir / 'absent.json'), stdout=StringIO())
