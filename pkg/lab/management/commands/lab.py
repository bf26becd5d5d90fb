import json
import logging
import sys

from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from lab.exceptions import LabError
from lab.experiments import EXPERIMENT_KINDS
from lab.models import RunLog
from lab.scenarios import COMMANDS, EXPERIMENT, run_scenario, write_outputs

logger = logging.getLogger(__name__)

EXIT_INCONCLUSIVE = 2


class Command(BaseCommand):
    help = ("Run a laboratory scenario from a JSON config and write <trace>.json plus CSV "
            "fields. Exit code 2 means a classifier answered 'inconclusive'.")

    def add_arguments(self, parser):
        parser.add_argument("command", choices=COMMANDS)
        parser.add_argument("kind", nargs="?", choices=EXPERIMENT_KINDS,
                            help="experiment kind (only with 'experiment')")
        parser.add_argument("--config", required=True, help="path to the scenario JSON file")
        parser.add_argument("--output", default=None, help="output directory (default PDE_LAB OUTPUT_DIR)")
        parser.add_argument("--no-log", action="store_true", help="do not store a RunLog row")

    def handle(self, *args, **options):
        command, kind = options["command"], options.get("kind")
        if command == EXPERIMENT and kind is None:
            raise CommandError("'experiment' needs a kind: " + ", ".join(EXPERIMENT_KINDS))
        if command != EXPERIMENT and kind is not None:
            raise CommandError(f"'{command}' does not take a kind")

        try:
            with open(options["config"]) as handle:
                config = json.load(handle)
        except (OSError, json.JSONDecodeError) as e:
            raise CommandError(f"Cannot read config {options['config']}: {e}")

        try:
            result = run_scenario(command, config, kind=kind)
        except serializers.ValidationError as e:
            raise CommandError(f"Invalid config: {json.dumps(e.detail, default=str)}")
        except (LabError, ValueError) as e:
            logger.error(f"{command} failed: {e}")
            raise CommandError(f"{type(e).__name__}: {e}")

        path = write_outputs(result, options["output"])
        if not options["no_log"]:
            RunLog.objects.create(trace_id=result.trace_id, kind=f"{command}:{kind}" if kind else command,
                                  config=result.config, report=result.report, verdict=result.verdict,
                                  duration_ms=result.duration_ms)
        self.stdout.write(f"{command}: {result.verdict or 'done'} ({result.duration_ms} ms) -> {path}")
        if result.inconclusive:
            sys.exit(EXIT_INCONCLUSIVE)
