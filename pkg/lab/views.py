import time
import uuid
from collections import Counter
from django.utils import timezone
from rest_framework.views import APIView
from rest_framework.response import Response
from rest_framework import serializers, status
from rest_framework.permissions import AllowAny
from .exceptions import LabError
from .scenarios import run_scenario
from .serializers import HealthSerializer, MetricsSerializer
from .models import RunLog
import logging

logger = logging.getLogger(__name__)

# Process-local counters; RunLog is the durable record
class MetricsStore:
    def __init__(self):
        self.start_time = time.time()
        self.total_requests = 0
        self.failed_runs = 0
        self.runs_by_kind = Counter()
        self.response_times = []

    def record_request(self, duration_ms, kind, failed=False):
        self.total_requests += 1
        self.runs_by_kind[kind] += 1
        if failed:
            self.failed_runs += 1
        self.response_times.append(duration_ms)

    def get_metrics(self):
        return {
            "total_requests": self.total_requests,
            "runs_by_kind": dict(self.runs_by_kind),
            "failed_runs": self.failed_runs,
            "avg_response_time_ms": sum(self.response_times) / len(self.response_times) if self.response_times else 0,
            "uptime_seconds": int(time.time() - self.start_time)
        }

metrics_store = MetricsStore()


def error_status(exc):
    """400 for bad input, 422 for numerically failed runs."""
    if isinstance(exc, ValueError):
        return status.HTTP_400_BAD_REQUEST
    return status.HTTP_422_UNPROCESSABLE_ENTITY


class ScenarioView(APIView):
    """POST a scenario config; answers with the run report."""
    permission_classes = [AllowAny]
    command = None

    def post(self, request, kind=None):
        trace_id = uuid.uuid4()
        start_time = time.time()
        label = f"{self.command}:{kind}" if kind else self.command

        logger.info(f"Processing {label} request - trace_id: {trace_id}")

        try:
            result = run_scenario(self.command, request.data, kind=kind)
        except serializers.ValidationError as e:
            metrics_store.record_request((time.time() - start_time) * 1000, label, failed=True)
            return Response(
                {"error": "Invalid input", "details": e.detail, "trace_id": str(trace_id)},
                status=status.HTTP_400_BAD_REQUEST
            )
        except (LabError, ValueError) as e:
            logger.error(f"Run failed - trace_id: {trace_id}, error: {str(e)}")
            metrics_store.record_request((time.time() - start_time) * 1000, label, failed=True)
            return Response(
                {"error": type(e).__name__, "message": str(e), "trace_id": str(trace_id)},
                status=error_status(e)
            )
        except Exception as e:
            logger.error(f"Unexpected error - trace_id: {trace_id}, error: {str(e)}")
            metrics_store.record_request((time.time() - start_time) * 1000, label, failed=True)
            return Response(
                {"error": "Internal server error", "trace_id": str(trace_id)},
                status=status.HTTP_500_INTERNAL_SERVER_ERROR
            )

        result.trace_id = trace_id
        duration_ms = (time.time() - start_time) * 1000

        try:
            RunLog.objects.create(
                trace_id=trace_id,
                kind=label,
                config=result.config,
                report=result.report,
                verdict=result.verdict,
                duration_ms=int(duration_ms)
            )
        except Exception as e:
            logger.error(f"Failed to log run - trace_id: {trace_id}, error: {str(e)}")

        metrics_store.record_request(duration_ms, label)

        logger.info(f"{label} processed successfully - trace_id: {trace_id}, duration: {duration_ms:.2f}ms")
        return Response(
            {
                "trace_id": str(trace_id),
                "kind": label,
                "verdict": result.verdict,
                "report": result.report,
                "duration_ms": int(duration_ms),
            },
            status=status.HTTP_200_OK
        )


class HealthView(APIView):
    permission_classes = [AllowAny]

    def get(self, request):
        try:
            health_data = {
                "status": "ok",
                "timestamp": timezone.now()
            }

            serializer = HealthSerializer(health_data)
            return Response(serializer.data, status=status.HTTP_200_OK)

        except Exception as e:
            logger.error(f"Health check failed: {str(e)}")
            return Response(
                {"status": "error", "message": str(e)},
                status=status.HTTP_503_SERVICE_UNAVAILABLE
            )


class MetricsView(APIView):
    permission_classes = [AllowAny]

    def get(self, request):
        try:
            metrics = metrics_store.get_metrics()
            serializer = MetricsSerializer(metrics)
            return Response(serializer.data, status=status.HTTP_200_OK)

        except Exception as e:
            logger.error(f"Metrics retrieval failed: {str(e)}")
            return Response(
                {"error": "Failed to retrieve metrics"},
                status=status.HTTP_500_INTERNAL_SERVER_ERROR
            )
