from django.db import models
import uuid

class RunLog(models.Model):
    trace_id = models.UUIDField(default=uuid.uuid4, unique=True)
    kind = models.CharField(max_length=64)
    config = models.JSONField(default=dict)
    report = models.JSONField(default=dict)
    verdict = models.CharField(max_length=64, blank=True, default="")
    duration_ms = models.IntegerField()
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.kind} {self.trace_id} ({self.verdict or 'no verdict'})"
