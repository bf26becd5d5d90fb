from django.contrib import admin
from .models import RunLog

@admin.register(RunLog)
class RunLogAdmin(admin.ModelAdmin):
    list_display = ('trace_id', 'kind', 'verdict', 'created_at', 'duration_ms')
    list_filter = ('kind', 'verdict', 'created_at')
    search_fields = ('kind', 'verdict')
    readonly_fields = ('trace_id', 'created_at')
    ordering = ('-created_at',)
