# dav_lab/alignment/admin.py
from django.contrib import admin
from .models import ExperimentRun, EpochRecord
from .evaluation import ElboRecord
import csv
from django.http import HttpResponse


# ==============================================================================
# 1. ADMIN DE EXECUÇÕES
# ==============================================================================
class EpochRecordInline(admin.TabularInline):
    model = EpochRecord
    extra = 0
    can_delete = False
    fields = ('variant', 'epoch', 'elbo_per_trajectory', 'estimator', 'mean_reward', 'fallbacks')
    readonly_fields = fields


class ExperimentRunAdmin(admin.ModelAdmin):
    list_display = (
        'display_name', 'command', 'display_variant', 'seed',
        'display_status', 'display_hash', 'created_at', 'finished_at',
    )
    list_filter = ('status', 'command', 'variant', 'kind')
    search_fields = ('name', 'config_hash', 'run_dir')
    readonly_fields = ('config_hash', 'run_dir', 'error_message', 'created_at', 'started_at', 'finished_at')
    inlines = [EpochRecordInline]

    fieldsets = (
        ('Identificação', {
            'fields': ('name', 'command', 'kind', 'variant', 'seed', 'status')
        }),
        ('Configuração', {
            'fields': ('config', 'config_hash', 'resume_from'),
            'description': 'Configuração resolvida; o hash identifica o checkpoint compatível.'
        }),
        ('Resultado', {
            'fields': ('run_dir', 'error_message', 'created_at', 'started_at', 'finished_at')
        }),
    )

    def display_name(self, obj): return obj.name
    display_name.short_description = 'Nome'
    display_name.admin_order_field = 'name'

    def display_variant(self, obj): return obj.variant
    display_variant.short_description = 'Variante'
    display_variant.admin_order_field = 'variant'

    def display_status(self, obj): return obj.get_status_display()
    display_status.short_description = 'Status'
    display_status.admin_order_field = 'status'

    def display_hash(self, obj): return obj.config_hash[:12]
    display_hash.short_description = 'Hash'


# ==============================================================================
# 2. ADMIN DE REGISTROS DE ÉPOCA (COM EXPORTAÇÃO)
# ==============================================================================
class EpochRecordAdmin(admin.ModelAdmin):

    # --- AÇÃO DE EXPORTAÇÃO ---
    actions = ['export_to_csv']

    def export_to_csv(self, request, queryset):
        response = HttpResponse(content_type='text/csv')
        response['Content-Disposition'] = 'attachment; filename="epoch_records.csv"'

        writer = csv.writer(response, lineterminator='\n')
        columns = ElboRecord.header()
        writer.writerow(['run', 'variant', 'seed', *columns])

        for obj in queryset.select_related('run'):
            row = [obj.run.name, obj.variant, obj.run.seed]
            for column in columns:
                value = getattr(obj, column)
                if value is None:
                    row.append('nan')
                elif isinstance(value, float):
                    row.append('%.17g' % value)
                else:
                    row.append(value)
            writer.writerow(row)

        return response

    export_to_csv.short_description = "Exportar selecionados para CSV"
    # --- FIM DA AÇÃO DE EXPORTAÇÃO ---

    list_display = (
        'display_run', 'variant', 'epoch', 'display_elbo', 'estimator',
        'display_mean_reward', 'fallbacks', 'policy_version',
    )
    list_filter = ('variant', 'estimator', 'run__name')
    search_fields = ('run__name',)

    def display_run(self, obj): return obj.run.name
    display_run.short_description = 'Execução'
    display_run.admin_order_field = 'run__name'

    def display_elbo(self, obj): return f"{obj.elbo_per_trajectory:.6f}"
    display_elbo.short_description = 'ELBO/trajetória'
    display_elbo.admin_order_field = 'elbo_per_trajectory'

    def display_mean_reward(self, obj):
        return '' if obj.mean_reward is None else f"{obj.mean_reward:.4f}"
    display_mean_reward.short_description = 'Recompensa média'
    display_mean_reward.admin_order_field = 'mean_reward'


admin.site.register(ExperimentRun, ExperimentRunAdmin)
admin.site.register(EpochRecord, EpochRecordAdmin)
