from django.urls import path
from . import views

urlpatterns = [
    path('solve/', views.ScenarioView.as_view(command='solve'), name='solve'),
    path('capacity/', views.ScenarioView.as_view(command='capacity'), name='capacity'),
    path('orlicz-norm/', views.ScenarioView.as_view(command='orlicz-norm'), name='orlicz_norm'),
    path('admissibility/', views.ScenarioView.as_view(command='admissibility'), name='admissibility'),
    path('experiment/<str:kind>/', views.ScenarioView.as_view(command='experiment'), name='experiment'),
    path('health/', views.HealthView.as_view(), name='health'),
    path('metrics/', views.MetricsView.as_view(), name='metrics'),
]
