from rest_framework import serializers

from .experiments import EXPERIMENT_KINDS
from .grid import DOMAIN_KINDS, UNIT_SQUARE
from .measures import DENSITY_KINDS
from .orlicz import WEIGHT_LEBESGUE, WEIGHT_RHO


class GridSerializer(serializers.Serializer):
    domain_kind = serializers.ChoiceField(choices=DOMAIN_KINDS, default=UNIT_SQUARE)
    n = serializers.IntegerField(min_value=4, max_value=1024, default=64)


class BoundaryAtomSerializer(serializers.Serializer):
    mass = serializers.FloatField(min_value=0.0)
    s = serializers.FloatField(required=False, allow_null=True, default=None)
    point = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2,
                                  required=False, allow_null=True, default=None)

    def validate(self, data):
        if (data.get("s") is None) == (data.get("point") is None):
            raise serializers.ValidationError("Give exactly one of 's' or 'point' for a boundary atom")
        return data


class ArcField(serializers.ListField):
    child = serializers.FloatField()

    def __init__(self, **kwargs):
        kwargs.setdefault("min_length", 2)
        kwargs.setdefault("max_length", 2)
        super().__init__(**kwargs)

    def to_internal_value(self, data):
        arc = super().to_internal_value(data)
        if not arc[0] < arc[1]:
            raise serializers.ValidationError("Arc endpoints must satisfy a < b")
        return arc


class DensitySerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=DENSITY_KINDS)
    arc = ArcField(required=False, allow_null=True, default=None)
    level = serializers.FloatField(min_value=0.0, default=0.0)
    amplitude = serializers.FloatField(min_value=0.0, default=0.0)
    table = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(), min_length=3, max_length=3),
        default=list)
    cap = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)


class CantorSerializer(serializers.Serializer):
    arc = ArcField()
    mass = serializers.FloatField(min_value=0.0)
    depth = serializers.IntegerField(min_value=0, max_value=12, required=False, allow_null=True,
                                     default=None)


class BoundaryMeasureSerializer(serializers.Serializer):
    atoms = BoundaryAtomSerializer(many=True, default=list)
    density = DensitySerializer(many=True, default=list)
    cantor = CantorSerializer(many=True, default=list)

    def to_internal_value(self, data):
        # a single density or cantor block may be given without a list
        if isinstance(data, dict):
            data = dict(data)
            for key in ("density", "cantor"):
                if isinstance(data.get(key), dict):
                    data[key] = [data[key]]
        return super().to_internal_value(data)


class InteriorAtomSerializer(serializers.Serializer):
    point = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2)
    mass = serializers.FloatField(min_value=0.0)


class InteriorMeasureSerializer(serializers.Serializer):
    atoms = InteriorAtomSerializer(many=True, default=list)
    density = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)


def validate_nonlinearity(value):
    if value == "exp":
        return value
    if value.startswith("power:"):
        try:
            q = float(value.split(":", 1)[1])
        except ValueError:
            raise serializers.ValidationError("power nonlinearity needs a numeric exponent, e.g. 'power:3'")
        if q <= 1.0:
            raise serializers.ValidationError("power exponent must exceed 1")
        return value
    raise serializers.ValidationError("nonlinearity must be 'exp' or 'power:q'")


class ToleranceSerializer(serializers.Serializer):
    newton_tol = serializers.FloatField(min_value=0.0, required=False)
    newton_max_iter = serializers.IntegerField(min_value=1, required=False)


class SolveConfigSerializer(serializers.Serializer):
    grid = GridSerializer(default=dict)
    measure = BoundaryMeasureSerializer(required=False, allow_null=True, default=None)
    boundary_value = serializers.FloatField(required=False, allow_null=True, default=None)
    source = InteriorMeasureSerializer(required=False, allow_null=True, default=None)
    nonlinearity = serializers.CharField(default="exp", validators=[validate_nonlinearity])
    tolerances = ToleranceSerializer(default=dict)
    truncation = serializers.BooleanField(default=False)
    k_schedule = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False,
                                       allow_null=True, default=None)
    probe = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2,
                                  required=False, allow_null=True, default=None)

    def validate_k_schedule(self, value):
        if value and any(b <= a for a, b in zip(value, value[1:])):
            raise serializers.ValidationError("k_schedule must be strictly increasing")
        return value

    def validate(self, data):
        if data.get("measure") is not None and data.get("boundary_value") is not None:
            raise serializers.ValidationError("Give either a boundary measure or a constant boundary value")
        if data["truncation"] and data.get("measure") is None:
            raise serializers.ValidationError("The truncation scheme needs a boundary measure")
        return data


class CapacitySetSerializer(serializers.Serializer):
    location = serializers.ChoiceField(choices=("boundary", "interior"))
    arcs = serializers.ListField(child=ArcField(), default=list)
    kind = serializers.ChoiceField(choices=("node", "square", "empty"), default="empty")
    point = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2,
                                  required=False)
    center = serializers.ListField(child=serializers.FloatField(), min_length=2, max_length=2,
                                   required=False)
    side = serializers.FloatField(min_value=0.0, required=False)

    def validate(self, data):
        if data["location"] == "interior":
            if data["kind"] == "node" and "point" not in data:
                raise serializers.ValidationError("A node set needs 'point'")
            if data["kind"] == "square" and not ("center" in data and "side" in data):
                raise serializers.ValidationError("A square set needs 'center' and 'side'")
        return data


class CapacityConfigSerializer(serializers.Serializer):
    grid = GridSerializer(default=dict)
    set = CapacitySetSerializer()
    variant = serializers.ChoiceField(choices=("luxemburg", "maximal_l1"), default="luxemburg")
    margin = serializers.IntegerField(min_value=0, required=False, allow_null=True, default=None)
    with_dual = serializers.BooleanField(default=True)


class FieldSourceSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=("constant", "poisson", "first_eigenfunction"))
    value = serializers.FloatField(default=1.0)
    measure = BoundaryMeasureSerializer(required=False, allow_null=True, default=None)

    def validate(self, data):
        if data["kind"] == "poisson" and data.get("measure") is None:
            raise serializers.ValidationError("A Poisson field needs a boundary measure")
        return data


class OrliczNormConfigSerializer(serializers.Serializer):
    grid = GridSerializer(default=dict)
    field = FieldSourceSerializer()
    nfunction = serializers.ChoiceField(choices=("P", "Pstar"), default="P")
    weight = serializers.ChoiceField(choices=(WEIGHT_RHO, WEIGHT_LEBESGUE), default=WEIGHT_RHO)
    norm = serializers.ChoiceField(choices=("luxemburg", "orlicz", "maximal"), default="luxemburg")
    power = serializers.FloatField(min_value=1.0, required=False, allow_null=True, default=None)

    def validate_power(self, value):
        if value is not None and value <= 1.0:
            raise serializers.ValidationError("power exponent must exceed 1")
        return value


class AdmissibilityConfigSerializer(serializers.Serializer):
    domain_kind = serializers.ChoiceField(choices=DOMAIN_KINDS, default=UNIT_SQUARE)
    n0 = serializers.IntegerField(min_value=4, max_value=256, default=32)
    measure = BoundaryMeasureSerializer()
    scales = serializers.ListField(child=serializers.FloatField(min_value=0.0), default=lambda: [1.0])
    tau = serializers.FloatField(min_value=0.0, required=False, allow_null=True, default=None)
    growth = serializers.FloatField(min_value=1.0, required=False, allow_null=True, default=None)


class ExperimentConfigSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=EXPERIMENT_KINDS)
    domain_kind = serializers.ChoiceField(choices=DOMAIN_KINDS, default=UNIT_SQUARE)
    levels = serializers.ListField(child=serializers.IntegerField(min_value=4, max_value=1024),
                                   default=list)
    params = serializers.DictField(default=dict)

    def validate_levels(self, value):
        if any(b <= a for a, b in zip(value, value[1:])):
            raise serializers.ValidationError("Grid levels must be strictly increasing")
        return value


class HealthSerializer(serializers.Serializer):
    status = serializers.CharField()
    timestamp = serializers.DateTimeField()


class MetricsSerializer(serializers.Serializer):
    total_requests = serializers.IntegerField()
    runs_by_kind = serializers.DictField(child=serializers.IntegerField())
    failed_runs = serializers.IntegerField()
    avg_response_time_ms = serializers.FloatField()
    uptime_seconds = serializers.IntegerField()
