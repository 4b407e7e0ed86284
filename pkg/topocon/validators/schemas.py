from marshmallow import Schema, ValidationError, fields, post_load, validate, validates_schema

from ..models.decision import BudgetFunction, MethodTag
from ..models.region import EstimationSettings
from ..models.scenario import ChannelParams, DecisionSettings, DynamicsParams, Scenario


class ChannelSchema(Schema):
    v = fields.Float(load_default=40.0, validate=validate.Range(min=0, min_inclusive=False))
    dT_M = fields.Float(load_default=0.25, validate=validate.Range(min=0))
    R = fields.Float(load_default=10.0, validate=validate.Range(min=0, min_inclusive=False))
    drop_probability = fields.Float(load_default=0.0, validate=validate.Range(min=0, max=1))
    truncate_k = fields.Int(load_default=0, validate=validate.Range(min=0))

    @post_load
    def make(self, data, **kwargs):
        return ChannelParams(**data)


class DynamicsSchema(Schema):
    lam = fields.Float(load_default=1.0, validate=validate.Range(min=0.5, min_inclusive=False))
    d_max = fields.Float(load_default=1.0, validate=validate.Range(min=0))
    disturbance = fields.Str(
        load_default='random_walk',
        validate=validate.OneOf(['constant', 'sinusoidal', 'random_walk'])
    )
    reference = fields.Str(load_default='wander', validate=validate.OneOf(['wander', 'drift', 'static']))
    drift_speed = fields.Float(load_default=0.3, validate=validate.Range(min=0))
    wander_amplitude = fields.Float(load_default=0.5, validate=validate.Range(min=0))
    wander_omega = fields.List(fields.Float(validate=validate.Range(min=0)),
                               load_default=lambda: [0.02, 0.08], validate=validate.Length(equal=2))
    env_fraction = fields.Float(load_default=0.6, validate=validate.Range(min=0, max=1))
    tether = fields.Bool(load_default=True)
    tether_start = fields.Float(load_default=0.8, validate=validate.Range(min=0, max=1, max_inclusive=False))

    @validates_schema
    def check_omega(self, data, **kwargs):
        low, high = data.get('wander_omega', [0.02, 0.08])
        if low > high:
            raise ValidationError("wander_omega doit être [min, max]", 'wander_omega')

    @post_load
    def make(self, data, **kwargs):
        return DynamicsParams(**data)


class BudgetSchema(Schema):
    c0 = fields.Float(load_default=400.0)
    gamma = fields.Float(load_default=0.1, validate=validate.Range(min=0))
    floor = fields.Float(load_default=150.0)

    @post_load
    def make(self, data, **kwargs):
        return BudgetFunction(**data)


class DecisionSchema(Schema):
    tau_D = fields.Int(load_default=8, validate=validate.Range(min=1))
    c_bar = fields.Float(load_default=1.0, validate=validate.Range(min=0))
    delta = fields.Float(load_default=0.0, validate=validate.Range(min=0))
    p = fields.Float(load_default=0.1, validate=validate.Range(min=0, max=1, min_inclusive=False,
                                                                  max_inclusive=False))
    rho_m = fields.Float(load_default=0.6, validate=validate.Range(min=0, max=1, min_inclusive=False,
                                                                      max_inclusive=False))
    c_max = fields.Float(load_default=1.0, validate=validate.Range(min=0, min_inclusive=False))
    budget = fields.Nested(BudgetSchema, load_default=lambda: BudgetFunction(400.0, 0.1, 150.0))
    # réservé, sans effet sur la décision
    Delta = fields.Float(load_default=None, allow_none=True)

    @post_load
    def make(self, data, **kwargs):
        return DecisionSettings(**data)


class EstimationSchema(Schema):
    particles = fields.Int(load_default=256, validate=validate.Range(min=1))
    pair_budget = fields.Int(load_default=4096, validate=validate.Range(min=1))
    shrink_iterations = fields.Int(load_default=5, validate=validate.Range(min=0))
    max_attempts = fields.Int(load_default=64, validate=validate.Range(min=1))

    @post_load
    def make(self, data, **kwargs):
        return EstimationSettings(**data)


class ScenarioSchema(Schema):
    name = fields.Str(load_default='default')
    n = fields.Int(load_default=20, validate=validate.Range(min=1))
    dimension = fields.Int(load_default=2, validate=validate.Range(min=1, max=3))
    seed = fields.Int(load_default=0, validate=validate.Range(min=0))
    duration_steps = fields.Int(load_default=3000, validate=validate.Range(min=0))
    dt = fields.Float(load_default=0.1, validate=validate.Range(min=0, min_inclusive=False))
    method = fields.Str(load_default='A', validate=validate.OneOf([m.value for m in MethodTag]))
    decision_every = fields.Int(load_default=40, validate=validate.Range(min=1))
    box_side = fields.Float(load_default=None, allow_none=True,
                            validate=validate.Range(min=0, min_inclusive=False))
    initial_positions = fields.List(fields.List(fields.Float()), load_default=None, allow_none=True)
    stressed_threshold = fields.Float(load_default=None, allow_none=True)
    record_messages = fields.Bool(load_default=False)
    channel = fields.Nested(ChannelSchema, load_default=ChannelParams)
    dynamics = fields.Nested(DynamicsSchema, load_default=DynamicsParams)
    decision = fields.Nested(DecisionSchema, load_default=DecisionSettings)
    estimation = fields.Nested(EstimationSchema, load_default=EstimationSettings)

    @validates_schema
    def check_positions(self, data, **kwargs):
        positions = data.get('initial_positions')
        if positions is None:
            return
        n, dim = data.get('n', 20), data.get('dimension', 2)
        if len(positions) != n or any(len(p) != dim for p in positions):
            raise ValidationError(f"attendu {n} positions de dimension {dim}", 'initial_positions')

    @post_load
    def make(self, data, **kwargs):
        data['method'] = MethodTag(data['method'])
        return Scenario(**data)


class BatchSchema(Schema):
    """Matrice de benchmark : scénario de base, méthodes, tailles, bornes et répétitions."""
    name = fields.Str(load_default='batch')
    scenario = fields.Dict(load_default=dict)
    methods = fields.List(fields.Str(validate=validate.OneOf([m.value for m in MethodTag])),
                          load_default=lambda: ['A'], validate=validate.Length(min=1))
    nodes = fields.List(fields.Int(validate=validate.Range(min=1)), load_default=None, allow_none=True)
    tau_D = fields.List(fields.Int(validate=validate.Range(min=1)), load_default=None, allow_none=True)
    repetitions = fields.Int(load_default=10, validate=validate.Range(min=1))
    seed = fields.Int(load_default=0, validate=validate.Range(min=0))
    steps = fields.Int(load_default=None, allow_none=True, validate=validate.Range(min=0))
