"""Dynamic product-line engine for cloud service selection and configuration:
extended feature models, goal-driven requirement derivation, provider
selection with cost/satisfaction optimization, and a MAPE-K runtime that
reconfigures on context change and records a replayable trace.
"""

from .actions import Action, Deselect, Select, SetAttribute, apply_actions, diff_configurations
from .feature_model import (
    Configuration,
    FeatureModel,
    ValidationReport,
    config_digest,
    enumerate_configurations,
    evaluate_constraint,
    parse_configuration,
    parse_feature_model,
    propagate_decisions,
    serialize_feature_model,
    validate_configuration,
)
from .goal_model import ContextPredicate, GoalModel, active_goals, goal_satisfied, parse_goal_model
from .knowledge import (
    ContextEvent,
    ContextSnapshot,
    TraceEntry,
    TraceLog,
    apply_event,
    load_catalog,
    preprocess_events,
    query_trace,
    record_trace,
    replay_trace,
)
from .mape import AdaptationPlan, AdaptationRule, LoopState, load_adaptation_rules, run_loop
from .mapping import (
    FeatureRequirement,
    MappingRule,
    RequirementSet,
    check_wellformed,
    derive_requirements,
    parse_mapping_rules,
)
from .selection import (
    Objective,
    ScoredConfiguration,
    find_valid_configuration,
    match_providers,
    optimize_configuration,
    select_environment,
)

__version__ = "0.1.0"
