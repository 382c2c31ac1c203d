from smi_sim.modules.world.grid import Grid, trusted_counts_for
from smi_sim.modules.world.mobility import (
    MobilityParams,
    NodeState,
    composite_schedule,
    downtown_rect,
    init_node,
    params_from_config,
    round_robin_models,
    step_node,
)
from smi_sim.modules.world.adversary import (
    AdversaryField,
    FbtsSite,
    TailingAdversary,
    all_sites_disrupted_rate,
    build_field,
    checkerboard_sites,
    interception_rate,
    interference_sample,
    trusted_endpoint_near,
)

__all__ = [
    "Grid",
    "trusted_counts_for",
    "MobilityParams",
    "NodeState",
    "composite_schedule",
    "downtown_rect",
    "init_node",
    "params_from_config",
    "round_robin_models",
    "step_node",
    "AdversaryField",
    "FbtsSite",
    "TailingAdversary",
    "all_sites_disrupted_rate",
    "build_field",
    "checkerboard_sites",
    "interception_rate",
    "interference_sample",
    "trusted_endpoint_near",
]
