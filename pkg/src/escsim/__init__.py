"""Extremum seeking for energy-optimal flight speed and sideslip, at desk scale.

The package closes the loop between a multivariable extremum seeking
controller (standard and adaptive-step-size variants) and a simulated
multicopter energy plant, and ships the analysis tools used to check the
controller's convergence, boundedness, and stability properties.
"""

from .controller import (
    ADAPTIVE,
    STANDARD,
    ChannelParams,
    ChannelState,
    EscController,
    EscParams,
    EscState,
    PrimedChannelParams,
    adapter_step,
    channel_step,
    esc_step,
    lint_params,
    scaled_params,
    table2_params,
)
from .plants import (
    ENDURANCE,
    RANGE,
    CopterParams,
    PlantState,
    QuadraticMap,
    SolverError,
    WindField,
    cost,
    default_copter_params,
    drag_force,
    electric_power,
    hover_induced_velocity,
    induced_velocity,
    plant_step,
    sensor,
    trim,
)

__version__ = "0.1.0"
