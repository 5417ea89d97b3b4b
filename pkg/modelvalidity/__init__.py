"""Vehicle-dynamics model-validity toolkit.

Generates ground truth with a high-fidelity four-wheel plant, scores reduced
candidate models one step at a time against it, and splits the errors into
operating domains at a lateral-acceleration threshold.
"""

__version__ = "0.1.0"

from .dynamics import (  # noqa: E402
    BicycleState,
    ControlInput,
    FourWheelState,
    TireParams,
    VehicleParams,
    step_bicycle,
    step_four_wheel,
    tire_preset,
    vehicle_preset,
)
from .errors import ModelValidityError  # noqa: E402
from .trajectory import Trajectory, read_trajectory, write_trajectory  # noqa: E402
from .validity import (  # noqa: E402
    CandidateModel,
    ModelId,
    compare_trajectory,
    percent_increase,
    split_by_domain,
)

__all__ = [
    "BicycleState",
    "CandidateModel",
    "ControlInput",
    "FourWheelState",
    "ModelId",
    "ModelValidityError",
    "TireParams",
    "Trajectory",
    "VehicleParams",
    "compare_trajectory",
    "percent_increase",
    "read_trajectory",
    "split_by_domain",
    "step_bicycle",
    "step_four_wheel",
    "tire_preset",
    "vehicle_preset",
    "write_trajectory",
]
