"""Software twin of a flexible hybrid force and proximity sensor.

A prexel ("proximity pixel") is one element of a printed sensor matrix
that measures contact force piezoresistively and hand proximity through
self-capacitance.  This package models the element physics, emulates the
acquisition electronics and wire protocol, provides the host-side
calibration and signal chain, and closes the loop on a simulated robot
for hand guiding and collision avoidance.

Entry points: the :mod:`prexel.cli` verbs (``prexel simulate``,
``calibrate``, ``characterize``, ``replay``, ``serve``) and the module
APIs re-exported below.
"""

from .calibration import (
    ForceConductanceModel,
    ProximityModel,
    distance_of_counter,
    fit_drift,
    fit_force_conductance,
    fit_proximity,
    force_of_conductance,
)
from .config import SensorConfig, load_config, save_config
from .daq import DaqEmulator, measure_counter
from .physics import (
    CapacitiveParams,
    Direction,
    DriftModel,
    GroundTruthState,
    ObjectKind,
    PiezoParams,
    SensorLayout,
    conductance_of,
    counter_of,
    resistance_of,
)
from .protocol import Frame, StreamParser, decode_stream, encode_frame
from .scenario import Scenario, ScenarioPlayer
from .session import SessionEngine, SessionSettings

__version__ = "0.1.0"
