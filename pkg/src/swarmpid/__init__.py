"""Multi-channel PID simulation with quantized gains and a shared PSO tuner."""
from .pid import (
    AntiWindup,
    ComponentLadder,
    GainCode,
    PidConfig,
    PidGains,
    PidState,
    decode_gains,
    encode_gains,
    pid_step,
    reset,
)
from .plants import (
    FirstOrderPlant,
    SecondOrderPlant,
    SensorMap,
    TachSpec,
    gyroscope_map,
    sensor_to_voltage,
    step_plant,
    tach_frequency,
    tachometer_map,
    temperature_map,
    voltage_to_physical,
)
from .pso import FitnessWeights, PsoConfig, TuningChannel, evaluate_fitness, exhaustive_search, run_pso
from .sim import DisturbanceSpec, Scenario, compute_metrics, run_scenario
from .supervisor import Mode, SupervisorConfig

__version__ = "0.1.0"
