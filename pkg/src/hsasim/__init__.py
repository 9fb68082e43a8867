"""Cycle-level and functional simulator of a hybrid systolic array LLM accelerator."""

__version__ = "0.1.0"

from .hsa import CycleCount, HsaConfig, bucket_select, drain_mvm, run_mmm, run_mvm
from .memsys import MemConfig, TrafficLedger, phase_energy, phase_latency
from .quant import (
    Int8Tensor,
    MxInt4Tensor,
    compute_group_shift,
    dequantize_oracle,
    export_weights,
    import_weights,
    quantize_activation_int8,
    quantize_mxint4,
)
from .report import run_scenario
from .roofline import roofline_scenario
from .workload import (
    MODEL_PRESETS,
    SCENARIO_PRESETS,
    ModelConfig,
    ScenarioConfig,
    build_model,
)

__all__ = [
    "CycleCount",
    "HsaConfig",
    "Int8Tensor",
    "MemConfig",
    "ModelConfig",
    "MxInt4Tensor",
    "MODEL_PRESETS",
    "SCENARIO_PRESETS",
    "ScenarioConfig",
    "TrafficLedger",
    "bucket_select",
    "build_model",
    "compute_group_shift",
    "dequantize_oracle",
    "drain_mvm",
    "export_weights",
    "import_weights",
    "phase_energy",
    "phase_latency",
    "quantize_activation_int8",
    "quantize_mxint4",
    "roofline_scenario",
    "run_mmm",
    "run_mvm",
    "run_scenario",
]
