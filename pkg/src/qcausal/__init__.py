"""Simulation of coherently controlled multi-party protocols and extraction of equivalent causal models."""

from .errors import (
    CapacityError,
    DimensionError,
    HistoryError,
    InvalidProtocolError,
    PreconditionError,
    QCausalError,
    SettingError,
    StructureError,
    UnreachableHistory,
    UnsupportedSizeError,
)
from .execution import EMPTY, Event, History, OutcomeDistribution, ProtocolRun, quantum_distribution, total_unitary
from .extraction import (
    CausalModel,
    causal_distribution,
    check_history_locality,
    extract_causal_model,
    naive_mixture_distribution,
    prob_next,
    prob_result,
    verify_theorem1,
)
from .fixtures import build_switch_protocol, random_protocol, sample_valid_protocols
from .protocol import ProtocolSpec, SpaceLayout, make_spec, validate_protocol

__all__ = [
    "CapacityError",
    "CausalModel",
    "DimensionError",
    "EMPTY",
    "Event",
    "History",
    "HistoryError",
    "InvalidProtocolError",
    "OutcomeDistribution",
    "PreconditionError",
    "ProtocolRun",
    "ProtocolSpec",
    "QCausalError",
    "SettingError",
    "SpaceLayout",
    "StructureError",
    "UnreachableHistory",
    "UnsupportedSizeError",
    "build_switch_protocol",
    "causal_distribution",
    "check_history_locality",
    "extract_causal_model",
    "make_spec",
    "naive_mixture_distribution",
    "prob_next",
    "prob_result",
    "quantum_distribution",
    "random_protocol",
    "sample_valid_protocols",
    "total_unitary",
    "validate_protocol",
    "verify_theorem1",
]
