"""Two-vehicle roundabout scenario extraction, CVAE-T generation and safety evaluation."""
from .extract import (
    ConditionCategory,
    NormalizationStats,
    Scenario,
    ScenarioDataset,
    decode_condition,
    encode_condition,
    extract_scenarios,
)
from .ingest import RoundaboutGeometry, Route, RouteRejected, Track, classify_route, load_tracks
from .kpi import KpiResult, evaluate_kpis
from .synthetic import generate_synthetic_recording

__version__ = "0.1.0"

__all__ = [
    "ConditionCategory", "KpiResult", "NormalizationStats", "RoundaboutGeometry", "Route",
    "RouteRejected", "Scenario", "ScenarioDataset", "Track", "classify_route", "decode_condition",
    "encode_condition", "evaluate_kpis", "extract_scenarios", "generate_synthetic_recording",
    "load_tracks",
]
