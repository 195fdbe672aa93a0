"""Context-based regulation compliance: authorities, virtual sensors, attestation."""

from .attestation import NonceIssuer, TpmSim, attest_quote, attest_verify
from .context import (
    Authority, ContextRecord, RestrictionRule, Zone, discover_context, evaluate, point_in_polygon, translate,
)
from .fencing import cost, data_rate, optimal_frequency, report_loop
from .virtual import ComplianceService, Status, VirtualSensor

__all__ = [
    "Authority", "ComplianceService", "ContextRecord", "NonceIssuer", "RestrictionRule", "Status", "TpmSim",
    "VirtualSensor", "Zone", "attest_quote", "attest_verify", "cost", "data_rate", "discover_context",
    "evaluate", "optimal_frequency", "point_in_polygon", "report_loop", "translate",
]
