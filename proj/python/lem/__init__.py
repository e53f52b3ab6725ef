"""Local energy market clearing with distribution network constraints."""

from ._lem import (
    AdmmConfig,
    DsoInfeasible,
    InputError,
    IoError,
    OracleInfeasible,
    Report,
    Scenario,
    audit_privacy,
    clear,
    cli,
    generate_scenario,
    load_scenario,
    write_scenario,
)

__all__ = [
    "AdmmConfig",
    "DsoInfeasible",
    "InputError",
    "IoError",
    "OracleInfeasible",
    "Report",
    "Scenario",
    "audit_privacy",
    "clear",
    "cli",
    "generate_scenario",
    "load_scenario",
    "write_scenario",
]
