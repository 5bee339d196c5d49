"""LP/MILP contract shared by all formulations, with pluggable backends."""
from .base import (INFEASIBLE, NO_INCUMBENT, OPTIMAL, TIME_LIMIT, UNBOUNDED, InfeasibilityCertificate,
                   LPResult, MILPResult, available_backends, default_backend_name, get_backend,
                   infeasibility_certificate, register_backend, solve_lp, solve_milp)
from .builtin import BuiltinBackend
from .model import (EQ, GE, LE, ContractError, LinearModel, ModelBuilder, SolverError, write_lp)

register_backend("builtin", BuiltinBackend)
try:
    from .highs import HighsBackend, highspy as _highspy
    if _highspy is not None:
        register_backend("highs", HighsBackend)
except ImportError:  # pragma: no cover
    pass

__all__ = [
    "EQ", "GE", "LE", "INFEASIBLE", "NO_INCUMBENT", "OPTIMAL", "TIME_LIMIT", "UNBOUNDED",
    "ContractError", "InfeasibilityCertificate", "LinearModel", "LPResult", "MILPResult", "ModelBuilder",
    "SolverError", "available_backends", "default_backend_name", "get_backend", "infeasibility_certificate",
    "register_backend", "solve_lp", "solve_milp", "write_lp",
]
