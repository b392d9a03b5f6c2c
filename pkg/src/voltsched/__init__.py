"""Energy-aware parallel machine scheduling under time-of-use tariffs,
photovoltaic supply and a per-slot energy budget."""

from .core import (
    EnergyProfile,
    FeasibilityVerdict,
    Instance,
    Job,
    Machine,
    Schedule,
    TimeGrid,
    check_feasibility,
    consumption_of,
    energy_profile,
    evaluate_tec,
    feasible_start_window,
)
from .construct import ConstructiveConfig, NoFeasibleInsertion, NoSolutionFound, Ordering, constructive_step, insert_all
from .exact import (
    MilpSearchConfig,
    SolveOutcome,
    SolveStatus,
    branch_and_bound,
    build_tif,
    export_mps,
    milp_search,
    oracle_enumerate,
    solve_full,
)
from .ils import IlsConfig, RunReport, run_ils
from .instgen import GenParams, derive_fixed, derive_variable, generate_base, generate_pair, read_instance, write_instance
from .neighborhood import relocate_best, swap_best, vnd

__version__ = "0.1.0"
