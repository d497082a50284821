"""Matrix-free geometric multigrid with adaptive fault recovery on the unit cube."""

from .estimator import HwReport, discrete_norm, estimate_eigs, hw_estimate, hw_estimate_faulty
from .fault import (CostModel, FaultEvent, FaultScenario, RecoveryOutcome, SimulationReport,
                    recoupling_bound, run_recovery, solve_with_resilience)
from .mesh import (ConfigurationError, MeshHierarchy, Partition, SubdomainSets,
                   UnrecoverableScenarioError, build_hierarchy, build_partition,
                   classify_subdomains)
from .operators import LevelSystem, assemble_levels, assemble_rhs, verify_galerkin
from .solver import CycleConfig, Mask, half_cycle_down, pcg_coarse, smooth, v_cycle

__version__ = "0.1.0"
