"""Tensor power iteration on random overcomplete symmetric tensors.

Library layout:

- model: instance sampling (component matrices, sphere starts, seeding)
- tensor_core: implicit O(kd) contractions plus the explicit dense oracle
- power_iter: the normalized iteration, trajectories, recovery metric
- conditioning: Gram-Schmidt residual sequences and the y = g + v split
- experiments: seeded Monte-Carlo sweeps over (k, d, T) grids
- io_cli: CSV/JSON serialization, run manifests, the `tpi` command
"""

__version__ = "0.1.0"

from .conditioning import (
    ConditioningDecomposition,
    MissingFullRecordError,
    OrthogonalSequences,
    decompose_y,
    f_norm_stat,
    init_mass_split,
    orthogonalize,
    trapped_ratio,
    vt_norm_ratio,
)
from .experiments import (
    CellResult,
    ConfigError,
    DiagnosticsResult,
    DiagnosticsRow,
    ExperimentConfig,
    ExperimentKind,
    GridCell,
    SweepResult,
    TrajectoryResult,
    TrajectoryStats,
    make_trial_instance,
    predicted_objective,
    run_dT_sweep,
    run_diagnostics,
    run_objective_traj,
    run_phase_sweep,
)
from .model import (
    ComponentMatrix,
    DegenerateSampleError,
    InitialVector,
    InvalidDimensionError,
    derive_seed,
    sample_components,
    sample_sphere_init,
)
from .power_iter import (
    NumericalFailureError,
    RecoveryMetric,
    StepRecord,
    Termination,
    Trajectory,
    recovery_metric,
    run,
    step,
)
from .tensor_core import (
    DimensionMismatchError,
    ExplicitTensor,
    contract_explicit,
    contract_implicit,
    gradient,
    materialize_tensor,
    objective,
)
from .io_cli import (
    DIAGNOSTICS_COLUMNS,
    RunManifest,
    SWEEP_COLUMNS,
    TRAJECTORY_COLUMNS,
    config_from_dict,
    load_config,
    main,
    read_diagnostics_csv,
    read_sweep_csv,
    read_trajectory_csv,
    trajectory_to_dict,
    write_diagnostics_csv,
    write_manifest,
    write_sweep_csv,
    write_trajectory_csv,
    write_trajectory_json,
)
