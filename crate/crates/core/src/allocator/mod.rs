//! Mixed-integer allocation of tasks to virtual robots.

mod bnb;
mod problem;
pub mod qp;

pub use bnb::{
    enumerate_exhaustive, solve_allocation, solve_qp_fixed_alpha, tie_tol, AllocError, AllocationSolution, BnbOptions,
    FixedAlphaResult, SolveStatus,
};
pub use problem::{
    assemble_miqp, prioritization_rows, AllocationParams, AlphaBound, AssemblyError, AssemblyInputs, CardinalityKind,
    CardinalityRow, MiqpProblem, PrioritizationRows, PriorityKind, ReducedQp, VarLayout,
};
