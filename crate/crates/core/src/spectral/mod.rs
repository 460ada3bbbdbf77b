//! Per-mode solvers for time-fractional q-difference problems on an
//! operator with discrete spectrum.
//!
//! Each mode `k` obeys `^cD^α u_k + (λ_k+m) u_k = f_k`; solutions are
//! tabulated on a q-geometric time grid where the Jackson sums and Caputo
//! derivatives are exact node sums.

mod estimate;
mod grid;
mod inverse;
mod io;
mod model;
mod residual;
mod solve;

pub use estimate::{energy_estimate_report, reconstruct_field, EstimateReport};
pub use grid::{TimeGrid, DEFAULT_RELATIVE_FLOOR};
pub use inverse::{denominator_floor, inverse_solve, inverse_solve_on, DENOMINATOR_ABSOLUTE_FLOOR};
pub use io::{write_coefficients_csv, write_solution_csv, SolveReport};
pub use model::{sobolev_norm, BasisFn, CoefficientField, SpectralModel};
pub use residual::{residual_check, NODE_TOLERANCE};
pub use solve::{
    direct_solve_suborder, direct_solve_superorder, ModeDiagnostics, ModeError, ProblemKind, SolutionBundle,
    Source, SourceFn,
};
