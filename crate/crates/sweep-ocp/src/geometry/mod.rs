//! Constraint sets Θ, fields ψ, projections onto `C(u) = ψ(·,u)⁻¹(Θ)`,
//! normal-cone decompositions and the orthant coderivative.

pub mod cone;
pub mod field;
pub mod projection;
pub mod qp;
pub mod shift;
pub mod theta;

pub use cone::{
    coderivative_distance, coderivative_orthant, coderivative_orthant_tol, distance_to_cone,
    normal_cone_decompose, normal_cone_generators, surjectivity_check, surjectivity_check_relative,
    CodClass, ConeDecomposition, Surjectivity,
};
pub use field::{psi_eval, AffineInX, FieldKind, FieldMap, NonlinearSmooth};
pub use projection::{project_onto_moving_set, ProjectOptions};
pub use qp::{project_polyhedron, project_polyhedron_with, PolyProjection, QpMethod};
pub use shift::{h4_shift, ShiftCase};
pub use theta::{theta_contains, LinearImage, SmoothInequality, ThetaRows, ThetaSet};

/// Feasibility tolerance.
pub const TOL_FEAS: f64 = 1e-9;
/// Rank threshold relative to the largest singular value.
pub const RANK_REL_TOL: f64 = 1e-8;
