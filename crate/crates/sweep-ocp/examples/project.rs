//! Project a point onto a moving set, decompose the normal, and read the
//! orthant coderivative at the result.

use sweep_ocp::geometry::{
    coderivative_orthant, normal_cone_decompose, project_onto_moving_set, FieldMap, ProjectOptions, ThetaSet,
};
use sweep_ocp::{Matrix, Vector};

fn main() -> sweep_ocp::Result<()> {
    // C(u) = {x ∈ R² | x₁ + x₂ ≤ u, x₁ − x₂ ≤ 0}.
    let a = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
    let b = Matrix::from_row_slice(2, 1, &[-1.0, 0.0]);
    let field = FieldMap::linear(a, b, Vector::zeros(2));
    let theta = ThetaSet::orthant(2);
    let u = Vector::from_row_slice(&[1.0]);
    let x = Vector::from_row_slice(&[2.0, 0.5]);

    let (y, dec) = project_onto_moving_set(&field, &theta, &u, &x, &ProjectOptions::default())?;
    println!("projection  {:?}", y.as_slice());
    println!("eta         {:?} on rows {:?}", dec.eta.as_slice(), dec.active_indices);

    let again = normal_cone_decompose(&field, &theta, &y, &u, &(&x - &y), 1e-9)?;
    println!("round trip  {:?}", again.eta.as_slice());

    let w = field.value(&y, &u)?;
    let classes = coderivative_orthant(&w, &dec.eta, &Vector::zeros(2))?;
    println!("D*N(w, eta)(0) per row: {classes:?}");
    Ok(())
}
