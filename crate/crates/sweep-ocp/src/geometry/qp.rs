//! Euclidean projection onto `{y | M y ≤ c}`.
//!
//! Small row counts are solved exactly by enumerating active sets; larger
//! ones use Hildreth's dual coordinate ascent.

use crate::error::{Result, SweepError};
use crate::{Matrix, Vector};

/// Row count up to which active sets are enumerated.
pub const ENUMERATION_LIMIT: usize = 8;

/// Result of a polyhedral projection.
#[derive(Clone, Debug)]
pub struct PolyProjection {
    pub point: Vector,
    /// One multiplier per row of `M`, with `x − y = Mᵀ μ` and `μ ≥ 0`.
    pub multipliers: Vector,
    pub active: Vec<usize>,
}

/// Which algorithm to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpMethod {
    Auto,
    Enumeration,
    DualAscent,
}

/// Project `x` onto `{y | M y ≤ c}`.
pub fn project_polyhedron(m: &Matrix, c: &Vector, x: &Vector, tol: f64) -> Result<PolyProjection> {
    project_polyhedron_with(m, c, x, tol, QpMethod::Auto)
}

/// Project with an explicit algorithm choice.
pub fn project_polyhedron_with(
    m: &Matrix,
    c: &Vector,
    x: &Vector,
    tol: f64,
    method: QpMethod,
) -> Result<PolyProjection> {
    let rows = m.nrows();
    if m.ncols() != x.len() || c.len() != rows {
        return Err(SweepError::Config(format!(
            "projection data is {}x{} with rhs {} and point {}",
            rows,
            m.ncols(),
            c.len(),
            x.len()
        )));
    }
    // Normalize rows; zero rows are either vacuous or make the set empty.
    let mut norms = vec![0.0; rows];
    let mut keep = Vec::with_capacity(rows);
    for i in 0..rows {
        let nrm = m.row(i).norm();
        norms[i] = nrm;
        if nrm <= 1e-14 {
            if c[i] < -tol {
                return Err(SweepError::Projection(format!("row {i} reads 0 ≤ {}", c[i])));
            }
        } else {
            keep.push(i);
        }
    }
    let mn = Matrix::from_fn(keep.len(), x.len(), |i, j| m[(keep[i], j)] / norms[keep[i]]);
    let cn = Vector::from_fn(keep.len(), |i, _| c[keep[i]] / norms[keep[i]]);
    let scale = 1.0 + x.amax();

    let viol = &mn * x - &cn;
    let (point, mu_n) = if viol.iter().all(|&v| v <= tol * scale) {
        (x.clone(), Vector::zeros(keep.len()))
    } else {
        let use_enum = match method {
            QpMethod::Auto => keep.len() <= ENUMERATION_LIMIT,
            QpMethod::Enumeration => true,
            QpMethod::DualAscent => false,
        };
        if use_enum {
            enumerate(&mn, &cn, x, tol * scale)?
        } else {
            dual_ascent(&mn, &cn, x, tol * scale)?
        }
    };

    let mut multipliers = Vector::zeros(rows);
    let mut active = Vec::new();
    let resid = m * &point - c;
    for (k, &i) in keep.iter().enumerate() {
        multipliers[i] = mu_n[k].max(0.0) / norms[i];
        if resid[i].abs() <= tol * scale * norms[i] || multipliers[i] > 0.0 {
            active.push(i);
        }
    }
    Ok(PolyProjection {
        point,
        multipliers,
        active,
    })
}

fn enumerate(m: &Matrix, c: &Vector, x: &Vector, tol: f64) -> Result<(Vector, Vector)> {
    let r = m.nrows();
    let mut best: Option<(f64, Vector, Vector)> = None;
    for mask in 1u32..(1u32 << r) {
        let idx: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
        if idx.len() > x.len() {
            continue;
        }
        let ms = Matrix::from_fn(idx.len(), x.len(), |i, j| m[(idx[i], j)]);
        let gram = &ms * ms.transpose();
        let rhs = Vector::from_fn(idx.len(), |i, _| (ms.row(i) * x)[0] - c[idx[i]]);
        let Some(chol) = gram.clone().cholesky() else { continue };
        // Reject nearly dependent subsets; a smaller subset covers them.
        let dmin = chol.l().diagonal().min();
        if dmin * dmin < 1e-12 {
            continue;
        }
        let mu_s = chol.solve(&rhs);
        if mu_s.iter().any(|&v| v < -tol) {
            continue;
        }
        let y = x - ms.transpose() * &mu_s;
        if (m * &y - c).iter().any(|&v| v > tol) {
            continue;
        }
        let d = (&y - x).norm();
        if best.as_ref().map_or(true, |(bd, _, _)| d < *bd - 1e-15) {
            let mut mu = Vector::zeros(r);
            for (k, &i) in idx.iter().enumerate() {
                mu[i] = mu_s[k];
            }
            best = Some((d, y, mu));
        }
    }
    best.map(|(_, y, mu)| (y, mu))
        .ok_or_else(|| SweepError::Projection("no feasible active set; the set is empty".into()))
}

fn dual_ascent(m: &Matrix, c: &Vector, x: &Vector, tol: f64) -> Result<(Vector, Vector)> {
    let r = m.nrows();
    let mut mu = Vector::zeros(r);
    let mut y = x.clone();
    const MAX_SWEEPS: usize = 200_000;
    for _ in 0..MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for i in 0..r {
            let g = (m.row(i) * &y)[0] - c[i];
            let new = (mu[i] + g).max(0.0);
            let delta = new - mu[i];
            if delta != 0.0 {
                y -= m.row(i).transpose() * delta;
                mu[i] = new;
                change = change.max(delta.abs());
            }
        }
        if !mu.iter().all(|v| v.is_finite()) || mu.amax() > 1e12 {
            return Err(SweepError::Projection("dual ascent diverged; the set is empty".into()));
        }
        let viol = (m * &y - c).max();
        if change <= tol * 1e-3 && viol <= tol {
            return Ok((y, mu));
        }
    }
    Err(SweepError::Numerical(
        "dual coordinate ascent did not converge".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halfline_projection() {
        let m = Matrix::from_element(1, 1, 1.0);
        let c = Vector::from_vec(vec![1.0]);
        let p = project_polyhedron(&m, &c, &Vector::from_vec(vec![2.0]), 1e-9).unwrap();
        assert!((p.point[0] - 1.0).abs() < 1e-14);
        assert!((p.multipliers[0] - 1.0).abs() < 1e-14);
        assert_eq!(p.active, vec![0]);
    }

    #[test]
    fn corner_projection_both_methods() {
        let m = Matrix::identity(2, 2);
        let c = Vector::from_vec(vec![0.0, 0.0]);
        let x = Vector::from_vec(vec![1.0, 2.0]);
        for method in [QpMethod::Enumeration, QpMethod::DualAscent] {
            let p = project_polyhedron_with(&m, &c, &x, 1e-12, method).unwrap();
            assert!(p.point.norm() < 1e-9);
            assert!((p.multipliers[0] - 1.0).abs() < 1e-9);
            assert!((p.multipliers[1] - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_set_is_reported() {
        let m = Matrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let c = Vector::from_vec(vec![-1.0, -1.0]);
        let x = Vector::from_vec(vec![0.0]);
        assert!(project_polyhedron_with(&m, &c, &x, 1e-9, QpMethod::Enumeration).is_err());
        assert!(project_polyhedron_with(&m, &c, &x, 1e-9, QpMethod::DualAscent).is_err());
    }

    #[test]
    fn scaled_rows_give_unscaled_multipliers() {
        let m = Matrix::from_element(1, 1, 4.0);
        let c = Vector::from_vec(vec![4.0]);
        let p = project_polyhedron(&m, &c, &Vector::from_vec(vec![3.0]), 1e-9).unwrap();
        assert!((p.point[0] - 1.0).abs() < 1e-14);
        // x − y = Mᵀ μ = 4 μ = 2
        assert!((p.multipliers[0] - 0.5).abs() < 1e-14);
    }
}
