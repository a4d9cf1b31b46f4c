//! Oracles shared by the integration tests.
#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sweep_ocp::geometry::{
    coderivative_orthant, normal_cone_decompose, project_onto_moving_set, project_polyhedron_with, CodClass,
    FieldMap, ProjectOptions, QpMethod, ThetaSet,
};
use sweep_ocp::{Matrix, SweepError, Vector};

/// Affine field over the orthant with a feasible base point.
pub struct AffineInstance {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Vector,
    pub u: Vector,
    /// Point of `C(u)` whose active rows are `active`.
    pub base: Vector,
    pub active: Vec<usize>,
    /// Point to project.
    pub query: Vector,
}

impl AffineInstance {
    pub fn random(rng: &mut StdRng) -> Self {
        let s = rng.gen_range(1..=3);
        // Surjectivity of ∇ₓψ needs n ≥ s.
        let n = rng.gen_range(s..=4);
        let m = rng.gen_range(1..=2);
        let mut unif = |r: usize, c: usize, w: f64| Matrix::from_fn(r, c, |_, _| rng.gen_range(-w..w));
        let a = unif(s, n, 2.0);
        let b = unif(s, m, 1.0);
        let u = unif(m, 1, 1.0).column(0).into_owned();
        let base = unif(n, 1, 1.0).column(0).into_owned();
        let query = &base + unif(n, 1, 3.0).column(0).into_owned();
        let mut active = Vec::new();
        let mut slack = Vector::zeros(s);
        for i in 0..s {
            if rng.gen_bool(0.5) {
                active.push(i);
            } else {
                slack[i] = rng.gen_range(0.1..1.0);
            }
        }
        let c = -(&a * &base) - &b * &u - slack;
        Self {
            a,
            b,
            c,
            u,
            base,
            active,
            query,
        }
    }

    pub fn field(&self) -> FieldMap {
        FieldMap::linear(self.a.clone(), self.b.clone(), self.c.clone())
    }

    /// `C(u) = {y | A y ≤ rhs}`.
    pub fn rhs(&self) -> Vector {
        -(&self.b * &self.u + &self.c)
    }
}

fn pinv(m: &Matrix) -> Matrix {
    m.clone().svd(true, true).pseudo_inverse(1e-12).expect("svd computed with both factors")
}

/// Nearest point of `{y | A y ≤ rhs}` among the projections of `x` onto
/// the affine hulls `{A_S y = rhs_S}` of all row subsets `S`.
pub fn brute_force_projection(a: &Matrix, rhs: &Vector, x: &Vector) -> Vector {
    let s = a.nrows();
    let mut best: Option<(f64, Vector)> = None;
    for mask in 0u32..(1 << s) {
        let rows: Vec<usize> = (0..s).filter(|i| mask & (1 << i) != 0).collect();
        let y = if rows.is_empty() {
            x.clone()
        } else {
            let a_s = Matrix::from_fn(rows.len(), a.ncols(), |r, c| a[(rows[r], c)]);
            let r_s = Vector::from_iterator(rows.len(), rows.iter().map(|&i| rhs[i]));
            let y = x - a_s.transpose() * pinv(&(&a_s * a_s.transpose())) * (&a_s * x - &r_s);
            if (&a_s * &y - &r_s).amax() > 1e-9 {
                continue;
            }
            y
        };
        if (a * &y - rhs).max() > 1e-9 {
            continue;
        }
        let d = (&y - x).norm();
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, y));
        }
    }
    best.expect("the base point makes the set nonempty").1
}

/// Worst errors over `count` random instances: projection against the
/// brute-force oracle (both the moving-set projection and the dual-ascent
/// QP), and the round trip `η ↦ ∇ₓψᵀη ↦ η`.
pub fn geometry_oracle_errors(seed: u64, count: usize) -> (f64, f64) {
    let mut rng = StdRng::seed_from_u64(seed);
    let (mut proj_err, mut eta_err) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let (p, e) = instance_errors(&AffineInstance::random(&mut rng), &mut rng);
        proj_err = proj_err.max(p);
        eta_err = eta_err.max(e);
    }
    (proj_err, eta_err)
}

pub fn instance_errors(inst: &AffineInstance, rng: &mut StdRng) -> (f64, f64) {
    let field = inst.field();
    let theta = ThetaSet::orthant(inst.a.nrows());
    let want = brute_force_projection(&inst.a, &inst.rhs(), &inst.query);
    let (y, _) = project_onto_moving_set(&field, &theta, &inst.u, &inst.query, &ProjectOptions::default())
        .expect("projection onto a nonempty polyhedron");
    let dual = project_polyhedron_with(&inst.a, &inst.rhs(), &inst.query, 1e-12, QpMethod::DualAscent)
        .expect("dual ascent projection");
    let proj_err = (&y - &want).amax().max((&dual.point - &want).amax());

    let s = inst.a.nrows();
    let mut eta = Vector::zeros(s);
    for &i in &inst.active {
        eta[i] = rng.gen_range(0.0..2.0);
    }
    let v = inst.a.transpose() * &eta;
    let dec = normal_cone_decompose(&field, &theta, &inst.base, &inst.u, &v, 1e-9).expect("decomposition");
    (proj_err, (&dec.eta - &eta).amax())
}

/// The orthant coderivative table, written out case by case.
/// `Err(i)` marks the first coordinate with `ξ ∉ N_{R_-}(w)`.
pub fn table_entry(w: &[f64], xi: &[f64], dir: &[f64]) -> Result<Option<Vec<CodClass>>, usize> {
    if let Some(i) = (0..w.len()).find(|&i| !(w[i] <= 0.0 && xi[i] >= 0.0 && (w[i] == 0.0 || xi[i] == 0.0))) {
        return Err(i);
    }
    let mut out = Vec::new();
    for i in 0..w.len() {
        let class = if w[i] < 0.0 || (xi[i] == 0.0 && dir[i] < 0.0) {
            CodClass::MustBeZero
        } else if xi[i] == 0.0 {
            CodClass::Nonnegative
        } else if dir[i] == 0.0 {
            CodClass::Free
        } else {
            return Ok(None);
        };
        out.push(class);
    }
    Ok(Some(out))
}

/// Number of sign patterns (over `{−1, 0, 1}` per entry, `s ≤ 3`) where the
/// library disagrees with [`table_entry`], and the number checked.
pub fn coderivative_table_mismatches() -> (usize, usize) {
    let signs = [-1.0, 0.0, 1.0];
    let (mut bad, mut total) = (0, 0);
    for s in 1..=3usize {
        let per = 27usize.pow(s as u32);
        for code in 0..per {
            let (mut w, mut xi, mut d) = (vec![0.0; s], vec![0.0; s], vec![0.0; s]);
            let mut c = code;
            for i in 0..s {
                w[i] = signs[c % 3];
                xi[i] = signs[(c / 3) % 3];
                d[i] = signs[(c / 9) % 3];
                c /= 27;
            }
            let got = coderivative_orthant(&Vector::from_vec(w.clone()), &Vector::from_vec(xi.clone()), &Vector::from_vec(d.clone()));
            let agree = match (got, table_entry(&w, &xi, &d)) {
                (Ok(a), Ok(b)) => a == b,
                (Err(SweepError::Domain { index }), Err(i)) => index == i,
                _ => false,
            };
            total += 1;
            if !agree {
                bad += 1;
            }
        }
    }
    (bad, total)
}
