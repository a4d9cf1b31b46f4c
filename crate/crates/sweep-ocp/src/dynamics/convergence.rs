use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SweepError};
use crate::{Matrix, Vector};

use super::path::{Mesh, Path};
use super::simulate::simulate;
use super::system::SweepingSystem;

/// Meshes finer than this are not built for a common refinement; the finer
/// of the two meshes is used instead.
const MAX_COMMON_MESH: usize = 1 << 20;

/// Error differences at or below this are rounding noise, not decrease.
pub const ERROR_NOISE_FLOOR: f64 = 1e-12;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `(‖a − b‖_{W^{1,2}}, max_j ‖a(t_j) − b(t_j)‖)` for piecewise-linear paths.
///
/// Paths on different meshes are interpolated onto their common refinement,
/// where both stay piecewise linear, so the value is exact.
pub fn w12_distance(a: &Path, b: &Path) -> Result<(f64, f64)> {
    check_dim("path dimension", a.dim(), b.dim())?;
    let (a, b) = if a.mesh.k == b.mesh.k {
        (a.clone(), b.resample(a.mesh)?)
    } else {
        let l = a.mesh.k / gcd(a.mesh.k, b.mesh.k) * b.mesh.k;
        let k = if l <= MAX_COMMON_MESH { l } else { a.mesh.k.max(b.mesh.k) };
        let mesh = Mesh::new(k, a.mesh.horizon)?;
        (a.resample(mesh)?, b.resample(mesh)?)
    };
    let h = a.h();
    let mut sq = (a.node(0) - b.node(0)).norm_squared();
    let mut sup: f64 = 0.0;
    for j in 0..a.k() {
        sq += h * (a.slope(j) - b.slope(j)).norm_squared();
    }
    for j in 0..=a.k() {
        sup = sup.max((a.node(j) - b.node(j)).norm());
    }
    Ok((sq.sqrt(), sup))
}

/// Shift the offsets `b` so that fixed rows `⟨u_i, x⟩ − b_i` take along
/// `states` the values they take along the reference.
pub fn feasible_companion_polyhedral(
    reference_state: &Path,
    rows: &Matrix,
    reference_b: &Path,
    states: &Path,
) -> Result<Path> {
    if reference_state.mesh != states.mesh || reference_b.mesh != states.mesh {
        return Err(SweepError::Config("companion paths must share a mesh".into()));
    }
    check_dim("row count", rows.nrows(), reference_b.dim())?;
    check_dim("row width", reference_state.dim(), rows.ncols())?;
    let values = (0..=states.k())
        .map(|j| reference_b.node(j) + rows * (states.node(j) - reference_state.node(j)))
        .collect();
    Path::new(states.mesh, values)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub w12_state: f64,
    pub sup_state: f64,
    pub sup_control: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Every refinement lowers the W^{1,2} state error by more than
    /// [`ERROR_NOISE_FLOOR`].
    pub strictly_decreasing: bool,
    /// No refinement raises it by more than the noise floor.
    pub non_increasing: bool,
}

/// Worker threads for fan-out: `SWEEP_THREADS` if set, else the core count.
pub fn worker_count() -> usize {
    std::env::var("SWEEP_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Simulate each control and compare with the reference pair.
pub fn convergence_study(
    system: &SweepingSystem,
    controls: &[Path],
    reference_state: &Path,
    reference_control: &Path,
) -> Result<ConvergenceTable> {
    if controls.windows(2).any(|w| w[0].k() >= w[1].k()) {
        return Err(SweepError::Config("mesh sizes must be strictly increasing".into()));
    }
    let workers = worker_count().min(controls.len()).max(1);
    let mut results: Vec<Option<Result<ConvergenceRow>>> = (0..controls.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = results.chunks_mut(controls.len().div_ceil(workers)).collect();
        let mut start = 0;
        for chunk in chunks {
            let len = chunk.len();
            let mine = &controls[start..start + len];
            start += len;
            scope.spawn(move || {
                for (slot, u) in chunk.iter_mut().zip(mine) {
                    *slot = Some(study_row(system, u, reference_state, reference_control));
                }
            });
        }
    });
    let rows = results
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect::<Result<Vec<_>>>()?;
    let strictly_decreasing = rows
        .windows(2)
        .all(|w| w[0].w12_state - w[1].w12_state > ERROR_NOISE_FLOOR);
    let non_increasing = rows
        .windows(2)
        .all(|w| w[1].w12_state - w[0].w12_state <= ERROR_NOISE_FLOOR);
    Ok(ConvergenceTable {
        rows,
        strictly_decreasing,
        non_increasing,
    })
}

fn study_row(system: &SweepingSystem, u: &Path, xref: &Path, uref: &Path) -> Result<ConvergenceRow> {
    let sim = simulate(system, u)?;
    let (w12_state, sup_state) = w12_distance(&sim.state, xref)?;
    let (_, sup_control) = w12_distance(u, &uref.resample(u.mesh)?)?;
    Ok(ConvergenceRow {
        k: u.k(),
        w12_state,
        sup_state,
        sup_control,
    })
}

/// Node-wise sampling of a control given as a function of time.
pub fn sample_controls(ks: &[usize], horizon: f64, f: impl Fn(f64) -> Vector) -> Result<Vec<Path>> {
    ks.iter()
        .map(|&k| Ok(Path::from_fn(Mesh::new(k, horizon)?, &f)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_row_slice(x)
    }

    #[test]
    fn w12_examples() {
        let m = Mesh::new(7, 1.0).unwrap();
        let zero = Path::constant(m, v(&[0.0]));
        let lin = Path::from_fn(m, |t| v(&[t]));
        let (w, s) = w12_distance(&zero, &lin).unwrap();
        assert!((w - 1.0).abs() < 1e-12 && (s - 1.0).abs() < 1e-12);
        let off = Path::constant(m, v(&[-0.3]));
        let (w, s) = w12_distance(&zero, &off).unwrap();
        assert!((w - 0.3).abs() < 1e-15 && (s - 0.3).abs() < 1e-15);
        assert_eq!(w12_distance(&lin, &lin).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn w12_across_meshes_is_exact() {
        // Kink at 1/2 seen by a 3-interval mesh against its own 6-interval resampling.
        let a = Path::from_fn(Mesh::new(3, 1.0).unwrap(), |t| v(&[(t - 0.5).abs()]));
        let b = a.resample(Mesh::new(6, 1.0).unwrap()).unwrap();
        let (w, _) = w12_distance(&a, &b).unwrap();
        assert!(w < 1e-12);
    }

    #[test]
    fn companion_examples() {
        let m = Mesh::new(1, 1.0).unwrap();
        let rows = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let xbar = Path::constant(m, v(&[1.0, 1.0]));
        let bbar = Path::constant(m, v(&[1.0]));
        let x = Path::constant(m, v(&[1.1, 1.0]));
        let b = feasible_companion_polyhedral(&xbar, &rows, &bbar, &x).unwrap();
        assert!((b.node(0)[0] - 1.1).abs() < 1e-15);
        let same = feasible_companion_polyhedral(&xbar, &rows, &bbar, &xbar).unwrap();
        assert_eq!(same, bbar);
        let none = Matrix::zeros(0, 2);
        let empty = Path::constant(m, Vector::zeros(0));
        assert_eq!(feasible_companion_polyhedral(&xbar, &none, &empty, &x).unwrap(), empty);
    }
}
