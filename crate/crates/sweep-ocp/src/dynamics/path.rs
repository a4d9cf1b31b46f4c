use serde::{Deserialize, Serialize};

use crate::error::{Result, SweepError};
use crate::Vector;

/// Uniform mesh `t_j = j·T/k`, `j = 0..=k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub k: usize,
    pub horizon: f64,
}

impl Mesh {
    pub fn new(k: usize, horizon: f64) -> Result<Self> {
        if k == 0 {
            return Err(SweepError::Config("mesh needs at least one interval".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SweepError::Config(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { k, horizon })
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.k as f64
    }

    /// Node time; the last node is exactly `T`.
    pub fn t(&self, j: usize) -> f64 {
        if j >= self.k {
            self.horizon
        } else {
            self.horizon * (j as f64) / (self.k as f64)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.k).map(|j| self.t(j)).collect()
    }

    /// Index of the interval containing `t` (clamped to the mesh).
    pub fn interval_of(&self, t: f64) -> usize {
        let j = (t / self.h()).floor();
        if j <= 0.0 {
            0
        } else {
            (j as usize).min(self.k - 1)
        }
    }
}

/// Piecewise-linear trajectory given by its node values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub mesh: Mesh,
    pub values: Vec<Vector>,
}

impl Path {
    pub fn new(mesh: Mesh, values: Vec<Vector>) -> Result<Self> {
        if values.len() != mesh.k + 1 {
            return Err(SweepError::Config(format!(
                "path on k={} needs {} nodes, got {}",
                mesh.k,
                mesh.k + 1,
                values.len()
            )));
        }
        let d = values[0].len();
        if values.iter().any(|v| v.len() != d) {
            return Err(SweepError::Config("path nodes have mixed dimensions".into()));
        }
        Ok(Self { mesh, values })
    }

    /// Sample `f` at the nodes.
    pub fn from_fn(mesh: Mesh, f: impl Fn(f64) -> Vector) -> Self {
        let values = (0..=mesh.k).map(|j| f(mesh.t(j))).collect();
        Self { mesh, values }
    }

    pub fn constant(mesh: Mesh, v: Vector) -> Self {
        Self {
            mesh,
            values: vec![v; mesh.k + 1],
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn k(&self) -> usize {
        self.mesh.k
    }

    pub fn h(&self) -> f64 {
        self.mesh.h()
    }

    pub fn node(&self, j: usize) -> &Vector {
        &self.values[j]
    }

    /// Difference quotient on `(t_j, t_{j+1})`.
    pub fn slope(&self, j: usize) -> Vector {
        (&self.values[j + 1] - &self.values[j]) / self.h()
    }

    /// Linear interpolation at `t` (clamped to `[0, T]`).
    pub fn eval(&self, t: f64) -> Vector {
        let t = t.clamp(0.0, self.mesh.horizon);
        let j = self.mesh.interval_of(t);
        let t0 = self.mesh.t(j);
        let w = ((t - t0) / self.h()).clamp(0.0, 1.0);
        &self.values[j] * (1.0 - w) + &self.values[j + 1] * w
    }

    /// Interpolate onto another mesh with the same horizon.
    pub fn resample(&self, mesh: Mesh) -> Result<Self> {
        if (mesh.horizon - self.mesh.horizon).abs() > 1e-12 * self.mesh.horizon {
            return Err(SweepError::Config(format!(
                "cannot resample a path on [0,{}] onto [0,{}]",
                self.mesh.horizon, mesh.horizon
            )));
        }
        if mesh.k == self.mesh.k {
            return Ok(self.clone());
        }
        if mesh.k % self.mesh.k == 0 {
            // Exact refinement: interpolate with integer ratios.
            let r = mesh.k / self.mesh.k;
            let mut values = Vec::with_capacity(mesh.k + 1);
            for j in 0..mesh.k {
                let (i, off) = (j / r, j % r);
                let w = off as f64 / r as f64;
                values.push(&self.values[i] * (1.0 - w) + &self.values[i + 1] * w);
            }
            values.push(self.values[self.mesh.k].clone());
            return Ok(Self { mesh, values });
        }
        Ok(Self::from_fn(mesh, |t| self.eval(t)))
    }

    /// Node values stacked as one vector.
    pub fn flatten(&self) -> Vector {
        let d = self.dim();
        Vector::from_fn(self.values.len() * d, |i, _| self.values[i / d][i % d])
    }

    pub fn unflatten(mesh: Mesh, dim: usize, flat: &Vector) -> Result<Self> {
        if flat.len() != (mesh.k + 1) * dim {
            return Err(SweepError::Config("flat path has the wrong length".into()));
        }
        let values = (0..=mesh.k)
            .map(|j| flat.rows(j * dim, dim).clone_owned())
            .collect();
        Self::new(mesh, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_endpoints_are_exact() {
        let m = Mesh::new(3, 2.0).unwrap();
        assert_eq!(m.t(0), 0.0);
        assert_eq!(m.t(3), 2.0);
        assert_eq!(m.nodes().len(), 4);
        assert!(Mesh::new(0, 1.0).is_err());
        assert!(Mesh::new(2, -1.0).is_err());
    }

    #[test]
    fn interpolation_and_slopes() {
        let m = Mesh::new(4, 1.0).unwrap();
        let p = Path::from_fn(m, |t| Vector::from_element(1, 3.0 * t));
        assert!((p.eval(0.3)[0] - 0.9).abs() < 1e-14);
        assert!((p.slope(2)[0] - 3.0).abs() < 1e-12);
        let fine = p.resample(Mesh::new(12, 1.0).unwrap()).unwrap();
        assert!((fine.values[5][0] - 1.25).abs() < 1e-14);
        let odd = p.resample(Mesh::new(7, 1.0).unwrap()).unwrap();
        assert!((odd.values[7][0] - 3.0).abs() < 1e-14);
        assert!(p.resample(Mesh::new(4, 2.0).unwrap()).is_err());
    }

    #[test]
    fn flatten_round_trip() {
        let m = Mesh::new(2, 1.0).unwrap();
        let p = Path::from_fn(m, |t| Vector::from_vec(vec![t, -t]));
        let back = Path::unflatten(m, 2, &p.flatten()).unwrap();
        assert_eq!(p, back);
    }
}
