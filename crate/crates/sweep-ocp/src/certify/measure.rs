use serde::{Deserialize, Serialize};

use crate::dynamics::Mesh;
use crate::error::{Result, SweepError};
use crate::Vector;

/// Point mass of a vector measure at a mesh node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub weight: Vector,
}

/// Signed vector measure on `[0, T]`: a density constant on each mesh
/// interval plus atoms at nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorMeasure {
    pub density: Vec<Vector>,
    pub atoms: Vec<Atom>,
}

impl VectorMeasure {
    pub fn zero(k: usize, s: usize) -> Self {
        Self {
            density: vec![Vector::zeros(s); k],
            atoms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.density
            .first()
            .map(|d| d.len())
            .or_else(|| self.atoms.first().map(|a| a.weight.len()))
            .unwrap_or(0)
    }

    /// `Σ h‖density_j‖ + Σ ‖atom‖`.
    pub fn total_variation(&self, h: f64) -> f64 {
        self.density.iter().map(|d| h * d.norm()).sum::<f64>() + self.atoms.iter().map(|a| a.weight.norm()).sum::<f64>()
    }

    /// Atom weights summed per node, indexed `0..=k`.
    pub fn node_atoms(&self, mesh: &Mesh) -> Result<Vec<Vector>> {
        let s = self.dim();
        let mut out = vec![Vector::zeros(s); mesh.k + 1];
        let h = mesh.h();
        for a in &self.atoms {
            let r = a.t / h;
            let j = r.round();
            if !(0.0..=mesh.k as f64).contains(&j) || (r - j).abs() > 1e-9 * (1.0 + r.abs()) {
                return Err(SweepError::Config(format!("atom at t = {} is not on a mesh node", a.t)));
            }
            if a.weight.len() != s {
                return Err(SweepError::Dimension {
                    context: "atom weight",
                    expected: s,
                    got: a.weight.len(),
                });
            }
            out[j as usize] += &a.weight;
        }
        Ok(out)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            density: self.density.iter().map(|d| d * c).collect(),
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    t: a.t,
                    weight: &a.weight * c,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn total_variation_adds_density_and_atoms() {
        let mesh = Mesh::new(4, 1.0).unwrap();
        let mut g = VectorMeasure::zero(4, 2);
        g.density[1] = Vector::from_row_slice(&[3.0, 4.0]);
        g.atoms.push(Atom {
            t: 1.0,
            weight: Vector::from_row_slice(&[-1.0, 0.0]),
        });
        assert!((g.total_variation(mesh.h()) - (0.25 * 5.0 + 1.0)).abs() < 1e-15);
        let nodes = g.node_atoms(&mesh).unwrap();
        assert_eq!(nodes[4][0], -1.0);
        assert_eq!(nodes[0].norm(), 0.0);
    }

    #[test]
    fn off_mesh_atoms_are_rejected() {
        let mesh = Mesh::new(4, 1.0).unwrap();
        let g = VectorMeasure {
            density: vec![Vector::zeros(1); 4],
            atoms: vec![Atom {
                t: 0.3,
                weight: Vector::from_element(1, 1.0),
            }],
        };
        assert!(g.node_atoms(&mesh).is_err());
    }
}
