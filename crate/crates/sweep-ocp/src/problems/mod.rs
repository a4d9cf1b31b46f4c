//! The worked instances with their known solutions and multipliers.

use serde::{Deserialize, Serialize};

use crate::certify::{Atom, Certificate, VectorMeasure};
use crate::dynamics::Path;
use crate::error::{Result, SweepError};
use crate::io::{
    CostSpec, Dims, DriftSpec, DynamicsSpec, FieldSpec, InitialSpec, MovingSetSpec, ProblemSpec, SolverSpec,
    StateMapSpec, TerminalSpec, ThetaSpec, TrajectorySpec,
};
use crate::ocp::{Breakpoints, MinimizerMode, OcpProblem, RunningTerm};
use crate::Vector;

/// Instance ids accepted by [`instance`].
pub const INSTANCE_IDS: [&str; 4] = ["remark45", "counterexample53", "elastoplastic61", "nonconvex22"];

/// Mesh-free description of a certificate: `λ`, a piecewise-linear `p` and
/// the atoms of `γ`; the density of `γ` is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateTemplate {
    pub lambda: f64,
    pub p: Breakpoints,
    pub atoms: Vec<(f64, Vec<f64>)>,
}

impl CertificateTemplate {
    /// Samples the template along a primal pair.
    pub fn on_mesh(&self, problem: &OcpProblem, x: &Path, u: &Path) -> Result<Certificate> {
        let mesh = x.mesh;
        let p = Path::from_fn(mesh, |t| self.p.eval(t));
        let mut gamma = VectorMeasure::zero(mesh.k, problem.system.s());
        gamma.atoms = self
            .atoms
            .iter()
            .map(|(t, w)| Atom {
                t: *t,
                weight: Vector::from_column_slice(w),
            })
            .collect();
        Certificate::build(problem, x, u, self.lambda, p, gamma)
    }
}

#[derive(Clone, Debug)]
pub struct NamedInstance {
    pub id: String,
    pub spec: ProblemSpec,
    pub problem: OcpProblem,
    pub known_solution: Option<TrajectorySpec>,
    pub known_certificate: Option<CertificateTemplate>,
    pub notes: String,
}

impl NamedInstance {
    fn new(
        id: &str,
        spec: ProblemSpec,
        known_certificate: Option<CertificateTemplate>,
        notes: &str,
    ) -> Result<Self> {
        Ok(Self {
            id: id.to_string(),
            problem: spec.build()?,
            known_solution: spec.reference.clone(),
            spec,
            known_certificate,
            notes: notes.to_string(),
        })
    }

    /// Known state and control sampled on `k` intervals.
    pub fn known_pair(&self, k: usize) -> Option<(Path, Path)> {
        let mesh = self.problem.mesh(k).ok()?;
        self.known_solution.as_ref().map(|s| (s.state_on(mesh), s.control_on(mesh)))
    }

    /// Known certificate along the known pair on `k` intervals.
    pub fn known_certificate_on(&self, k: usize) -> Option<Result<Certificate>> {
        let (x, u) = self.known_pair(k)?;
        let template = self.known_certificate.as_ref()?;
        Some(template.on_mesh(&self.problem, &x, &u))
    }
}

pub fn instance(id: &str) -> Result<NamedInstance> {
    match id {
        "remark45" => remark45(),
        "counterexample53" => counterexample53(),
        "elastoplastic61" => elastoplastic61_with(1.0),
        "nonconvex22" => nonconvex22(),
        other => Err(SweepError::UnknownInstance(other.to_string())),
    }
}

fn bp(points: &[(f64, &[f64])]) -> Breakpoints {
    Breakpoints(points.iter().map(|(t, v)| (*t, v.to_vec())).collect())
}

fn scalar_linear_field() -> FieldSpec {
    FieldSpec::Linear {
        a: vec![vec![1.0]],
        b: vec![vec![1.0]],
        c: vec![0.0],
    }
}

/// `ψ = x + u`, `Θ = R_-`, tracking `u` towards `t − 2` then `−1`.
pub fn remark45() -> Result<NamedInstance> {
    let spec = ProblemSpec {
        schema: 1,
        dims: Dims { n: 1, m: 1, s: 1 },
        dynamics: DynamicsSpec {
            f: DriftSpec::Zero,
            g: StateMapSpec::Identity,
        },
        moving_set: MovingSetSpec {
            psi: scalar_linear_field(),
            theta: ThetaSpec::Orthant,
        },
        cost: CostSpec {
            phi: TerminalSpec::Quadratic {
                weight: 1.0,
                target: vec![1.0],
            },
            ell: vec![RunningTerm::ControlTracking {
                weight: 1.0,
                reference: bp(&[(0.0, &[-2.0]), (1.0, &[-1.0]), (2.0, &[-1.0])]),
            }],
        },
        initial: InitialSpec {
            x0: vec![1.5],
            u0: vec![-2.0],
        },
        horizon: 2.0,
        solver: SolverSpec {
            mode: MinimizerMode::W12xC,
            ..SolverSpec::default()
        },
        reference: Some(TrajectorySpec {
            state: bp(&[(0.0, &[1.5]), (0.5, &[1.5]), (1.0, &[1.0]), (2.0, &[1.0])]),
            control: bp(&[(0.0, &[-2.0]), (1.0, &[-1.0]), (2.0, &[-1.0])]),
        }),
    };
    NamedInstance::new(
        "remark45",
        spec,
        Some(CertificateTemplate {
            lambda: 1.0,
            p: bp(&[(0.0, &[0.0, 0.0])]),
            atoms: Vec::new(),
        }),
        "C(u) = (-inf, -u]. The known pair has zero cost, so it is optimal; the multipliers are lambda = 1 with p, q and gamma zero.",
    )
}

/// Fixed rows `x_i ≤ b_i` driven by `b`, stationary at `x ≡ b ≡ (1,1)`.
pub fn counterexample53() -> Result<NamedInstance> {
    let spec = ProblemSpec {
        schema: 1,
        dims: Dims { n: 2, m: 2, s: 2 },
        dynamics: DynamicsSpec {
            f: DriftSpec::Zero,
            g: StateMapSpec::Identity,
        },
        moving_set: MovingSetSpec {
            psi: FieldSpec::FixedRows {
                rows: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            },
            theta: ThetaSpec::Orthant,
        },
        cost: CostSpec {
            phi: TerminalSpec::Quadratic {
                weight: 1.0,
                target: vec![0.0, 0.0],
            },
            ell: vec![RunningTerm::ControlRateEnergy { weight: 1.0 }],
        },
        initial: InitialSpec {
            x0: vec![1.0, 1.0],
            u0: vec![1.0, 1.0],
        },
        horizon: 1.0,
        solver: SolverSpec::default(),
        reference: Some(TrajectorySpec {
            state: bp(&[(0.0, &[1.0, 1.0])]),
            control: bp(&[(0.0, &[1.0, 1.0])]),
        }),
    };
    NamedInstance::new(
        "counterexample53",
        spec,
        Some(CertificateTemplate {
            lambda: 1.0,
            p: bp(&[(0.0, &[-1.0, -1.0, 0.0, 0.0])]),
            atoms: Vec::new(),
        }),
        "Offsets b = (1,1) so that x = (1,1) is feasible. The pair is stationary, not optimal: the conventional Hamiltonian is +inf along it while the modified one vanishes with nu = 0.",
    )
}

/// Play operator in sweeping form with `A = 1`, `Z = [−1, 1]`, strain
/// `ε(t) = a·t` and stress variable `ζ(0) = 0`; needs `|a| ≤ 1` so that
/// `ψ = ζ + ε` stays in `Z`. The terminal target is the simulated
/// endpoint `ζ(1) = 0`.
pub fn elastoplastic61_with(a: f64) -> Result<NamedInstance> {
    if !(a.is_finite() && a.abs() <= 1.0) {
        return Err(SweepError::Config(format!("strain rate must satisfy |a| <= 1, got {a}")));
    }
    let spec = ProblemSpec {
        schema: 1,
        dims: Dims { n: 1, m: 1, s: 1 },
        dynamics: DynamicsSpec {
            f: DriftSpec::Zero,
            g: StateMapSpec::Identity,
        },
        moving_set: MovingSetSpec {
            psi: scalar_linear_field(),
            theta: ThetaSpec::Box {
                lower: vec![Some(-1.0)],
                upper: vec![Some(1.0)],
            },
        },
        cost: CostSpec {
            phi: TerminalSpec::Quadratic {
                weight: 1.0,
                target: vec![0.0],
            },
            ell: vec![RunningTerm::ControlRateEnergy { weight: 1.0 }],
        },
        initial: InitialSpec {
            x0: vec![0.0],
            u0: vec![0.0],
        },
        horizon: 1.0,
        solver: SolverSpec::default(),
        reference: Some(TrajectorySpec {
            state: bp(&[(0.0, &[0.0])]),
            control: bp(&[(0.0, &[0.0]), (1.0, &[a])]),
        }),
    };
    NamedInstance::new(
        "elastoplastic61",
        spec,
        Some(CertificateTemplate {
            lambda: 1.0,
            p: bp(&[(0.0, &[0.0, 0.0])]),
            atoms: vec![(1.0, vec![-a])],
        }),
        "zeta' in -N(zeta; -eps + Z) with Z = [-1, 1]. The linear strain satisfies the necessary conditions with p = 0, q = (a, a) and an atom -a at T; eps = 0 has lower cost, so the linear strain is stationary rather than optimal.",
    )
}

/// `ψ(x, u) = x² + u − 1`, `Θ = R_-`, unit drift pushing `x` into the
/// nonconvex boundary.
pub fn nonconvex22() -> Result<NamedInstance> {
    let spec = ProblemSpec {
        schema: 1,
        dims: Dims { n: 1, m: 1, s: 1 },
        dynamics: DynamicsSpec {
            f: DriftSpec::Constant { c: vec![1.0] },
            g: StateMapSpec::Identity,
        },
        moving_set: MovingSetSpec {
            psi: FieldSpec::Quadratic,
            theta: ThetaSpec::Orthant,
        },
        cost: CostSpec {
            phi: TerminalSpec::Quadratic {
                weight: 1.0,
                target: vec![0.5],
            },
            ell: vec![RunningTerm::ControlRateEnergy { weight: 1.0 }],
        },
        initial: InitialSpec {
            x0: vec![0.0],
            u0: vec![0.0],
        },
        horizon: 2.0,
        solver: SolverSpec::default(),
        reference: None,
    };
    NamedInstance::new(
        "nonconvex22",
        spec,
        None,
        "C(u) = {x : x^2 <= 1 - u}, a nonconvex-field instance without a known solution.",
    )
}
