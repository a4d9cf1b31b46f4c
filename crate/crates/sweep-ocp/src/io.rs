//! File formats: the JSON problem spec and trajectory CSVs.

use std::fs::File;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Drift, Mesh, Path, StateMap, SweepingSystem};
use crate::error::{Result, SweepError};
use crate::geometry::{FieldMap, SmoothInequality, ThetaSet};
use crate::ocp::{Anchor, Breakpoints, MinimizerMode, OcpProblem, RunningCost, RunningTerm, SolverKind, TerminalCost};
use crate::{Matrix, Vector};

/// Version of the problem-spec format.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub s: usize,
}

/// Drift `f(t, x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    Zero,
    Constant { c: Vec<f64> },
    /// `f(t, x) = A x + c`, `A` given by rows.
    Affine { a: Vec<Vec<f64>>, c: Vec<f64> },
}

/// State map `g`: `"identity"` or `{"matrix": rows}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMapSpec {
    Identity,
    Matrix(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub f: DriftSpec,
    pub g: StateMapSpec,
}

/// The field `ψ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `ψ(x, u) = A x + B u + c`.
    Linear { a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, c: Vec<f64> },
    /// `ψ(x, b) = R x − b`.
    FixedRows { rows: Vec<Vec<f64>> },
    /// `ψ_i(x, (u, b)) = ⟨x, u_i⟩ − b_i`.
    Polyhedral,
    /// `ψ(x, u) = ‖x‖² + u − 1`.
    Quadratic,
}

/// The set `Θ`; `null` box bounds are infinite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaSpec {
    Orthant,
    Box { lower: Vec<Option<f64>>, upper: Vec<Option<f64>> },
    /// `{z | G z ≤ g}`.
    Halfspaces { normals: Vec<Vec<f64>>, offsets: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingSetSpec {
    pub psi: FieldSpec,
    pub theta: ThetaSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalSpec {
    Zero,
    /// `½·weight·‖x − target‖²`.
    Quadratic { weight: f64, target: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub phi: TerminalSpec,
    pub ell: Vec<RunningTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x0: Vec<f64>,
    pub u0: Vec<f64>,
}

/// Piecewise-linear state and control through breakpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub state: Breakpoints,
    pub control: Breakpoints,
}

impl TrajectorySpec {
    pub fn state_on(&self, mesh: Mesh) -> Path {
        Path::from_fn(mesh, |t| self.state.eval(t))
    }

    pub fn control_on(&self, mesh: Mesh) -> Path {
        Path::from_fn(mesh, |t| self.control.eval(t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub state: Breakpoints,
    pub control: Breakpoints,
    pub weight: f64,
}

fn default_k() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub mode: MinimizerMode,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<AnchorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            k: default_k(),
            mode: MinimizerMode::default(),
            solver: SolverKind::default(),
            sigma_schedule: None,
            tol: None,
            anchor: None,
            epsilon: None,
        }
    }
}

/// Problem-spec document (`"schema": 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub schema: u32,
    pub dims: Dims,
    pub dynamics: DynamicsSpec,
    pub moving_set: MovingSetSpec,
    pub cost: CostSpec,
    pub initial: InitialSpec,
    pub horizon: f64,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Known solution used by convergence studies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<TrajectorySpec>,
}

fn matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<Matrix> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(SweepError::Config(format!("{what} must be {nrows} × {ncols}")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn vector(v: &[f64], len: usize, what: &str) -> Result<Vector> {
    if v.len() != len {
        return Err(SweepError::Config(format!("{what} must have length {len}, got {}", v.len())));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(SweepError::Config(format!("{what} has non-finite entries")));
    }
    Ok(Vector::from_column_slice(v))
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.check()?;
        Ok(spec)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        File::create(path)?.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    /// Schema version and dimension cross-checks.
    pub fn check(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(SweepError::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        self.build().map(|_| ())
    }

    fn state_input_dim(&self) -> Result<usize> {
        let Dims { n, .. } = self.dims;
        Ok(match &self.dynamics.g {
            StateMapSpec::Identity => n,
            StateMapSpec::Matrix(rows) => rows.len(),
        })
    }

    fn field(&self) -> Result<FieldMap> {
        let Dims { m, s, .. } = self.dims;
        let d = self.state_input_dim()?;
        let field = match &self.moving_set.psi {
            FieldSpec::Linear { a, b, c } => {
                FieldMap::linear(matrix(a, s, d, "psi.a")?, matrix(b, s, m, "psi.b")?, vector(c, s, "psi.c")?)
            }
            FieldSpec::FixedRows { rows } => {
                if m != s {
                    return Err(SweepError::Config("fixed rows need m = s".into()));
                }
                FieldMap::polyhedral_fixed_rows(matrix(rows, s, d, "psi.rows")?)
            }
            FieldSpec::Polyhedral => {
                if m != s * d + s {
                    return Err(SweepError::Config(format!("polyhedral field needs m = s·n + s = {}", s * d + s)));
                }
                FieldMap::polyhedral(d, s)
            }
            FieldSpec::Quadratic => {
                if m != 1 || s != 1 {
                    return Err(SweepError::Config("quadratic field needs m = s = 1".into()));
                }
                FieldMap::quadratic_example(d)
            }
        };
        Ok(field)
    }

    fn theta(&self) -> Result<ThetaSet> {
        let s = self.dims.s;
        match &self.moving_set.theta {
            ThetaSpec::Orthant => Ok(ThetaSet::orthant(s)),
            ThetaSpec::Box { lower, upper } => {
                if lower.len() != s || upper.len() != s {
                    return Err(SweepError::Config(format!("box bounds must have length {s}")));
                }
                let lo = Vector::from_iterator(s, lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)));
                let hi = Vector::from_iterator(s, upper.iter().map(|v| v.unwrap_or(f64::INFINITY)));
                ThetaSet::boxed(lo, hi)
            }
            ThetaSpec::Halfspaces { normals, offsets } => {
                let g = matrix(normals, offsets.len(), s, "theta.normals")?;
                Ok(ThetaSet::SmoothInequality(SmoothInequality::affine(g, vector(offsets, offsets.len(), "theta.offsets")?)))
            }
        }
    }

    /// The problem this spec describes.
    pub fn build(&self) -> Result<OcpProblem> {
        let Dims { n, m, s } = self.dims;
        let drift = match &self.dynamics.f {
            DriftSpec::Zero => Drift::zero(n),
            DriftSpec::Constant { c } => Drift::constant(vector(c, n, "f.c")?),
            DriftSpec::Affine { a, c } => Drift::affine(matrix(a, n, n, "f.a")?, vector(c, n, "f.c")?),
        };
        let state_map = match &self.dynamics.g {
            StateMapSpec::Identity => StateMap::Identity,
            StateMapSpec::Matrix(rows) => StateMap::Linear(matrix(rows, rows.len(), n, "g")?),
        };
        let field = self.field()?;
        if field.s != s || field.m != m {
            return Err(SweepError::Config("psi does not match dims".into()));
        }
        let system = SweepingSystem::new(
            drift,
            state_map,
            field,
            self.theta()?,
            vector(&self.initial.x0, n, "initial.x0")?,
            self.horizon,
        )?;
        let terminal = match &self.cost.phi {
            TerminalSpec::Zero => TerminalCost::Zero,
            TerminalSpec::Quadratic { weight, target } => TerminalCost::Quadratic {
                weight: *weight,
                target: vector(target, n, "phi.target")?,
            },
        };
        let mut problem = OcpProblem::new(
            system,
            vector(&self.initial.u0, m, "initial.u0")?,
            terminal,
            RunningCost::Terms(self.cost.ell.clone()),
            self.solver.mode,
        )?;
        if self.solver.k == 0 {
            return Err(SweepError::Config("solver.k must be positive".into()));
        }
        if let Some(a) = &self.solver.anchor {
            a.state.validate(n)?;
            a.control.validate(m)?;
            let mesh = problem.mesh(self.solver.k)?;
            let anchor = Anchor {
                state: Path::from_fn(mesh, |t| a.state.eval(t)),
                control: Path::from_fn(mesh, |t| a.control.eval(t)),
                weight: a.weight,
            };
            problem = problem.with_anchor(anchor, self.solver.epsilon.unwrap_or(f64::INFINITY))?;
        } else if self.solver.epsilon.is_some() {
            return Err(SweepError::Config("solver.epsilon needs solver.anchor".into()));
        }
        if let Some(r) = &self.reference {
            r.state.validate(n)?;
            r.control.validate(m)?;
        }
        Ok(problem)
    }
}

/// Writes `t, <prefix>_1, …` with 17 significant digits and LF endings.
pub fn write_path_csv<W: Write>(out: W, path: &Path, prefix: &str) -> Result<()> {
    let times = path.mesh.nodes();
    write_rows(out, prefix, path.dim(), times.iter().zip(&path.values).map(|(t, v)| (*t, v.as_slice().to_vec())))
}

/// Writes one row per time with the given columns.
pub fn write_rows<W: Write>(out: W, prefix: &str, dim: usize, rows: impl Iterator<Item = (f64, Vec<f64>)>) -> Result<()> {
    let header: Vec<String> = std::iter::once("t".to_string()).chain((1..=dim).map(|i| format!("{prefix}_{i}"))).collect();
    write_table(out, &header, rows.map(|(t, v)| std::iter::once(t).chain(v).collect()))
}

/// CSV with the given header and numeric rows.
pub fn write_table<W: Write>(out: W, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_num(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// Scientific notation with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_path_file(file: &std::path::Path, path: &Path, prefix: &str) -> Result<()> {
    write_path_csv(File::create(file)?, path, prefix)
}

/// Reads a trajectory CSV; times must form a uniform mesh starting at 0.
pub fn read_path_csv<R: Read>(input: R) -> Result<Path> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers()?.clone();
    if header.get(0) != Some("t") {
        return Err(SweepError::Config("trajectory CSV must start with a t column".into()));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let nums = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|e| SweepError::Config(format!("bad number '{f}': {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        times.push(nums[0]);
        values.push(Vector::from_column_slice(&nums[1..]));
    }
    if times.len() < 2 {
        return Err(SweepError::Config("trajectory CSV needs at least two rows".into()));
    }
    let k = times.len() - 1;
    let mesh = Mesh::new(k, times[k])?;
    let off_mesh = times.iter().enumerate().any(|(j, &t)| (t - mesh.t(j)).abs() > 1e-9 * mesh.horizon.max(1.0));
    if off_mesh {
        return Err(SweepError::Config("trajectory CSV times are not a uniform mesh from 0".into()));
    }
    Path::new(mesh, values)
}

pub fn read_path_file(file: &std::path::Path) -> Result<Path> {
    read_path_csv(File::open(file)?)
}
