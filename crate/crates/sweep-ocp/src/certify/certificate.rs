use serde::{Deserialize, Serialize};

use crate::dynamics::{NodeConvention, Path};
use crate::error::{check_dim, Result, SweepError};
use crate::geometry::normal_cone_generators;
use crate::ocp::{MinimizerMode, OcpProblem, RunningArgs, RunningGrad};
use crate::{Matrix, Vector};

use super::eta::{anchor_node, check_pair, frame, recover_eta_with};
use super::measure::{Atom, VectorMeasure};
use super::TOL_POS;

/// Multipliers for the continuous-time conditions, sampled on a mesh.
///
/// `p` and `q` live in `R^{n+m}` (state part first). `q` holds node values
/// of its left-continuous representative, so `q.node(j)` includes atoms
/// at `t_j`; on `(t_j, t_{j+1})` it is read as `q.node(j+1)`. `eta`, `nu`
/// and `subgrad` are per interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Certificate {
    pub lambda: f64,
    pub p: Path,
    pub q: Path,
    pub eta: Vec<Vector>,
    pub gamma: VectorMeasure,
    pub nu: Vec<Vector>,
    pub subgrad: Vec<RunningGrad>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<Vector>>,
    #[serde(default)]
    pub convention: NodeConvention,
}

impl Certificate {
    /// Completes `(λ, p, γ)` along a primal pair: `η` by recovery, the
    /// gradient selections of `ℓ`, `q` from `p` and `γ`, and `ν` as the
    /// interval density of `γ`.
    pub fn build(problem: &OcpProblem, x: &Path, u: &Path, lambda: f64, p: Path, gamma: VectorMeasure) -> Result<Self> {
        let convention = NodeConvention::Left;
        let eta = recover_eta_with(&problem.system, x, u, convention, 1e-8)?;
        let q = q_from_measure(problem, x, u, &p, &gamma, convention)?;
        Ok(Self {
            lambda,
            subgrad: subgradient_selections(problem, x, u),
            nu: gamma.density.clone(),
            p,
            q,
            eta,
            gamma,
            mu: None,
            convention,
        })
    }

    /// Multiply `(λ, p, q, γ, ν)` by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let scale = |path: &Path| Path {
            mesh: path.mesh,
            values: path.values.iter().map(|v| v * c).collect(),
        };
        Self {
            lambda: self.lambda * c,
            p: scale(&self.p),
            q: scale(&self.q),
            gamma: self.gamma.scaled(c),
            nu: self.nu.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    pub(crate) fn check_shape(&self, problem: &OcpProblem, x: &Path) -> Result<()> {
        let (n, m, s) = (problem.n(), problem.m(), problem.system.s());
        let k = x.mesh.k;
        check_dim("certificate p dimension", n + m, self.p.dim())?;
        check_dim("certificate q dimension", n + m, self.q.dim())?;
        if self.p.mesh != x.mesh || self.q.mesh != x.mesh {
            return Err(SweepError::Config("certificate and primal pair use different meshes".into()));
        }
        check_dim("certificate eta intervals", k, self.eta.len())?;
        check_dim("certificate nu intervals", k, self.nu.len())?;
        check_dim("certificate gamma intervals", k, self.gamma.density.len())?;
        check_dim("certificate subgradient intervals", k, self.subgrad.len())?;
        for v in self.eta.iter().chain(&self.nu).chain(&self.gamma.density) {
            check_dim("certificate vector in R^s", s, v.len())?;
        }
        for g in &self.subgrad {
            check_dim("subgradient w^x", n, g.wx.len())?;
            check_dim("subgradient w^u", m, g.wu.len())?;
            check_dim("subgradient v^x", n, g.vx.len())?;
            check_dim("subgradient v^u", m, g.vu.len())?;
        }
        Ok(())
    }
}

/// Multipliers of the discrete conditions: `p_j` at every node and one
/// `γ_j ∈ R^s` per interval.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteCertificate {
    pub lambda: f64,
    pub p: Path,
    pub gamma: Vec<Vector>,
    pub subgrad: Vec<RunningGrad>,
}

impl DiscreteCertificate {
    pub fn new(problem: &OcpProblem, x: &Path, u: &Path, lambda: f64, p: Path, gamma: Vec<Vector>) -> Self {
        Self {
            lambda,
            p,
            gamma,
            subgrad: subgradient_selections(problem, x, u),
        }
    }
}

/// Gradient of `ℓ` at `(t_j, x_j, u_j, Δx_j/h, Δu_j/h)` for every interval;
/// in the `w12c` mode the velocity of `u` is not an argument and `v^u = 0`.
pub fn subgradient_selections(problem: &OcpProblem, x: &Path, u: &Path) -> Vec<RunningGrad> {
    let (n, m) = (problem.n(), problem.m());
    (0..x.mesh.k)
        .map(|j| {
            let xdot = x.slope(j);
            let udot = match problem.mode {
                MinimizerMode::W12xW12 => u.slope(j),
                MinimizerMode::W12xC => Vector::zeros(m),
            };
            let (_, mut g) = problem.running.eval(
                n,
                m,
                x.mesh.t(j),
                &RunningArgs {
                    x: x.node(j),
                    u: u.node(j),
                    xdot: &xdot,
                    udot: &udot,
                },
            );
            if problem.mode == MinimizerMode::W12xC {
                g.vu.fill(0.0);
            }
            g
        })
        .collect()
}

/// `q(t_j) = p(t_j) − ∫_{[t_j,T]} ∇ψᵀ dγ` at every node, with the density
/// on an interval paired with `∇ψ` at that interval's node.
pub fn q_from_measure(
    problem: &OcpProblem,
    x: &Path,
    u: &Path,
    p: &Path,
    gamma: &VectorMeasure,
    convention: NodeConvention,
) -> Result<Path> {
    check_pair(&problem.system, x, u)?;
    let mesh = x.mesh;
    let h = mesh.h();
    check_dim("gamma intervals", mesh.k, gamma.density.len())?;
    let atoms = gamma.node_atoms(&mesh)?;
    let d = problem.n() + problem.m();
    let mut tail = Vector::zeros(d);
    let mut values = vec![Vector::zeros(d); mesh.k + 1];
    for j in (0..=mesh.k).rev() {
        if j < mesh.k {
            let f = frame(&problem.system, x, u, anchor_node(convention, j))?;
            tail += f.jfull.transpose() * &gamma.density[j] * h;
        }
        if atoms[j].len() > 0 && atoms[j].norm() > 0.0 {
            let f = frame(&problem.system, x, u, j)?;
            tail += f.jfull.transpose() * &atoms[j];
        }
        values[j] = p.node(j) - &tail;
    }
    Path::new(mesh, values)
}

/// Whether every constraint row at `ψ(x_j,u_j)` is below `−TOL_POS`.
pub(crate) fn strictly_interior(problem: &OcpProblem, x: &Path, u: &Path, j: usize) -> Result<bool> {
    let f = frame(&problem.system, x, u, j)?;
    let rows = problem.system.theta.rows_at(&f.z);
    Ok(rows.values.iter().all(|&g| g < -TOL_POS))
}

/// Output of [`assemble_certificate`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Assembly {
    pub certificate: Certificate,
    /// Euclidean norm of the weighted least-squares residual.
    pub residual: f64,
    /// The fitted relations do not determine the multipliers uniquely; the
    /// minimum-norm fit is returned.
    pub non_unique: bool,
}

/// Fits `p`, `γ` and the endpoint cone multipliers for a fixed `λ` so that
/// the adjoint relation, `q^u = λ v^u` and transversality hold in least
/// squares.
///
/// Densities are only allowed on intervals whose end nodes are not strictly
/// interior, atoms only at non-interior nodes `t_j > 0` and at `T`; mass on
/// `[0, t_1)` enters no relation and is set to zero. Endpoint multipliers
/// that come out negative are dropped and the fit repeated.
pub fn assemble_certificate(problem: &OcpProblem, x: &Path, u: &Path, lambda: f64) -> Result<Assembly> {
    check_pair(&problem.system, x, u)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SweepError::Config(format!("λ must be finite and nonnegative, got {lambda}")));
    }
    let convention = NodeConvention::Left;
    let eta = recover_eta_with(&problem.system, x, u, convention, 1e-8)?;
    let subgrad = subgradient_selections(problem, x, u);
    let mesh = x.mesh;
    let (k, h) = (mesh.k, mesh.h());
    let (n, m) = (problem.n(), problem.m());
    let d = n + m;
    let s = problem.system.s();
    let field = problem.system.effective_field();

    let interior: Vec<bool> = (0..=k).map(|j| strictly_interior(problem, x, u, j)).collect::<Result<_>>()?;
    let dens: Vec<usize> = (1..k).filter(|&i| !(interior[i] && interior[i + 1])).collect();
    let atom_nodes: Vec<usize> = (1..=k).filter(|&i| i == k || !interior[i]).collect();
    let end = frame(&problem.system, x, u, k)?;
    let end_gens = normal_cone_generators(&problem.system.theta, &end.z, TOL_POS) * &end.jfull;

    let p_col = |j: usize| j * d;
    let dens_col0 = (k + 1) * d;
    let atom_col0 = dens_col0 + dens.len() * s;
    let beta_col0 = atom_col0 + atom_nodes.len() * s;
    let mut beta_active: Vec<usize> = (0..end_gens.nrows()).collect();

    let frames: Vec<_> = (0..=k).map(|j| frame(&problem.system, x, u, j)).collect::<Result<_>>()?;
    let lam = lambda;
    let sqh = h.sqrt();
    let v_u = |j: usize| match problem.mode {
        MinimizerMode::W12xW12 => subgrad[j].vu.clone(),
        MinimizerMode::W12xC => Vector::zeros(m),
    };

    loop {
        let cols = beta_col0 + beta_active.len();
        let rows = k * (d + m) + d;
        let mut a = Matrix::zeros(rows, cols);
        let mut b = Vector::zeros(rows);
        // Coefficients of q_j in the unknowns, built from the right end.
        let mut tail = Matrix::zeros(d, cols);
        let mut q_coef = vec![Matrix::zeros(0, 0); k + 1];
        for j in (0..=k).rev() {
            tail.view_mut((0, p_col(j)), (d, d)).fill_with_identity();
            if j < k {
                tail.view_mut((0, p_col(j + 1)), (d, d)).fill(0.0);
            }
            if let Some(pos) = dens.iter().position(|&i| i == j) {
                let jt = frames[anchor_node(convention, j)].jfull.transpose() * h;
                let mut blk = tail.view_mut((0, dens_col0 + pos * s), (d, s));
                blk -= jt;
            }
            if let Some(pos) = atom_nodes.iter().position(|&i| i == j) {
                let jt = frames[j].jfull.transpose();
                let mut blk = tail.view_mut((0, atom_col0 + pos * s), (d, s));
                blk -= jt;
            }
            q_coef[j] = tail.clone();
        }
        for j in 0..k {
            let f = &frames[anchor_node(convention, j)];
            let hess = field.hessian(&f.x, &f.u, &eta[j])?;
            let hc = hess.columns(0, n).clone_owned();
            let r0 = j * (d + m);
            // p_{j+1} − p_j − h Hc q^x_{j+1} = hλ(w_j − Hc v^x_j), scaled by 1/√h.
            let mut blk = Matrix::zeros(d, cols);
            blk.view_mut((0, p_col(j + 1)), (d, d)).fill_with_identity();
            {
                let mut v = blk.view_mut((0, p_col(j)), (d, d));
                v -= Matrix::identity(d, d);
            }
            blk -= &hc * q_coef[j + 1].rows(0, n) * h;
            a.view_mut((r0, 0), (d, cols)).copy_from(&(blk / sqh));
            let w = crate::linalg::vcat(&subgrad[j].wx, &subgrad[j].wu);
            let rhs = (w - &hc * &subgrad[j].vx) * (h * lam);
            b.rows_mut(r0, d).copy_from(&(rhs / sqh));
            // q^u_{j+1} = λ v^u_j, scaled by √h.
            a.view_mut((r0 + d, 0), (m, cols)).copy_from(&(q_coef[j + 1].rows(n, m) * sqh));
            b.rows_mut(r0 + d, m).copy_from(&(v_u(j) * (lam * sqh)));
        }
        // −p_k − Σ β_a g_a = λ(∇φ(x_k), 0).
        let r0 = k * (d + m);
        {
            let mut v = a.view_mut((r0, p_col(k)), (d, d));
            v -= Matrix::identity(d, d);
        }
        for (c, &row) in beta_active.iter().enumerate() {
            let g = end_gens.row(row).transpose();
            a.view_mut((r0, beta_col0 + c), (d, 1)).copy_from(&(-g));
        }
        let (_, grad_phi) = problem.terminal.eval(&end.x);
        b.rows_mut(r0, n).copy_from(&(grad_phi * lam));

        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let cut = (1e-12 * smax).max(f64::MIN_POSITIVE);
        let sol = svd.solve(&b, cut).map_err(|e| SweepError::Numerical(e.to_string()))?;
        let rank = svd.singular_values.iter().filter(|&&v| v > 1e-10 * smax).count();
        let beta = sol.rows(beta_col0, beta_active.len()).clone_owned();
        let scale = 1.0 + sol.amax();
        if let Some((worst, &val)) = beta.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) {
            if val < -1e-10 * scale {
                beta_active.remove(worst);
                continue;
            }
        }
        let residual = (&a * &sol - &b).norm();
        let p = Path::new(mesh, (0..=k).map(|j| sol.rows(p_col(j), d).clone_owned()).collect())?;
        let mut gamma = VectorMeasure::zero(k, s);
        for (pos, &i) in dens.iter().enumerate() {
            gamma.density[i] = sol.rows(dens_col0 + pos * s, s).clone_owned();
        }
        for (pos, &i) in atom_nodes.iter().enumerate() {
            let w = sol.rows(atom_col0 + pos * s, s).clone_owned();
            if w.amax() > 0.0 {
                gamma.atoms.push(Atom { t: mesh.t(i), weight: w });
            }
        }
        let q = q_from_measure(problem, x, u, &p, &gamma, convention)?;
        let certificate = Certificate {
            lambda,
            p,
            q,
            eta,
            nu: gamma.density.clone(),
            gamma,
            subgrad,
            mu: None,
            convention,
        };
        return Ok(Assembly {
            certificate,
            residual,
            non_unique: rank < cols,
        });
    }
}
