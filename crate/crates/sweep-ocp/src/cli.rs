//! Command implementations behind the `sweep` binary.
//!
//! Exit codes: `0` success, `2` schema, configuration or shape error,
//! `3` simulation failure, `4` solver nonconvergence, `5` certificate
//! check failure. Every failure also writes `{"exit_code", "error"}` as
//! JSON next to the requested output (`<out>.error.json`, or
//! `error.json` inside an output directory).

use std::fs;
use std::path::{Path as FsPath, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::certify::{assemble_certificate, residual_continuous_el, Certificate, ResidualReport};
use crate::dynamics::{simulate, w12_distance, worker_count, Mesh, NodeConvention};
use crate::error::SweepError;
use crate::io::{fmt_num, read_path_file, write_path_file, write_rows, write_table, ProblemSpec};
use crate::ocp::{cost_eval, solve, DiscreteDecision, MinimizerMode, SolveOptions, SolveReport, SolverKind};
use crate::problems::{instance, INSTANCE_IDS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SIMULATION: i32 = 3;
pub const EXIT_NONCONVERGED: i32 = 4;
pub const EXIT_CERTIFY: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "sweep", version, about = "Simulate, solve and certify controlled sweeping processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Catching-up trajectory of a control CSV.
    Simulate {
        spec: PathBuf,
        control: PathBuf,
        /// State CSV; step records go to `<stem>.records.csv` beside it.
        out: PathBuf,
    },
    /// Solve the discrete problem and write x.csv, u.csv, eta.csv, report.json.
    Solve {
        spec: PathBuf,
        out_dir: PathBuf,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Check the extended Euler–Lagrange conditions along a solution.
    Certify {
        spec: PathBuf,
        /// Directory holding x.csv and u.csv.
        solution_dir: PathBuf,
        out: PathBuf,
        /// Certificate JSON; assembled from the solution when absent.
        #[arg(long)]
        certificate: Option<PathBuf>,
        /// Cost multiplier used for assembly.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
    },
    /// Error table of discrete solutions against the spec's reference.
    Converge {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        /// Wide CSV; the long format goes to `<stem>.long.csv`.
        out: PathBuf,
        #[command(flatten)]
        flags: SolveFlags,
    },
    /// Write a shipped instance as spec.json, plus x.csv, u.csv and
    /// certificate.json when a solution is known.
    Export {
        id: String,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 100)]
        k: usize,
    },
}

#[derive(Debug, Default, Clone, Args)]
pub struct SolveFlags {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub sigma_schedule: Option<Vec<f64>>,
    /// w12w12 or w12c.
    #[arg(long)]
    pub mode: Option<String>,
    /// smoothed or shooting.
    #[arg(long)]
    pub solver: Option<String>,
}

/// A failed command: exit code and message.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub exit_code: i32,
    pub error: String,
}

impl CliError {
    pub fn new(exit_code: i32, error: impl std::fmt::Display) -> Self {
        Self {
            exit_code,
            error: error.to_string(),
        }
    }

    fn config(e: impl std::fmt::Display) -> Self {
        Self::new(EXIT_CONFIG, e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn is_shape_error(e: &SweepError) -> bool {
    matches!(
        e,
        SweepError::Config(_)
            | SweepError::Dimension { .. }
            | SweepError::Json(_)
            | SweepError::Csv(_)
            | SweepError::Io(_)
            | SweepError::UnknownInstance(_)
    )
}

/// Exit code for an error raised while running a computation whose own
/// failures map to `fallback`.
fn classify(e: SweepError, fallback: i32) -> CliError {
    let code = match &e {
        _ if is_shape_error(&e) => EXIT_CONFIG,
        SweepError::Simulation { .. } => EXIT_SIMULATION,
        _ => fallback,
    };
    CliError::new(code, e)
}

/// Parse arguments, run, and report; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let error_file = error_path(&cli.command);
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.error);
            if let Some(file) = error_file {
                if let Some(dir) = file.parent().filter(|d| !d.as_os_str().is_empty()) {
                    let _ = fs::create_dir_all(dir);
                }
                if let Ok(text) = serde_json::to_string_pretty(&e) {
                    let _ = fs::write(&file, text + "\n");
                }
            }
            e.exit_code
        }
    }
}

/// Where the error JSON of a command goes.
pub fn error_path(cmd: &Command) -> Option<PathBuf> {
    match cmd {
        Command::Simulate { out, .. } | Command::Certify { out, .. } | Command::Converge { out, .. } => {
            Some(sibling(out, "error.json"))
        }
        Command::Solve { out_dir, .. } | Command::Export { out_dir, .. } => Some(out_dir.join("error.json")),
    }
}

/// `dir/stem.suffix` for `dir/stem.ext`.
fn sibling(file: &FsPath, suffix: &str) -> PathBuf {
    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    file.with_file_name(format!("{stem}.{suffix}"))
}

pub fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Simulate { spec, control, out } => cmd_simulate(&spec, &control, &out),
        Command::Solve { spec, out_dir, flags } => cmd_solve(&spec, &out_dir, &flags).map(|_| ()),
        Command::Certify {
            spec,
            solution_dir,
            out,
            certificate,
            lambda,
        } => cmd_certify(&spec, &solution_dir, certificate.as_deref(), lambda, &out).map(|_| ()),
        Command::Converge { spec, ks, out, flags } => cmd_converge(&spec, &ks, &out, &flags).map(|_| ()),
        Command::Export { id, out_dir, k } => cmd_export(&id, &out_dir, k),
    }
}

fn read_spec(path: &FsPath) -> CliResult<ProblemSpec> {
    ProblemSpec::read(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn create_parent(file: &FsPath) -> CliResult<()> {
    match file.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(CliError::config),
        None => Ok(()),
    }
}

pub fn cmd_simulate(spec: &FsPath, control: &FsPath, out: &FsPath) -> CliResult<()> {
    let spec = read_spec(spec)?;
    let problem = spec.build().map_err(CliError::config)?;
    let u = read_path_file(control).map_err(|e| CliError::config(format!("{}: {e}", control.display())))?;
    if u.dim() != problem.m() {
        return Err(CliError::config(format!("control CSV has {} columns, expected {}", u.dim(), problem.m())));
    }
    let sim = simulate(&problem.system, &u).map_err(|e| classify(e, EXIT_SIMULATION))?;
    create_parent(out)?;
    write_path_file(out, &sim.state, "x").map_err(CliError::config)?;
    let records = fs::File::create(sibling(out, "records.csv")).map_err(CliError::config)?;
    let s = problem.system.s();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=s).map(|i| format!("eta_{i}")))
        .chain(std::iter::once("residual".to_string()))
        .collect();
    let rows = sim.records.iter().map(|r| {
        let mut row = vec![r.t];
        row.extend(r.eta.iter());
        row.push(r.projection_residual);
        row
    });
    write_table(records, &header, rows).map_err(CliError::config)
}

/// Applies the command-line overrides to the spec.
pub fn apply_flags(spec: &mut ProblemSpec, flags: &SolveFlags) -> CliResult<()> {
    if let Some(k) = flags.k {
        spec.solver.k = k;
    }
    if let Some(tol) = flags.tol {
        spec.solver.tol = Some(tol);
    }
    if let Some(s) = &flags.sigma_schedule {
        spec.solver.sigma_schedule = Some(s.clone());
    }
    if let Some(mode) = &flags.mode {
        spec.solver.mode = match mode.as_str() {
            "w12w12" => MinimizerMode::W12xW12,
            "w12c" => MinimizerMode::W12xC,
            other => return Err(CliError::config(format!("unknown mode '{other}' (expected w12w12 or w12c)"))),
        };
    }
    if let Some(solver) = &flags.solver {
        spec.solver.solver = solver.parse::<SolverKind>().map_err(CliError::config)?;
    }
    spec.check().map_err(CliError::config)
}

/// Solver options taken from the spec's solver section.
pub fn solve_options(spec: &ProblemSpec) -> SolveOptions {
    let mut opts = SolveOptions {
        solver: spec.solver.solver,
        ..SolveOptions::default()
    };
    if let Some(s) = &spec.solver.sigma_schedule {
        opts.smoothed.sigma_schedule = s.clone();
    }
    if let Some(tol) = spec.solver.tol {
        opts.smoothed.tol = tol;
        opts.shooting.tol = tol;
    }
    opts
}

fn eta_times(z: &DiscreteDecision) -> Vec<f64> {
    let mesh = z.x.mesh;
    let shift = usize::from(z.convention == NodeConvention::Right);
    (0..mesh.k).map(|j| mesh.t(j + shift)).collect()
}

/// Solve, write `x.csv`, `u.csv`, `eta.csv` and `report.json` into
/// `out_dir`, and return the report. Nonconvergence still writes
/// everything before failing with exit 4.
pub fn cmd_solve(spec: &FsPath, out_dir: &FsPath, flags: &SolveFlags) -> CliResult<SolveReport> {
    let mut spec = read_spec(spec)?;
    apply_flags(&mut spec, flags)?;
    let problem = spec.build().map_err(CliError::config)?;
    let opts = solve_options(&spec);
    let sol = solve(&problem, spec.solver.k, &opts).map_err(|e| classify(e, EXIT_NONCONVERGED))?;
    fs::create_dir_all(out_dir).map_err(CliError::config)?;
    let z = &sol.decision;
    write_path_file(&out_dir.join("x.csv"), &z.x, "x").map_err(CliError::config)?;
    write_path_file(&out_dir.join("u.csv"), &z.u, "u").map_err(CliError::config)?;
    let eta = fs::File::create(out_dir.join("eta.csv")).map_err(CliError::config)?;
    let rows = eta_times(z).into_iter().zip(z.eta.iter().map(|e| e.as_slice().to_vec()));
    write_rows(eta, "eta", problem.system.s(), rows).map_err(CliError::config)?;
    let text = serde_json::to_string_pretty(&sol.report).map_err(CliError::config)?;
    fs::write(out_dir.join("report.json"), text + "\n").map_err(CliError::config)?;
    if !sol.report.converged {
        return Err(CliError::new(
            EXIT_NONCONVERGED,
            format!("solver did not converge: {}", sol.report.message),
        ));
    }
    Ok(sol.report)
}

/// Check a solution against a supplied or assembled certificate and write
/// the residual report to `out`. When the certificate is assembled it is
/// also written to `<stem>.certificate.json`.
pub fn cmd_certify(
    spec: &FsPath,
    solution_dir: &FsPath,
    certificate: Option<&FsPath>,
    lambda: f64,
    out: &FsPath,
) -> CliResult<ResidualReport> {
    let spec = read_spec(spec)?;
    let problem = spec.build().map_err(CliError::config)?;
    let read = |name: &str| {
        let file = solution_dir.join(name);
        read_path_file(&file).map_err(|e| CliError::config(format!("{}: {e}", file.display())))
    };
    let (x, u) = (read("x.csv")?, read("u.csv")?);
    if x.dim() != problem.n() || u.dim() != problem.m() {
        return Err(CliError::config(format!(
            "solution has {} state and {} control columns, expected {} and {}",
            x.dim(),
            u.dim(),
            problem.n(),
            problem.m()
        )));
    }
    if x.mesh != u.mesh {
        return Err(CliError::config("x.csv and u.csv are on different meshes"));
    }
    create_parent(out)?;
    let cert = match certificate {
        Some(file) => {
            let text = fs::read_to_string(file).map_err(|e| CliError::config(format!("{}: {e}", file.display())))?;
            let cert: Certificate = serde_json::from_str(&text).map_err(CliError::config)?;
            if cert.p.mesh != x.mesh || cert.q.mesh != x.mesh {
                return Err(CliError::config("certificate mesh differs from the solution mesh"));
            }
            cert
        }
        None => {
            let assembly = assemble_certificate(&problem, &x, &u, lambda).map_err(|e| classify(e, EXIT_CERTIFY))?;
            let text = serde_json::to_string_pretty(&assembly).map_err(CliError::config)?;
            fs::write(sibling(out, "certificate.json"), text + "\n").map_err(CliError::config)?;
            assembly.certificate
        }
    };
    let report = residual_continuous_el(&problem, &x, &u, &cert);
    let text = serde_json::to_string_pretty(&report).map_err(CliError::config)?;
    fs::write(out, text + "\n").map_err(CliError::config)?;
    if !report.all_pass() {
        return Err(CliError::new(
            EXIT_CERTIFY,
            format!("failed checks: {}", report.failures().join(", ")),
        ));
    }
    Ok(report)
}

/// One row of the error table.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergeRow {
    pub k: usize,
    /// `W^{1,2}` distance of the discrete state to the reference.
    pub w12_x: f64,
    /// Largest node error of the discrete control.
    pub sup_u: f64,
    /// `J_k` of the discrete solution minus the cost of the reference.
    pub cost_gap: f64,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Mesh size divisible by every `k` on which the reference breakpoints are
/// nodes, so the sampled reference is the reference itself.
fn reference_mesh_size(ks: &[usize], breaks: &[f64], horizon: f64) -> usize {
    let base = ks.iter().fold(1usize, |l, &k| l / gcd(l, k) * k);
    let aligned = |k: usize| {
        breaks.iter().all(|&t| {
            let r = t / horizon * k as f64;
            (r - r.round()).abs() < 1e-9
        })
    };
    (1..=64).map(|c| base * c).find(|&k| aligned(k)).unwrap_or(base * 64)
}

/// Solve at every `k` (fanned out over at most `SWEEP_THREADS` workers)
/// and compare with the spec's reference; writes the wide table to `out`
/// and `(k, metric, value)` rows to `<stem>.long.csv`.
pub fn cmd_converge(spec: &FsPath, ks: &[usize], out: &FsPath, flags: &SolveFlags) -> CliResult<Vec<ConvergeRow>> {
    let mut spec = read_spec(spec)?;
    apply_flags(&mut spec, flags)?;
    let reference = spec
        .reference
        .clone()
        .ok_or_else(|| CliError::config("spec has no reference trajectory"))?;
    if ks.is_empty() || ks.contains(&0) {
        return Err(CliError::config("ks must be a nonempty list of positive mesh sizes"));
    }
    let horizon = spec.horizon;
    let breaks: Vec<f64> = reference.state.0.iter().chain(&reference.control.0).map(|(t, _)| *t).collect();
    let k_ref = reference_mesh_size(ks, &breaks, horizon);
    let mut ref_spec = spec.clone();
    ref_spec.solver.k = k_ref;
    let ref_problem = ref_spec.build().map_err(CliError::config)?;
    let ref_mesh = Mesh::new(k_ref, horizon).map_err(CliError::config)?;
    let (xref, uref) = (reference.state_on(ref_mesh), reference.control_on(ref_mesh));
    let ref_decision = DiscreteDecision {
        x: xref.clone(),
        u: uref.clone(),
        eta: Vec::new(),
        convention: NodeConvention::Left,
    };
    let ref_cost = cost_eval(&ref_problem, &ref_decision).map_err(CliError::config)?;

    let row_for = |k: usize| -> CliResult<ConvergeRow> {
        let mut s = spec.clone();
        s.solver.k = k;
        let problem = s.build().map_err(CliError::config)?;
        let sol = solve(&problem, k, &solve_options(&s)).map_err(|e| classify(e, EXIT_NONCONVERGED))?;
        if !sol.report.converged {
            return Err(CliError::new(
                EXIT_NONCONVERGED,
                format!("k = {k}: solver did not converge: {}", sol.report.message),
            ));
        }
        let z = &sol.decision;
        let (w12_x, _) = w12_distance(&z.x, &xref).map_err(CliError::config)?;
        let uref_k = reference.control_on(z.u.mesh);
        let sup_u = (0..=k).map(|j| (z.u.node(j) - uref_k.node(j)).norm()).fold(0.0, f64::max);
        Ok(ConvergeRow {
            k,
            w12_x,
            sup_u,
            cost_gap: sol.report.cost - ref_cost,
        })
    };

    let workers = worker_count().min(ks.len()).max(1);
    let mut results: Vec<Option<CliResult<ConvergeRow>>> = vec![None; ks.len()];
    std::thread::scope(|scope| {
        let per = ks.len().div_ceil(workers);
        for (slots, mine) in results.chunks_mut(per).zip(ks.chunks(per)) {
            let row_for = &row_for;
            scope.spawn(move || {
                for (slot, &k) in slots.iter_mut().zip(mine) {
                    *slot = Some(row_for(k));
                }
            });
        }
    });
    let rows = results
        .into_iter()
        .map(|r| r.expect("every slot is filled"))
        .collect::<CliResult<Vec<_>>>()?;

    create_parent(out)?;
    let header = ["k", "w12_x", "sup_u", "cost_gap"].map(String::from);
    let mut wide = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(out)
        .map_err(CliError::config)?;
    let mut long = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(sibling(out, "long.csv"))
        .map_err(CliError::config)?;
    wide.write_record(&header).map_err(CliError::config)?;
    long.write_record(["k", "metric", "value"]).map_err(CliError::config)?;
    for r in &rows {
        let k = r.k.to_string();
        wide.write_record([k.clone(), fmt_num(r.w12_x), fmt_num(r.sup_u), fmt_num(r.cost_gap)])
            .map_err(CliError::config)?;
        for (name, v) in [("w12_x", r.w12_x), ("sup_u", r.sup_u), ("cost_gap", r.cost_gap)] {
            long.write_record([k.as_str(), name, &fmt_num(v)]).map_err(CliError::config)?;
        }
    }
    wide.flush().map_err(CliError::config)?;
    long.flush().map_err(CliError::config)?;
    Ok(rows)
}

pub fn cmd_export(id: &str, out_dir: &FsPath, k: usize) -> CliResult<()> {
    let inst = instance(id).map_err(|e| CliError::config(format!("{e} (known: {})", INSTANCE_IDS.join(", "))))?;
    fs::create_dir_all(out_dir).map_err(CliError::config)?;
    inst.spec.write(&out_dir.join("spec.json")).map_err(CliError::config)?;
    let Some((x, u)) = inst.known_pair(k) else {
        return Ok(());
    };
    write_path_file(&out_dir.join("x.csv"), &x, "x").map_err(CliError::config)?;
    write_path_file(&out_dir.join("u.csv"), &u, "u").map_err(CliError::config)?;
    // The sampled pair only carries the certificate when its kinks are mesh nodes.
    match inst.known_certificate_on(k) {
        Some(Ok(cert)) => {
            let text = serde_json::to_string_pretty(&cert).map_err(CliError::config)?;
            fs::write(out_dir.join("certificate.json"), text + "\n").map_err(CliError::config)?;
        }
        Some(Err(e)) => eprintln!("warning: no certificate on {k} intervals: {e}"),
        None => {}
    }
    Ok(())
}
