//! Solve the discrete remark45 problem with both solvers.

use std::time::Instant;

use sweep_ocp::ocp::{solve, SolveOptions, SolverKind};
use sweep_ocp::problems::instance;

fn main() -> sweep_ocp::Result<()> {
    let inst = instance("remark45")?;
    let k = 100;
    for solver in [SolverKind::Smoothed, SolverKind::Shooting] {
        let start = Instant::now();
        let opts = SolveOptions {
            solver,
            ..SolveOptions::default()
        };
        let sol = solve(&inst.problem, k, &opts)?;
        let r = &sol.report;
        println!(
            "{solver:?}: cost {:.3e}, converged {}, {} iterations, {:.2} s",
            r.cost,
            r.converged,
            r.iterations,
            start.elapsed().as_secs_f64()
        );
        let u = &sol.decision.u;
        for j in [0, 25, 50, 75, 100] {
            println!("  u({:.2}) = {:+.6}", u.mesh.t(j), u.node(j)[0]);
        }
    }
    Ok(())
}
