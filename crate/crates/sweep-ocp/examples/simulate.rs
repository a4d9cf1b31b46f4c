//! Catching-up simulation of the remark45 instance under its optimal
//! control, compared with the known trajectory.

use sweep_ocp::dynamics::{inclusion_residual, simulate, w12_distance};
use sweep_ocp::problems::instance;

fn main() -> sweep_ocp::Result<()> {
    let inst = instance("remark45")?;
    for k in [20, 40, 80, 160] {
        let (xbar, ubar) = inst.known_pair(k).expect("remark45 has a known pair");
        let sim = simulate(&inst.problem.system, &ubar)?;
        let (w12, sup) = w12_distance(&sim.state, &xbar)?;
        let res = inclusion_residual(&inst.problem.system, &sim.state, &ubar)?;
        let worst = res.iter().copied().fold(0.0, f64::max);
        println!("k = {k:4}  w12 error {w12:.3e}  sup error {sup:.3e}  inclusion residual {worst:.1e}");
    }
    Ok(())
}
