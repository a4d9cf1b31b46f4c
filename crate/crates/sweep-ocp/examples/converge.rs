//! Mesh-refinement study: simulate sampled controls and compare with the
//! known remark45 pair.

use sweep_ocp::dynamics::{convergence_study, sample_controls, Mesh};
use sweep_ocp::problems::instance;

fn main() -> sweep_ocp::Result<()> {
    let inst = instance("remark45")?;
    let known = inst.known_solution.clone().expect("known solution");
    let ks = [10, 30, 90, 270];
    let controls = sample_controls(&ks, 2.0, |t| known.control.eval(t))?;
    let fine = Mesh::new(2 * 270 * 4, 2.0)?;
    let table = convergence_study(&inst.problem.system, &controls, &known.state_on(fine), &known.control_on(fine))?;
    println!("{:>5} {:>12} {:>12} {:>12}", "k", "w12 state", "sup state", "sup control");
    for r in &table.rows {
        println!("{:5} {:12.4e} {:12.4e} {:12.4e}", r.k, r.w12_state, r.sup_state, r.sup_control);
    }
    println!("strictly decreasing: {}", table.strictly_decreasing);
    Ok(())
}
