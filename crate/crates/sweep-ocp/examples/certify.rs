//! Check the published multipliers for the elastoplastic example, and show
//! the conventional Hamiltonian blowing up on the counterexample.

use sweep_ocp::certify::{assemble_certificate, residual_continuous_el};
use sweep_ocp::problems::instance;

fn main() -> sweep_ocp::Result<()> {
    let k = 50;
    for id in ["elastoplastic61", "counterexample53"] {
        let inst = instance(id)?;
        let (x, u) = inst.known_pair(k).expect("known pair");
        let cert = inst.known_certificate_on(k).expect("known certificate")?;
        let report = residual_continuous_el(&inst.problem, &x, &u, &cert);
        println!("{id}: all pass = {}, conventional H = {:?}", report.all_pass(), report.conventional_hamiltonian);
        for (name, item) in &report.items {
            println!("  {name:24} residual {:.2e}  pass {}", item.residual, item.pass);
        }
    }

    // Without a certificate: fit one by least squares.
    let inst = instance("remark45")?;
    let (x, u) = inst.known_pair(40).expect("known pair");
    let fit = assemble_certificate(&inst.problem, &x, &u, 1.0)?;
    let report = residual_continuous_el(&inst.problem, &x, &u, &fit.certificate);
    println!("remark45 assembled: fit residual {:.2e}, all pass = {}", fit.residual, report.all_pass());
    Ok(())
}
