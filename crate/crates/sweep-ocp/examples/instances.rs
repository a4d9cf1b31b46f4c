//! List the shipped instances and print one as a problem-spec file.

use sweep_ocp::problems::{instance, INSTANCE_IDS};

fn main() -> sweep_ocp::Result<()> {
    for id in INSTANCE_IDS {
        let inst = instance(id)?;
        println!("{id:18} n={} m={} s={}  {}", inst.problem.n(), inst.problem.m(), inst.problem.system.s(), inst.notes);
    }
    let id = std::env::args().nth(1).unwrap_or_else(|| "remark45".into());
    print!("{}", instance(&id)?.spec.to_json()?);
    Ok(())
}
