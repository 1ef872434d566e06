//! Full-order transport solve: the slab of Example 1 at one inflow value,
//! printing the density profile at a few times.
use kinetic_rom::fom::{compute_rho, run_with, TimeIntegrator};
use kinetic_rom::problem::ProblemSpec;

fn main() -> kinetic_rom::Result<()> {
    let spec = ProblemSpec::example1();
    let quad = spec.quadrature()?;
    let mesh = spec.mesh()?;
    let times = [0.5, 1.0, 2.0, 5.0];
    let states = run_with(&spec, &[5.0], &times, TimeIntegrator::Bdf2)?;

    println!("{:>8} {}", "x", times.map(|t| format!("{:>12}", format!("t = {t}"))).join(""));
    let rho: Vec<Vec<f64>> = states.iter().map(|s| compute_rho(s, &quad)).collect::<Result<_, _>>()?;
    let nodes = mesh.node_coordinates();
    for i in (0..nodes.len()).step_by(12) {
        let row: String = rho.iter().map(|r| format!("{:>12.5}", r[i])).collect();
        println!("{:>8.4} {row}", nodes[i]);
    }
    Ok(())
}
