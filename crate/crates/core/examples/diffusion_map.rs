//! Leading nontrivial eigenvector of the anisotropic diffusion map on the
//! full CS-I domain, compared against the known slow variable.

use slowvar::evaluate::ordering_correlation;
use slowvar::pipeline::{discover, DiscoveryParams};
use slowvar::network::builtin_cs1;

fn main() -> slowvar::Result<()> {
    let (net, dom) = builtin_cs1();
    let d = discover(&net, &dom, &DiscoveryParams { n_eigs: 3, ..Default::default() })?;
    println!("Δt = {}, {} edges", d.dt, d.graph.edge_count());
    println!("eigenvalues {:?} after {} matvecs", d.eigen.values, d.eigen.matvecs);
    let s: Vec<f64> = dom.states().map(|x| 0.5 * (x[0] + x[1]) as f64).collect();
    let r = ordering_correlation(&d.eigen.vectors[0], &s)?;
    println!("corr(φ1, s) = {r:.6}");
    Ok(())
}
