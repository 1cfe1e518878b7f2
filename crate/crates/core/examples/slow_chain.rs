//! Aggregated birth–death chain over the true CS-I level sets and its
//! stationary law against the Poisson ground truth.

use slowvar::binning::Partition;
use slowvar::evaluate::ground_truth_cs1;
use slowvar::network::builtin_cs1;
use slowvar::pipeline::estimate;
use slowvar::slowchain::{balance_residual, fokker_planck_density};

fn main() -> slowvar::Result<()> {
    let (net, dom) = builtin_cs1();
    let (truth_bins, levels) = Partition::ground_truth(&dom, net.slow_weights().expect("built-in"));
    let est = estimate(&net, &dom, &truth_bins)?;
    let chain = &est.chain;
    let mid = levels.iter().position(|&s| s == 100.0).expect("level 100");
    println!("fast reactions {:?}", est.classes.fast);
    println!("at s = 100: Θ1 = {}, Θ2 = {:.4}", chain.theta1[mid], chain.theta2[mid]);
    println!("balance residual {:.2e}", balance_residual(&chain.theta1, &chain.theta2, &chain.pi));

    let gt = ground_truth_cs1(&dom);
    let l1: f64 = chain.pi.iter().zip(&gt.marginal).map(|(a, b)| (a - b).abs()).sum();
    println!("L¹ distance to the Poisson marginal: {l1:.5}");
    let fp = fokker_planck_density(&chain.theta1, &chain.theta2)?;
    let l1: f64 = fp.iter().zip(&chain.pi).map(|(a, b)| (a - b).abs()).sum();
    println!("Fokker–Planck quadrature vs. birth–death π: {l1:.5}");
    Ok(())
}
