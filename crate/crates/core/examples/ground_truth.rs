//! Full truncated-CME stationary solve of CS-II and the Poisson law of CS-I.

use slowvar::evaluate::{full_cme_stationary, ground_truth_cs1, poisson_convolution_marginal};
use slowvar::network::{builtin_cs1, builtin_cs2_with, VolumeScaling};

fn main() -> slowvar::Result<()> {
    let (_, dom) = builtin_cs1();
    let gt = ground_truth_cs1(&dom);
    let conv = poisson_convolution_marginal(&gt.levels);
    let gap: f64 = conv.iter().zip(&gt.marginal).map(|(a, b)| (a - b).abs()).sum();
    println!("CS-I: {} levels, joint-vs-convolution L¹ {gap:.2e}", gt.levels.len());

    for scaling in [VolumeScaling::Stated, VolumeScaling::Table] {
        let (net, dom) = builtin_cs2_with(scaling);
        let gt = full_cme_stationary(&net, &dom, net.slow_weights().expect("built-in"))?;
        let (mode, p) = gt
            .levels
            .iter()
            .zip(&gt.marginal)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        println!("CS-II ({scaling}): mode s = {mode} with P = {p:.5}, boundary mass {:.3}", gt.boundary_mass);
    }
    Ok(())
}
