//! Constrained multiscale baseline on CS-I with a short L_c sweep.

use slowvar::evaluate::{ground_truth_cs1, l1_error};
use slowvar::network::builtin_cs1;
use slowvar::slowchain::cma_baseline;

fn main() -> slowvar::Result<()> {
    let (net, dom) = builtin_cs1();
    let truth = ground_truth_cs1(&dom);
    let reference = truth.marginal_by_level();
    for est in cma_baseline(&net, &dom, &truth.levels, &[100, 1_000, 5_000], 5, 0)? {
        let keyed: Vec<(i64, f64)> = reference.iter().map(|r| r.0).zip(est.pi.iter().copied()).collect();
        println!("L_c = {:>5}: L¹ error {:.4}", est.lc, l1_error(&keyed, &reference));
    }
    Ok(())
}
