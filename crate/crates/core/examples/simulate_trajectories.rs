//! Exact SSA and Euler–Maruyama CLE paths of CS-I from (100, 100); the slow
//! combination (x1 + x2)/2 barely moves while x1 and x2 fluctuate.

use slowvar::network::builtin_cs1;
use slowvar::simulate::{cle_run, ssa_run, RngStream};

fn spread(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn main() -> slowvar::Result<()> {
    let (net, _) = builtin_cs1();
    let mut rng = RngStream::new(42, 0);
    let ssa = ssa_run(&net, &[100, 100], 0.05, &mut rng, None)?;
    let (lo1, hi1) = spread(ssa.states.iter().map(|x| x[0] as f64));
    let (los, his) = spread(ssa.states.iter().map(|x| 0.5 * (x[0] + x[1]) as f64));
    println!("SSA: {} events in t ∈ [0, 0.05]", ssa.len());
    println!("  x1 ranged over [{lo1}, {hi1}], s over [{los}, {his}]");

    let cle = cle_run(&net, &[100.0, 100.0], 1e-5, 0.05, &mut rng)?;
    let (lo1, hi1) = spread(cle.states.iter().map(|x| x[0]));
    let (los, his) = spread(cle.states.iter().map(|x| 0.5 * (x[0] + x[1])));
    println!("CLE: {} steps of 1e-5", cle.len() - 1);
    println!("  x1 ranged over [{lo1:.1}, {hi1:.1}], s over [{los:.2}, {his:.2}]");

    let mut out = Vec::new();
    ssa.write_csv(&mut out, net.slow_weights())?;
    println!("first CSV rows:\n{}", String::from_utf8_lossy(&out).lines().take(3).collect::<Vec<_>>().join("\n"));
    Ok(())
}
