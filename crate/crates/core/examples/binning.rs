//! Eigenvector partition of CS-II: k from the increment gaps, Θ-score
//! denoising and boundary truncation, scored against the true level sets.

use slowvar::evaluate::score_partition;
use slowvar::binning::Partition;
use slowvar::network::builtin_cs2;
use slowvar::pipeline::{discover, DiscoveryParams};

fn main() -> slowvar::Result<()> {
    let (net, dom) = builtin_cs2();
    let d = discover(&net, &dom, &DiscoveryParams::default())?;
    println!("k = {}", d.k);
    println!("raw:       {} bins, Θ = {}", d.raw.len(), d.raw.theta);
    println!("denoised:  {} bins, Θ = {}", d.denoised.len(), d.denoised.theta);
    println!("truncated: {} bins, Θ = {} (band {})", d.partition.len(), d.partition.theta, d.band);

    let (truth, levels) = Partition::ground_truth(&dom, net.slow_weights().expect("built-in"));
    println!("ground truth: {} level sets, Θ = {}", truth.len(), truth.theta);
    let score = score_partition(&truth, &levels, &d.partition, dom.len())?;
    let exact = score.matched_jaccard.iter().filter(|&&j| j == 1.0).count();
    println!("{exact}/{} matched bins are exact level sets; order correlation {:.4}", score.matched_jaccard.len(), score.order_corr);
    Ok(())
}
