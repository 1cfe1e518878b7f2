//! A network from the key–value text format: a fast isomerisation with
//! slow production and decay, run through discovery and estimation.

use slowvar::network::parse_network;
use slowvar::pipeline::{assess, discover, estimate, ground_truth, DiscoveryParams, TruthKind};

const NETWORK: &str = "
species = A, B
slow_weights = 0.5, 0.5
domain = 10..50, 10..50
reaction = 0 -> A @ 30
reaction = A -> B @ 100
reaction = B -> A @ 100
reaction = B -> 0 @ 1
";

fn main() -> slowvar::Result<()> {
    let file = parse_network(NETWORK)?;
    let (net, dom) = (file.network, file.domain.expect("declared"));
    let d = discover(&net, &dom, &DiscoveryParams::default())?;
    println!("{} bins after denoising and truncation (k = {})", d.partition.len(), d.k);
    let est = estimate(&net, &dom, &d.partition)?;
    println!("fast reactions {:?}", est.classes.fast);
    let truth = ground_truth(TruthKind::FullCme, &net, &dom)?;
    let a = assess(&net, &dom, &d.partition, &est.chain.pi, &truth)?;
    println!("mean Jaccard {:.4}, L¹ error {:.4}", a.score.jaccard_mean, a.error);
    Ok(())
}
