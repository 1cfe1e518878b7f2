//! Union-of-ellipses neighbourhoods and Gaussian Σ-distance weights on a
//! small CS-I box.

use slowvar::admgraph::{build_graph, degree_histogram, ellipse_neighborhood, laplacian};
use slowvar::covariance::{calibrate_dt, domain_covariances};
use slowvar::network::{builtin_cs1, LatticeDomain};

fn main() -> slowvar::Result<()> {
    let (net, _) = builtin_cs1();
    let dom = LatticeDomain::square(80, 120)?;
    let dt = calibrate_dt(&net, &dom)?;
    let covs = domain_covariances(&net, &dom, dt)?;
    let centre = dom.index(&[100, 100])?;
    let hood = ellipse_neighborhood(&dom, &[100, 100], &covs[centre], 4.0)?;
    println!("{} lattice points in the ρ=4 ellipse around (100,100)", hood.len());

    let g = build_graph(&dom, &covs, 4.0, 1.0)?;
    println!("{} nodes, {} undirected edges", g.len(), g.edge_count());
    for (lo, count) in degree_histogram(&g.degrees, 8) {
        println!("  degree ≥ {lo:8.3}: {count}");
    }
    let lap = laplacian(&g)?;
    let row_sum: f64 = lap.random_walk.row(centre).1.iter().sum();
    println!("random-walk row sum at the centre: {row_sum:.15}");
    Ok(())
}
