//! Randomized invariants of the numerical building blocks.

use proptest::prelude::*;

use slowvar::admgraph::SparseSimilarity;
use slowvar::artifacts::write_atomic;
use slowvar::binning::{denoise, Partition, PartitionSource};
use slowvar::config::PipelineConfig;
use slowvar::covariance::local_covariance;
use slowvar::evaluate::{jaccard_matrix, max_matching};
use slowvar::linalg::CsrMatrix;
use slowvar::network::{builtin_cs1, builtin_cs2};
use slowvar::slowchain::{global_balance, stationary_distribution};
use slowvar::stages::{decode_graph, encode_graph};

fn chunked(n: usize, cuts: &[usize]) -> Vec<Vec<usize>> {
    let mut cuts: Vec<usize> = cuts.iter().map(|c| c % n).filter(|&c| c > 0).collect();
    cuts.sort_unstable();
    cuts.dedup();
    let mut bins = Vec::new();
    let mut start = 0;
    for c in cuts.into_iter().chain([n]) {
        bins.push((start..c).collect());
        start = c;
    }
    bins
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_law_balances(rates in prop::collection::vec((0.01f64..100.0, 0.01f64..100.0), 2..40)) {
        let (mut up, mut down): (Vec<f64>, Vec<f64>) = rates.into_iter().unzip();
        *up.last_mut().unwrap() = 0.0;
        down[0] = 0.0;
        let pi = stationary_distribution(&up, &down).unwrap();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pi.iter().all(|&p| p >= 0.0));
        let scale = up.iter().chain(&down).fold(0.0f64, |m, v| m.max(*v));
        prop_assert!(global_balance(&up, &down, &pi) <= 1e-12 * scale);
    }

    #[test]
    fn denoising_never_raises_the_score(n in 10usize..300, cuts in prop::collection::vec(0usize..1000, 1..60)) {
        let p = Partition::new(chunked(n, &cuts), PartitionSource::Eigenvector);
        let d = denoise(&p);
        prop_assert!(d.theta <= p.theta);
        prop_assert!(d.len() <= p.len());
        let mut covered: Vec<usize> = d.bins.concat();
        covered.sort_unstable();
        prop_assert_eq!(covered, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn self_matching_is_exact(n in 5usize..200, cuts in prop::collection::vec(0usize..1000, 0..30)) {
        let p = Partition::new(chunked(n, &cuts), PartitionSource::GroundTruth);
        let j = jaccard_matrix(&p, &p, n);
        let m = max_matching(&j);
        prop_assert_eq!(m.pairs.len(), p.len());
        prop_assert!(m.pairs.iter().all(|&(a, b)| a == b));
        prop_assert!((m.total - p.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn covariance_is_symmetric_psd(x1 in 1i64..110, x2 in 1i64..110, dt in 1e-5f64..1.0) {
        for (net, _) in [builtin_cs1(), builtin_cs2()] {
            let c = local_covariance(&net, &[x1, x2], dt).unwrap();
            prop_assert_eq!(c.sigma[1], c.sigma[2]);
            prop_assert!(c.lambda_min() >= -1e-9 * c.lambda_max().abs());
            prop_assert!(c.lambda_max() >= c.lambda_min());
        }
    }

    #[test]
    fn csr_matvec_matches_dense(
        n in 1usize..30,
        entries in prop::collection::vec((0usize..30, 0usize..30, -5.0f64..5.0), 0..120),
        x in prop::collection::vec(-3.0f64..3.0, 30),
    ) {
        let t: Vec<(usize, usize, f64)> = entries.into_iter().map(|(r, c, v)| (r % n, c % n, v)).collect();
        let m = CsrMatrix::from_triplets(n, n, t);
        let dense = m.to_dense();
        let y = m.matvec(&x[..n]);
        for r in 0..n {
            let expect: f64 = (0..n).map(|c| dense[r][c] * x[c]).sum();
            prop_assert!((y[r] - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn graph_codec_round_trips(n in 2usize..40, edges in prop::collection::vec((0usize..40, 0usize..40, 0.001f64..1.0), 1..100)) {
        let t: Vec<(usize, usize, f64)> = edges
            .into_iter()
            .map(|(i, j, w)| (i % n, j % n, w))
            .filter(|(i, j, _)| i != j)
            .flat_map(|(i, j, w)| [(i, j, w), (j, i, w)])
            .collect();
        let weights = CsrMatrix::from_triplets(n, n, t);
        let degrees = weights.row_sums();
        let g = SparseSimilarity { weights, degrees, eps: 0.5, rho: 3.0 };
        let back = decode_graph(&encode_graph(&g)).unwrap();
        prop_assert_eq!(back.weights, g.weights);
        prop_assert_eq!(back.degrees, g.degrees);
    }

    #[test]
    fn config_text_round_trips(
        eps in 0.01f64..10.0,
        k in prop::option::of(1usize..500),
        seed in any::<u64>(),
        lcs in prop::collection::vec(1usize..100_000, 1..6),
    ) {
        let cfg = PipelineConfig { eps, k, seed, lcs, ..Default::default() };
        let mut back = PipelineConfig::default();
        back.apply_text(&cfg.to_text()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn atomic_write_is_readable(bytes in prop::collection::vec(any::<u8>(), 0..2048)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blob.bin");
        write_atomic(&path, &bytes).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }
}
