use edgedp::binary::{debias_node_stats, edge_sensitivity_bound, release_binary, BinaryReleaseOptions};
use edgedp::continuous::{dp_suff_stats, privatize_ranks, suff_stat_sensitivities, SuffStatsConfig};
use edgedp::netgen::{generate, GeneratorSpec};
use edgedp::noise::{randomize_labels, BinaryPrivateLabels, TruncLaplaceParams};
use edgedp::{
    indices, io, oracle, BinaryLabel, CellMode, CellSelection, Exec, LabeledGraph, NoiseMode, PrivacyBudget, RngStream,
};
use proptest::prelude::*;

/// Random labeled graph on `2..=max_n` nodes with unit or fractional weights.
fn small_graph(max_n: usize) -> impl Strategy<Value = LabeledGraph> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs = n * (n - 1) / 2;
        (
            proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.1f64..3.0], pairs),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(weights, labels)| {
                let mut edges = Vec::new();
                let mut k = 0;
                for u in 0..n {
                    for v in u + 1..n {
                        if weights[k] > 0.0 {
                            edges.push((u, v, weights[k]));
                        }
                        k += 1;
                    }
                }
                let labels = labels
                    .into_iter()
                    .map(|a| if a { BinaryLabel::A } else { BinaryLabel::B })
                    .collect();
                LabeledGraph::from_edges(n, edges)
                    .unwrap()
                    .with_binary_labels(labels)
                    .unwrap()
            })
    })
}

fn has_a(g: &LabeledGraph) -> bool {
    g.binary_labels().unwrap().iter().any(|l| l.is_a())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn connectedness_in_unit_interval_and_complementary(g in small_graph(10)) {
        prop_assume!(has_a(&g));
        let c = indices::cross_connectedness(&g, None).unwrap();
        let s = indices::same_connectedness(&g, None).unwrap();
        prop_assert!((0.0..=1.0).contains(&c.value));
        prop_assert!((c.value + s.value - 1.0).abs() < 1e-15);
        let naive = oracle::naive_cross_connectedness(&g, None).unwrap();
        prop_assert!((c.value - naive).abs() < 1e-14);
    }

    #[test]
    fn per_node_shares_match_rho(g in small_graph(10)) {
        prop_assume!(has_a(&g));
        let c = indices::cross_connectedness(&g, None).unwrap();
        let a_nodes: Vec<usize> = (0..g.node_count()).filter(|&i| g.binary_labels().unwrap()[i].is_a()).collect();
        for (&i, &share) in a_nodes.iter().zip(&c.per_node_shares) {
            prop_assert_eq!(share, indices::rho(&g, i).unwrap());
        }
    }

    #[test]
    fn cell_views_agree_with_naive(g in small_graph(10), mask in any::<u16>()) {
        let members: Vec<usize> = (0..g.node_count()).filter(|i| mask >> i & 1 == 1).collect();
        prop_assume!(!members.is_empty());
        let g = g.with_cell("c", members).unwrap();
        for mode in [CellMode::WithinCell, CellMode::EgoToAll] {
            let sel = CellSelection::new("c", mode);
            let fast = indices::cross_connectedness(&g, Some(&sel));
            let naive = oracle::naive_cross_connectedness(&g, Some(&sel));
            match (fast, naive) {
                (Ok(f), Ok(n)) => prop_assert!((f.value - n).abs() < 1e-14),
                (Err(_), Err(_)) => {}
                (f, n) => prop_assert!(false, "fast {:?} vs naive {:?}", f.map(|c| c.value), n),
            }
        }
    }

    #[test]
    fn debiased_stats_are_affine_in_privatized_data(g in small_graph(10), p in 0.0f64..0.45, seed in any::<u64>()) {
        let private = randomize_labels(g.binary_labels().unwrap(), p, &mut RngStream::new(seed, 0)).unwrap();
        let stats = debias_node_stats(&g, &private, None).unwrap();
        let denom = 1.0 - 2.0 * p;
        for k in 0..stats.nodes.len() {
            prop_assert!((0.0..=1.0).contains(&stats.rho_hat[k]));
            prop_assert!((stats.rho_tilde[k] * denom + p - stats.rho_hat[k]).abs() < 1e-12);
            prop_assert!(stats.w[k] == (1.0 - p) / denom || stats.w[k] == -p / denom);
        }
    }

    #[test]
    fn single_toggle_respects_sensitivity_bound(g in small_graph(9), p in 0.01f64..0.45, seed in any::<u64>(), weight in 0.05f64..1.0) {
        let private = randomize_labels(g.binary_labels().unwrap(), p, &mut RngStream::new(seed, 1)).unwrap();
        let search = oracle::max_edge_sensitivity(&g, &private.labels, p, weight).unwrap();
        prop_assert!(search.max_change <= edge_sensitivity_bound(p) * (1.0 + 1e-12));
    }

    #[test]
    fn binary_release_is_deterministic_in_seed(g in small_graph(10), seed in any::<u64>()) {
        prop_assume!(has_a(&g));
        let budget = PrivacyBudget::pure(1.0, 1.0).unwrap();
        let opts = BinaryReleaseOptions::default();
        let a = release_binary(&g, &budget, &mut RngStream::new(seed, 7), &opts).unwrap();
        let b = release_binary(&g, &budget, &mut RngStream::new(seed, 7), &opts).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn noise_disabled_release_recovers_index(g in small_graph(10)) {
        prop_assume!(has_a(&g));
        let budget = PrivacyBudget::pure(1.0, 1.0).unwrap();
        let opts = BinaryReleaseOptions { noise: NoiseMode::Disabled, ..Default::default() };
        let r = release_binary(&g, &budget, &mut RngStream::new(0, 0), &opts).unwrap();
        let truth = indices::cross_connectedness(&g, None).unwrap().value;
        prop_assert!((r.value.unwrap() - truth).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn identity_channel_is_unbiased_without_noise(g in small_graph(8)) {
        prop_assume!(has_a(&g));
        let private = BinaryPrivateLabels::assume(g.binary_labels().unwrap().to_vec(), 0.0).unwrap();
        let stats = debias_node_stats(&g, &private, None).unwrap();
        let s0: f64 = stats.w.iter().sum();
        let a = g.binary_labels().unwrap().iter().filter(|l| l.is_a()).count();
        prop_assert_eq!(s0, a as f64);
    }

    #[test]
    fn trunc_laplace_quantile_is_monotone_and_bounded(eps in 0.05f64..10.0, delta in 1e-9f64..0.4, q in 0.0f64..1.0, dq in 0.0f64..0.5) {
        let t = TruncLaplaceParams::new(1.0, eps, delta).unwrap();
        let (a, b) = (t.quantile(q), t.quantile((q + dq).min(1.0)));
        prop_assert!(a <= b);
        prop_assert!(a.abs() <= t.bound && b.abs() <= t.bound);
        prop_assert!((t.cdf(a) - q).abs() < 1e-9);
        prop_assert!(t.variance > 0.0 && t.variance < 2.0 * t.scale * t.scale);
    }

    #[test]
    fn private_ranks_stay_in_declared_support(ranks in proptest::collection::vec(0.0f64..=1.0, 1..50), eps in 0.1f64..8.0, seed in any::<u64>()) {
        let r = privatize_ranks(&ranks, eps, 1e-3, &mut RngStream::new(seed, 0)).unwrap();
        for x in &r.x_hat {
            prop_assert!(*x >= r.bounds.0 && *x <= r.bounds.1);
        }
    }

    #[test]
    fn single_row_moment_change_within_sensitivity(
        x in proptest::collection::vec(0.0f64..=1.0, 2..8),
        y in proptest::collection::vec(-1.0f64..=2.0, 8),
        xk in 0.0f64..=1.0,
        yk in -1.0f64..=2.0,
        k in 0usize..8,
    ) {
        let n = x.len();
        let y = &y[..n];
        let k = k % n;
        let s = suff_stat_sensitivities(n, (0.0, 1.0), (-1.0, 2.0));
        let (mut x2, mut y2) = (x.clone(), y.to_vec());
        x2[k] = xk;
        y2[k] = yk;
        let dvar = (oracle::raw_nvar(&x) - oracle::raw_nvar(&x2)).abs();
        let dcov = (oracle::raw_ncov(&x, y) - oracle::raw_ncov(&x2, &y2)).abs();
        prop_assert!(dvar <= s.nvar * (1.0 + 1e-12));
        prop_assert!(dcov <= s.ncov * (1.0 + 1e-12));
    }

    #[test]
    fn noise_disabled_regression_matches_ols(
        x in proptest::collection::vec(0.0f64..=1.0, 3..30),
        slope in -2.0f64..2.0,
    ) {
        let y: Vec<f64> = x.iter().map(|v| 0.3 + slope * v).collect();
        prop_assume!(oracle::raw_nvar(&x) > 1e-6);
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cfg = SuffStatsConfig { noise: NoiseMode::Disabled, ..Default::default() };
        let out = dp_suff_stats(&x, &y, (0.0, 1.0), (lo, hi + 1e-9), 1.0, &mut RngStream::new(0, 0), &cfg).unwrap();
        let fit = out.fit().unwrap();
        let (a, b) = oracle::naive_ols(&x, &y).unwrap();
        prop_assert!((fit.beta - b).abs() < 1e-9 && (fit.alpha - a).abs() < 1e-9);
    }

    #[test]
    fn generated_graphs_are_simple_and_symmetric(n in 2usize..300, deg in 0.0f64..20.0, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let p_edge = (deg / (n - 1) as f64).min(1.0);
        let g = generate(&GeneratorSpec::Er { n, p_edge, frac_a: frac }, seed, Exec::Sequential).unwrap();
        for (u, v, w) in g.edges() {
            prop_assert!(u < v);
            prop_assert_eq!(w, 1.0);
            prop_assert_eq!(g.weight(v, u), 1.0);
        }
        let degree_sum: f64 = g.degrees().iter().sum();
        prop_assert_eq!(degree_sum, 2.0 * g.edge_count() as f64);
    }

    #[test]
    fn generation_is_thread_independent(n in 2usize..400, h in 0.0f64..1.5, seed in any::<u64>()) {
        let spec = GeneratorSpec::Graphon { n, d_bar: 4.0_f64.min((n - 1) as f64 / 4.0), h };
        let a = generate(&spec, seed, Exec::Sequential).unwrap();
        let b = generate(&spec, seed, Exec::Parallel).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn text_round_trip_preserves_graph(g in small_graph(12), mask in any::<u16>()) {
        let members: Vec<usize> = (0..g.node_count()).filter(|i| mask >> i & 1 == 1).collect();
        let g = if members.is_empty() { g } else { g.with_cell("c1", members).unwrap() };
        let dir = tempfile::tempdir().unwrap();
        let paths = io::save(&g, &dir.path().join("g")).unwrap();
        let back = io::ingest(&paths.edges, paths.labels.as_deref(), paths.cells.as_deref()).unwrap();
        prop_assert_eq!(back, g);
    }
}
