#[path = "support/oracle.rs"]
mod oracle;

use follownet::homophily::{numeric_assortativity, AssortativityMode};
use follownet::metrics::{
    avg_clustering, avg_shortest_path_lscc, degree_histograms, density, largest_scc,
    reciprocal_edge_count, reciprocity, LowDegreeClustering, NodeConvention,
};
use follownet::temporal::{build_cumulative, Node};
use follownet::{FollowEvent, Snapshot};
use oracle::Dense;
use proptest::prelude::*;

const MODES: [AssortativityMode; 3] = [
    AssortativityMode::Directed,
    AssortativityMode::Undirected,
    AssortativityMode::UndirectedCollapsed,
];

/// Random simple digraph on up to 7 nodes.
fn small_graph() -> impl Strategy<Value = (usize, Vec<(Node, Node)>)> {
    (1usize..=7).prop_flat_map(|n| {
        prop::collection::vec(any::<bool>(), n * n).prop_map(move |bits| {
            let edges = (0..n * n)
                .filter(|&k| bits[k] && k / n != k % n)
                .map(|k| ((k / n) as Node, (k % n) as Node))
                .collect();
            (n, edges)
        })
    })
}

fn close(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
        (None, None) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn metrics_match_dense_oracle((n, edges) in small_graph()) {
        let snap = Snapshot::from_edges(n, edges.clone()).unwrap();
        let g = Dense::new(n, &edges);
        for (conv, roster) in [(NodeConvention::Active, false), (NodeConvention::Roster, true)] {
            prop_assert!(close(density(&snap, conv).ok(), oracle::density(&g, roster)));
            let h = degree_histograms(&snap, conv);
            let (hin, hout) = oracle::histograms(&g, roster);
            prop_assert_eq!(h.in_hist, hin);
            prop_assert_eq!(h.out_hist, hout);
            for (low, exclude) in [(LowDegreeClustering::Zero, false), (LowDegreeClustering::Exclude, true)] {
                prop_assert!(close(
                    avg_clustering(&snap, conv, low).ok(),
                    oracle::clustering(&g, roster, exclude)
                ));
            }
        }
        prop_assert!(close(reciprocity(&snap).ok(), oracle::reciprocity(&g)));
        let lscc: Vec<usize> = largest_scc(&snap).iter().map(|&u| u as usize).collect();
        let mut expected = oracle::lscc(&g);
        expected.sort();
        let mut got = lscc.clone();
        got.sort();
        prop_assert_eq!(got, expected);
        prop_assert!(close(avg_shortest_path_lscc(&snap).ok(), oracle::avg_path_lscc(&g)));
    }

    #[test]
    fn reciprocal_count_is_even_and_path_at_least_one((n, edges) in small_graph()) {
        let snap = Snapshot::from_edges(n, edges).unwrap();
        prop_assert_eq!(reciprocal_edge_count(&snap) % 2, 0);
        if let Ok(l) = avg_shortest_path_lscc(&snap) {
            prop_assert!(l >= 1.0);
            let comp = largest_scc(&snap);
            let complete = comp.iter().all(|&u| comp.iter().all(|&v| u == v || snap.has_edge(u, v)));
            prop_assert_eq!(l == 1.0, complete);
        }
    }

    #[test]
    fn density_is_monotone_over_roster(
        n in 2usize..=7,
        stamps in prop::collection::vec(prop::option::of(1u32..=6), 49),
    ) {
        let mut events = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if let (true, Some(w)) = (u != v, stamps[u * 7 + v]) {
                    events.push(FollowEvent::new(format!("a{u}"), format!("a{v}"), w));
                }
            }
        }
        prop_assume!(!events.is_empty());
        let net = build_cumulative(&events, 6).unwrap();
        let mut prev = 0.0;
        for t in 1..=6 {
            let d = density(&net.snapshot(t).unwrap(), NodeConvention::Roster).unwrap();
            prop_assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn assortativity_matches_pearson_oracle(
        (n, edges) in small_graph(),
        raw in prop::collection::vec(prop::option::weighted(0.85, 0u8..=100), 7),
    ) {
        let scores: Vec<Option<f64>> = raw[..n].iter().map(|s| s.map(f64::from)).collect();
        for (k, mode) in MODES.into_iter().enumerate() {
            let got = numeric_assortativity(&edges, &scores, mode).ok().map(|a| a.r);
            let want = oracle::assortativity(&edges, &scores, k as u8);
            prop_assert!(close(got, want), "{:?}: {:?} vs {:?}", mode, got, want);
        }
    }

    #[test]
    fn assortativity_is_affine_invariant(
        (n, edges) in small_graph(),
        raw in prop::collection::vec(0u8..=100, 7),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
    ) {
        let scores: Vec<Option<f64>> = raw[..n].iter().map(|&s| Some(f64::from(s))).collect();
        let moved: Vec<Option<f64>> = scores.iter().map(|s| s.map(|x| a * x + b)).collect();
        let flipped: Vec<Option<f64>> = scores.iter().map(|s| s.map(|x| -a * x + b)).collect();
        for mode in MODES {
            let r = numeric_assortativity(&edges, &scores, mode).ok().map(|x| x.r);
            let r2 = numeric_assortativity(&edges, &moved, mode).ok().map(|x| x.r);
            prop_assert!(r.zip(r2).is_none_or(|(x, y)| (x - y).abs() < 1e-9));
            // A negative scale applies to both ends of every tie, so r is unchanged too.
            let r3 = numeric_assortativity(&edges, &flipped, mode).ok().map(|x| x.r);
            prop_assert!(r.zip(r3).is_none_or(|(x, y)| (x - y).abs() < 1e-9));
        }
    }

    #[test]
    fn symmetric_ties_have_equal_directed_and_undirected_r(
        (n, edges) in small_graph(),
        raw in prop::collection::vec(0u8..=100, 7),
    ) {
        let mut sym: Vec<(Node, Node)> = edges.iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect();
        sym.sort();
        sym.dedup();
        let scores: Vec<Option<f64>> = raw[..n].iter().map(|&s| Some(f64::from(s))).collect();
        let d = numeric_assortativity(&sym, &scores, AssortativityMode::Directed).ok().map(|a| a.r);
        for mode in [AssortativityMode::Undirected, AssortativityMode::UndirectedCollapsed] {
            // Collapsing can leave a single tie, where r is undefined.
            if let Ok(u) = numeric_assortativity(&sym, &scores, mode) {
                prop_assert!(close(d, Some(u.r)), "{:?}: {:?} vs {:?}", mode, d, u.r);
            }
        }
    }
}

#[test]
fn exhaustive_three_node_graphs_match_oracle() {
    for bits in 0u32..64 {
        let pairs: Vec<(Node, Node)> = (0..3)
            .flat_map(|u| (0..3).map(move |v| (u, v)))
            .filter(|(u, v)| u != v)
            .collect();
        let edges: Vec<(Node, Node)> = pairs
            .iter()
            .enumerate()
            .filter(|(k, _)| bits >> k & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        let snap = Snapshot::from_edges(3, edges.clone()).unwrap();
        let g = Dense::new(3, &edges);
        assert!(close(avg_shortest_path_lscc(&snap).ok(), oracle::avg_path_lscc(&g)));
        assert!(close(reciprocity(&snap).ok(), oracle::reciprocity(&g)));
    }
}
