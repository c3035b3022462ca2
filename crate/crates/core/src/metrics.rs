//! Weekly structural measures of the follow network.
//!
//! All measures take an immutable [`Snapshot`]. Which nodes count as "the
//! network" for density, histograms and clustering is set by
//! [`NodeConvention`]: by default only nodes incident to at least one tie.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::temporal::{Node, Snapshot, TemporalNetwork};
use crate::{Error, Result};

/// Node set over which per-node measures are averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeConvention {
    /// Nodes with in- or out-degree at least one in the week.
    #[default]
    Active,
    /// Every roster node, including isolates.
    Roster,
}

/// Treatment of nodes with fewer than two undirected neighbours.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowDegreeClustering {
    /// They contribute a local coefficient of zero.
    #[default]
    Zero,
    /// They are left out of the average.
    Exclude,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub nodes: NodeConvention,
    pub low_degree: LowDegreeClustering,
}

fn scope_nodes(snap: &Snapshot, conv: NodeConvention) -> Vec<Node> {
    match conv {
        NodeConvention::Active => snap.active_nodes(),
        NodeConvention::Roster => (0..snap.n_nodes() as Node).collect(),
    }
}

/// `|E| / (n (n - 1))` over the node scope.
pub fn density(snap: &Snapshot, conv: NodeConvention) -> Result<f64> {
    let n = scope_nodes(snap, conv).len();
    if n < 2 {
        return Err(Error::Undefined(format!("density with {n} node(s)")));
    }
    Ok(snap.n_edges() as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Degree value -> number of nodes with that degree.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeHistograms {
    pub in_hist: BTreeMap<usize, usize>,
    pub out_hist: BTreeMap<usize, usize>,
}

pub fn degree_histograms(snap: &Snapshot, conv: NodeConvention) -> DegreeHistograms {
    let mut h = DegreeHistograms::default();
    for u in scope_nodes(snap, conv) {
        *h.in_hist.entry(snap.in_degree(u)).or_default() += 1;
        *h.out_hist.entry(snap.out_degree(u)).or_default() += 1;
    }
    h
}

/// Number of ties `(i, j)` whose reverse `(j, i)` is also present.
pub fn reciprocal_edge_count(snap: &Snapshot) -> usize {
    snap.edges()
        .iter()
        .filter(|&&(u, v)| snap.out_neighbors(v).binary_search(&u).is_ok())
        .count()
}

/// Share of ties that are reciprocated.
pub fn reciprocity(snap: &Snapshot) -> Result<f64> {
    if snap.n_edges() == 0 {
        return Err(Error::Undefined("reciprocity of an empty graph".into()));
    }
    Ok(reciprocal_edge_count(snap) as f64 / snap.n_edges() as f64)
}

/// Sorted neighbour lists of the undirected projection, in CSR form.
fn undirected_csr(snap: &Snapshot) -> (Vec<usize>, Vec<Node>) {
    let n = snap.n_nodes();
    let mut off = Vec::with_capacity(n + 1);
    let mut adj = Vec::with_capacity(2 * snap.n_edges());
    off.push(0);
    for u in 0..n as Node {
        let (a, b) = (snap.out_neighbors(u), snap.in_neighbors(u));
        let (mut i, mut j) = (0, 0);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&x), Some(&y)) if x == y => {
                    i += 1;
                    j += 1;
                    x
                }
                (Some(&x), Some(&y)) if x < y => {
                    i += 1;
                    x
                }
                (Some(&x), None) => {
                    i += 1;
                    x
                }
                (_, Some(&y)) => {
                    j += 1;
                    y
                }
                (None, None) => unreachable!(),
            };
            adj.push(next);
        }
        off.push(adj.len());
    }
    (off, adj)
}

/// Triangle count through every node of the undirected projection, together
/// with the projected degrees.
pub fn triangles_per_node(snap: &Snapshot) -> (Vec<u64>, Vec<usize>) {
    let n = snap.n_nodes();
    let (off, adj) = undirected_csr(snap);
    let deg: Vec<usize> = (0..n).map(|u| off[u + 1] - off[u]).collect();
    // Orient every edge from lower to higher (degree, id) rank; each triangle
    // is then found exactly once from its lowest-ranked corner.
    let higher = |u: usize, v: usize| (deg[v], v) > (deg[u], u);
    let mut fwd_off = vec![0usize; n + 1];
    let mut fwd: Vec<Node> = Vec::with_capacity(adj.len() / 2);
    for u in 0..n {
        fwd.extend(
            adj[off[u]..off[u + 1]]
                .iter()
                .filter(|&&v| higher(u, v as usize)),
        );
        fwd_off[u + 1] = fwd.len();
    }
    let mut tri = vec![0u64; n];
    let mut mark = vec![u32::MAX; n];
    for u in 0..n {
        for &v in &fwd[fwd_off[u]..fwd_off[u + 1]] {
            mark[v as usize] = u as u32;
        }
        for &v in &fwd[fwd_off[u]..fwd_off[u + 1]] {
            for &w in &fwd[fwd_off[v as usize]..fwd_off[v as usize + 1]] {
                if mark[w as usize] == u as u32 {
                    tri[u] += 1;
                    tri[v as usize] += 1;
                    tri[w as usize] += 1;
                }
            }
        }
    }
    (tri, deg)
}

/// Mean local clustering coefficient `2 e_i / (k_i (k_i - 1))` on the
/// undirected projection.
pub fn avg_clustering(
    snap: &Snapshot,
    conv: NodeConvention,
    low_degree: LowDegreeClustering,
) -> Result<f64> {
    let (tri, deg) = triangles_per_node(snap);
    let mut sum = 0.0;
    let mut count = 0usize;
    for u in scope_nodes(snap, conv) {
        let k = deg[u as usize];
        if k < 2 {
            if low_degree == LowDegreeClustering::Zero {
                count += 1;
            }
            continue;
        }
        sum += 2.0 * tri[u as usize] as f64 / (k as f64 * (k as f64 - 1.0));
        count += 1;
    }
    if count == 0 {
        return Err(Error::Undefined("clustering over an empty node set".into()));
    }
    Ok(sum / count as f64)
}

/// Strongly connected components (iterative Tarjan). Components are listed
/// in reverse topological order; members are sorted.
pub fn strongly_connected_components(snap: &Snapshot) -> Vec<Vec<Node>> {
    const UNSEEN: u32 = u32::MAX;
    let n = snap.n_nodes();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<Node> = Vec::new();
    let mut call: Vec<(Node, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut comps = Vec::new();

    for root in 0..n as Node {
        if index[root as usize] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let nbrs = snap.out_neighbors(v);
            if *pos < nbrs.len() {
                let w = nbrs[*pos];
                *pos += 1;
                if index[w as usize] == UNSEEN {
                    index[w as usize] = next_index;
                    low[w as usize] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w as usize] = true;
                    call.push((w, 0));
                } else if on_stack[w as usize] {
                    low[v as usize] = low[v as usize].min(index[w as usize]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent as usize] = low[parent as usize].min(low[v as usize]);
            }
            if low[v as usize] == index[v as usize] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w as usize] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                comps.push(comp);
            }
        }
    }
    comps
}

/// Largest strongly connected component; ties go to the component holding
/// the smallest node index.
pub fn largest_scc(snap: &Snapshot) -> Vec<Node> {
    strongly_connected_components(snap)
        .into_iter()
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .unwrap_or_default()
}

/// Mean shortest-path length over all ordered pairs of the largest strongly
/// connected component (every such pair is reachable inside it).
///
/// Exact: a breadth-first search runs from every component node, 64 sources
/// at a time with bit-parallel frontiers.
pub fn avg_shortest_path_lscc(snap: &Snapshot) -> Result<f64> {
    let comp = largest_scc(snap);
    let s = comp.len();
    if s < 2 {
        return Err(Error::Undefined(format!("LSCC has {s} node(s)")));
    }
    let mut local = vec![u32::MAX; snap.n_nodes()];
    for (i, &u) in comp.iter().enumerate() {
        local[u as usize] = i as u32;
    }
    let mut off = Vec::with_capacity(s + 1);
    let mut adj = Vec::new();
    off.push(0);
    for &u in &comp {
        adj.extend(
            snap.out_neighbors(u)
                .iter()
                .map(|&v| local[v as usize])
                .filter(|&v| v != u32::MAX),
        );
        off.push(adj.len());
    }

    let mut total: u128 = 0;
    let mut seen = vec![0u64; s];
    let mut frontier = vec![0u64; s];
    let mut next = vec![0u64; s];
    for batch_start in (0..s).step_by(64) {
        let batch_end = (batch_start + 64).min(s);
        seen.fill(0);
        frontier.fill(0);
        for (bit, src) in (batch_start..batch_end).enumerate() {
            seen[src] |= 1 << bit;
            frontier[src] |= 1 << bit;
        }
        let mut level: u128 = 0;
        loop {
            level += 1;
            next.fill(0);
            for v in 0..s {
                let f = frontier[v];
                if f != 0 {
                    for &w in &adj[off[v]..off[v + 1]] {
                        next[w as usize] |= f;
                    }
                }
            }
            let mut advanced = false;
            for w in 0..s {
                let fresh = next[w] & !seen[w];
                frontier[w] = fresh;
                if fresh != 0 {
                    seen[w] |= fresh;
                    total += level * fresh.count_ones() as u128;
                    advanced = true;
                }
            }
            if !advanced {
                break;
            }
        }
    }
    Ok(total as f64 / (s as f64 * (s as f64 - 1.0)))
}

/// One row of the weekly structural series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralReport {
    pub week: u32,
    pub density: Option<f64>,
    pub reciprocity: Option<f64>,
    pub avg_clustering: Option<f64>,
    pub avg_path_lscc: Option<f64>,
    pub lscc_size: usize,
    /// Size of the node scope used for density, histograms and clustering.
    pub n_nodes: usize,
    pub n_edges: usize,
    pub histograms: DegreeHistograms,
}

pub fn week_report(snap: &Snapshot, week: u32, cfg: &MetricsConfig) -> StructuralReport {
    StructuralReport {
        week,
        density: density(snap, cfg.nodes).ok(),
        reciprocity: reciprocity(snap).ok(),
        avg_clustering: avg_clustering(snap, cfg.nodes, cfg.low_degree).ok(),
        avg_path_lscc: avg_shortest_path_lscc(snap).ok(),
        lscc_size: largest_scc(snap).len(),
        n_nodes: scope_nodes(snap, cfg.nodes).len(),
        n_edges: snap.n_edges(),
        histograms: degree_histograms(snap, cfg.nodes),
    }
}

/// Structural measures for every week. Undefined measures are recorded as
/// `None` rather than aborting the series.
pub fn structural_report(net: &TemporalNetwork, cfg: &MetricsConfig) -> Result<Vec<StructuralReport>> {
    (1..=net.weeks())
        .into_par_iter()
        .map(|t| Ok(week_report(&net.snapshot(t)?, t, cfg)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(n: usize, edges: &[(u32, u32)]) -> Snapshot {
        Snapshot::from_edges(n, edges.to_vec()).unwrap()
    }

    fn complete(n: u32) -> Snapshot {
        let e: Vec<_> = (0..n)
            .flat_map(|u| (0..n).filter(move |&v| v != u).map(move |v| (u, v)))
            .collect();
        snap(n as usize, &e)
    }

    #[test]
    fn density_examples() {
        assert_eq!(density(&complete(3), NodeConvention::Active).unwrap(), 1.0);
        assert_eq!(density(&snap(3, &[]), NodeConvention::Roster).unwrap(), 0.0);
        let d = density(&snap(3, &[(0, 1), (1, 2)]), NodeConvention::Active).unwrap();
        assert!((d - 2.0 / 6.0).abs() < 1e-15);
        assert!(density(&snap(3, &[]), NodeConvention::Active).is_err());
    }

    #[test]
    fn histogram_examples() {
        let s = snap(4, &[(0, 1), (0, 2), (0, 3)]);
        let h = degree_histograms(&s, NodeConvention::Active);
        assert_eq!(h.out_hist, BTreeMap::from([(0, 3), (3, 1)]));
        assert_eq!(h.in_hist, BTreeMap::from([(0, 1), (1, 3)]));
        let h = degree_histograms(&snap(5, &[]), NodeConvention::Roster);
        assert_eq!(h.in_hist, BTreeMap::from([(0, 5)]));
    }

    #[test]
    fn reciprocity_examples() {
        assert_eq!(reciprocity(&snap(2, &[(0, 1), (1, 0)])).unwrap(), 1.0);
        assert_eq!(reciprocity(&snap(2, &[(0, 1)])).unwrap(), 0.0);
        let r = reciprocity(&snap(3, &[(0, 1), (1, 0), (0, 2)])).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        assert!(reciprocity(&snap(2, &[])).is_err());
    }

    #[test]
    fn clustering_examples() {
        let tri = snap(3, &[(0, 1), (1, 2), (2, 0)]);
        let c = avg_clustering(&tri, NodeConvention::Active, LowDegreeClustering::Zero).unwrap();
        assert_eq!(c, 1.0);
        let path = snap(3, &[(0, 1), (1, 2)]);
        let c = avg_clustering(&path, NodeConvention::Active, LowDegreeClustering::Zero).unwrap();
        assert_eq!(c, 0.0);
        // Star plus one chord: hub has C = 1/3, chord ends 1, leaf 0.
        let s = snap(4, &[(0, 1), (0, 2), (0, 3), (1, 2)]);
        let z = avg_clustering(&s, NodeConvention::Active, LowDegreeClustering::Zero).unwrap();
        assert!((z - (1.0 / 3.0 + 1.0 + 1.0) / 4.0).abs() < 1e-15);
        let x = avg_clustering(&s, NodeConvention::Active, LowDegreeClustering::Exclude).unwrap();
        assert!((x - (1.0 / 3.0 + 1.0 + 1.0) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn path_length_examples() {
        let cyc = snap(3, &[(0, 1), (1, 2), (2, 0)]);
        assert_eq!(avg_shortest_path_lscc(&cyc).unwrap(), 1.5);
        assert_eq!(avg_shortest_path_lscc(&complete(4)).unwrap(), 1.0);
        assert!(avg_shortest_path_lscc(&snap(3, &[(0, 1), (1, 2)])).is_err());
    }

    #[test]
    fn lscc_picks_largest_component() {
        // 0<->1 and a 3-cycle on 2,3,4 joined by a one-way tie.
        let s = snap(5, &[(0, 1), (1, 0), (1, 2), (2, 3), (3, 4), (4, 2)]);
        assert_eq!(largest_scc(&s), vec![2, 3, 4]);
        assert_eq!(strongly_connected_components(&s).len(), 2);
    }

    #[test]
    fn many_batches_of_sources() {
        // A directed ring of 150 nodes spans three 64-source batches.
        let n = 150u32;
        let e: Vec<_> = (0..n).map(|u| (u, (u + 1) % n)).collect();
        let l = avg_shortest_path_lscc(&snap(n as usize, &e)).unwrap();
        assert!((l - n as f64 / 2.0).abs() < 1e-12);
    }
}
