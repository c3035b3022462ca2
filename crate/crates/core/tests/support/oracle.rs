//! Brute-force reference implementations used as test oracles. Everything
//! here works on dense matrices and explicit loops, independent of the
//! library's sparse code paths.
#![allow(dead_code)]

use std::collections::BTreeMap;

/// Dense directed graph.
pub struct Dense {
    pub n: usize,
    pub a: Vec<Vec<bool>>,
}

impl Dense {
    pub fn new(n: usize, edges: &[(u32, u32)]) -> Self {
        let mut a = vec![vec![false; n]; n];
        for &(u, v) in edges {
            a[u as usize][v as usize] = true;
        }
        Self { n, a }
    }

    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.a[i][j] {
                    out.push((i as u32, j as u32));
                }
            }
        }
        out
    }

    fn m(&self) -> usize {
        self.a.iter().flatten().filter(|&&x| x).count()
    }

    fn out_deg(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.a[i][j]).count()
    }

    fn in_deg(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| self.a[j][i]).count()
    }

    /// Nodes with at least one tie, or every node.
    pub fn scope(&self, roster: bool) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| roster || self.out_deg(i) + self.in_deg(i) > 0)
            .collect()
    }
}

pub fn density(g: &Dense, roster: bool) -> Option<f64> {
    let n = g.scope(roster).len();
    (n >= 2).then(|| g.m() as f64 / (n * (n - 1)) as f64)
}

pub fn reciprocity(g: &Dense) -> Option<f64> {
    let m = g.m();
    let mut r = 0;
    for i in 0..g.n {
        for j in 0..g.n {
            if g.a[i][j] && g.a[j][i] {
                r += 1;
            }
        }
    }
    (m > 0).then(|| r as f64 / m as f64)
}

pub fn histograms(g: &Dense, roster: bool) -> (BTreeMap<usize, usize>, BTreeMap<usize, usize>) {
    let (mut hin, mut hout) = (BTreeMap::new(), BTreeMap::new());
    for i in g.scope(roster) {
        *hin.entry(g.in_deg(i)).or_insert(0) += 1;
        *hout.entry(g.out_deg(i)).or_insert(0) += 1;
    }
    (hin, hout)
}

/// Mean local clustering of the undirected projection.
pub fn clustering(g: &Dense, roster: bool, exclude_low: bool) -> Option<f64> {
    let u = |i: usize, j: usize| i != j && (g.a[i][j] || g.a[j][i]);
    let mut sum = 0.0;
    let mut count = 0;
    for i in g.scope(roster) {
        let nb: Vec<usize> = (0..g.n).filter(|&j| u(i, j)).collect();
        let k = nb.len();
        if k < 2 {
            if !exclude_low {
                count += 1;
            }
            continue;
        }
        let mut links = 0;
        for x in 0..k {
            for y in x + 1..k {
                if u(nb[x], nb[y]) {
                    links += 1;
                }
            }
        }
        sum += links as f64 / (k * (k - 1) / 2) as f64;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// All-pairs hop distances (Floyd-Warshall); `usize::MAX` if unreachable.
pub fn distances(g: &Dense) -> Vec<Vec<usize>> {
    let n = g.n;
    let inf = usize::MAX;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if g.a[i][j] && i != j {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == inf {
                continue;
            }
            for j in 0..n {
                if d[k][j] != inf && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Largest set of mutually reachable nodes; ties go to the one holding the
/// smallest node.
pub fn lscc(g: &Dense) -> Vec<usize> {
    let d = distances(g);
    let mut assigned = vec![false; g.n];
    let mut best: Vec<usize> = Vec::new();
    for i in 0..g.n {
        if assigned[i] {
            continue;
        }
        let comp: Vec<usize> = (0..g.n)
            .filter(|&j| d[i][j] != usize::MAX && d[j][i] != usize::MAX)
            .collect();
        for &j in &comp {
            assigned[j] = true;
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

pub fn avg_path_lscc(g: &Dense) -> Option<f64> {
    let comp = lscc(g);
    let s = comp.len();
    if s < 2 {
        return None;
    }
    let d = distances(g);
    let mut total = 0usize;
    for &i in &comp {
        for &j in &comp {
            if i != j {
                total += d[i][j];
            }
        }
    }
    Some(total as f64 / (s * (s - 1)) as f64)
}

/// Textbook two-pass Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for k in 0..x.len() {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
        syy += (y[k] - my) * (y[k] - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Assortativity from explicit endpoint lists. `mode`: 0 directed,
/// 1 undirected (both orientations), 2 undirected with reciprocated pairs
/// merged.
pub fn assortativity(edges: &[(u32, u32)], scores: &[Option<f64>], mode: u8) -> Option<f64> {
    let mut ties: Vec<(u32, u32)> = edges.to_vec();
    if mode == 2 {
        ties = ties.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
        ties.sort();
        ties.dedup();
    }
    let scored: Vec<(f64, f64)> = ties
        .iter()
        .filter_map(|&(u, v)| Some((scores[u as usize]?, scores[v as usize]?)))
        .collect();
    if scored.len() < 2 {
        return None;
    }
    let (mut x, mut y): (Vec<f64>, Vec<f64>) = scored.iter().copied().unzip();
    if mode != 0 {
        let (x2, y2) = (y.clone(), x.clone());
        x.extend(x2);
        y.extend(y2);
    }
    pearson(&x, &y)
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-12 {
            return None;
        }
        a.swap(c, p);
        let d = a[c][c];
        for v in a[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
    }
    Some(a.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// One observation of a toy panel.
#[derive(Clone, Copy, Debug)]
pub struct Obs {
    pub agent: usize,
    pub week: usize,
    pub y: f64,
    pub x: [f64; 2],
}

pub struct DummyFit {
    pub beta: [f64; 2],
    /// CR1 standard errors with the slope count as `K`.
    pub se_cr1: [f64; 2],
}

/// OLS of `y` on both slopes plus a full set of agent dummies and week
/// dummies (first week dropped), with agent-clustered errors.
pub fn dummy_variable_ols(obs: &[Obs]) -> Option<DummyFit> {
    let mut agents: Vec<usize> = obs.iter().map(|o| o.agent).collect();
    agents.sort();
    agents.dedup();
    let mut weeks: Vec<usize> = obs.iter().map(|o| o.week).collect();
    weeks.sort();
    weeks.dedup();
    let p = 2 + agents.len() + weeks.len() - 1;
    let row = |o: &Obs| {
        let mut r = vec![0.0; p];
        r[0] = o.x[0];
        r[1] = o.x[1];
        r[2 + agents.binary_search(&o.agent).unwrap()] = 1.0;
        let w = weeks.binary_search(&o.week).unwrap();
        if w > 0 {
            r[2 + agents.len() + w - 1] = 1.0;
        }
        r
    };
    let x: Vec<Vec<f64>> = obs.iter().map(row).collect();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (r, o) in x.iter().zip(obs) {
        for a in 0..p {
            xty[a] += r[a] * o.y;
            for b in 0..p {
                xtx[a][b] += r[a] * r[b];
            }
        }
    }
    let inv = invert(&xtx)?;
    let beta: Vec<f64> = (0..p).map(|a| (0..p).map(|b| inv[a][b] * xty[b]).sum()).collect();
    let resid: Vec<f64> = x
        .iter()
        .zip(obs)
        .map(|(r, o)| o.y - (0..p).map(|a| r[a] * beta[a]).sum::<f64>())
        .collect();
    // Slope rows of (X'X)^-1 X', summed within clusters.
    let mut score = vec![[0.0f64; 2]; agents.len()];
    for (i, r) in x.iter().enumerate() {
        let c = agents.binary_search(&obs[i].agent).unwrap();
        for s in 0..2 {
            let h: f64 = (0..p).map(|b| inv[s][b] * r[b]).sum();
            score[c][s] += h * resid[i];
        }
    }
    let g = agents.len() as f64;
    let n = obs.len() as f64;
    let factor = g / (g - 1.0) * (n - 1.0) / (n - 2.0);
    let var = |s: usize| score.iter().map(|c| c[s] * c[s]).sum::<f64>() * factor;
    Some(DummyFit {
        beta: [beta[0], beta[1]],
        se_cr1: [var(0).sqrt(), var(1).sqrt()],
    })
}

/// Reference gap fill: carry the last observation forward, then fill any
/// leading gap with the first observation.
pub fn two_pass_fill(series: &[Option<f64>]) -> Option<Vec<f64>> {
    let first = series.iter().flatten().next().copied()?;
    let mut out = Vec::with_capacity(series.len());
    let mut last = None;
    for s in series {
        if s.is_some() {
            last = *s;
        }
        out.push(last.unwrap_or(first));
    }
    Some(out)
}
