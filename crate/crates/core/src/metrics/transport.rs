//! Exact discrete optimal transport by the primal network simplex method.
//!
//! Sources and sinks form a bipartite network with uncapacitated arcs. The
//! initial basis routes all supply through an artificial root with big-M
//! arcs; the leaving-arc rule keeps the spanning tree strongly feasible, so
//! degenerate pivots cannot cycle.

use std::io::Write;
use std::path::Path;

use crate::genmap::{dist, DiscreteDistribution};

use super::MetricsError;

/// Largest `n·m` accepted by [`w1_discrete_exact`].
pub const DENSE_PAIR_LIMIT: usize = 250_000;

/// Nonzero entries of an optimal coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// `(source index, target index, mass)`
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn row_sums(&self, n: usize) -> Vec<f64> {
        let mut s = vec![0.0; n];
        self.entries.iter().for_each(|&(i, _, m)| s[i] += m);
        s
    }

    pub fn col_sums(&self, m: usize) -> Vec<f64> {
        let mut s = vec![0.0; m];
        self.entries.iter().for_each(|&(_, j, w)| s[j] += w);
        s
    }

    /// Writes `source_idx,target_idx,mass` rows with a header.
    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["source_idx", "target_idx", "mass"])?;
        for &(i, j, m) in &self.entries {
            w.write_record([i.to_string(), j.to_string(), format!("{m:?}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to(&self, out: impl Write) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source_idx", "target_idx", "mass"])?;
        for &(i, j, m) in &self.entries {
            w.write_record([i.to_string(), j.to_string(), format!("{m:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Simplex {
    n: usize,
    tail: Vec<usize>,
    head: Vec<usize>,
    cost: Vec<f64>,
    flow: Vec<f64>,
    basic: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    up: Vec<bool>,
    children: Vec<Vec<usize>>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    root: usize,
    real_arcs: usize,
    next_block: usize,
    tol: f64,
}

const NONE: usize = usize::MAX;

impl Simplex {
    fn new(supply: &[f64], demand: &[f64], arcs: &[(usize, usize, f64)], max_cost: f64) -> Self {
        let (n, m) = (supply.len(), demand.len());
        let root = n + m;
        let big = (max_cost + 1.0) * (root + 1) as f64;
        let mut s = Simplex {
            n,
            tail: Vec::new(),
            head: Vec::new(),
            cost: Vec::new(),
            flow: Vec::new(),
            basic: Vec::new(),
            parent: vec![root; root + 1],
            pred: vec![NONE; root + 1],
            up: vec![false; root + 1],
            children: vec![Vec::new(); root + 1],
            depth: vec![1; root + 1],
            pi: vec![0.0; root + 1],
            root,
            real_arcs: 0,
            next_block: 0,
            tol: 1e-12 * (1.0 + max_cost),
        };
        s.parent[root] = NONE;
        s.depth[root] = 0;
        for (i, &a) in supply.iter().enumerate() {
            let e = s.push_arc(i, root, big);
            s.flow[e] = a;
            s.attach(i, e, true);
            s.pi[i] = -big;
        }
        for (j, &b) in demand.iter().enumerate() {
            let e = s.push_arc(root, n + j, big);
            s.flow[e] = b;
            s.attach(n + j, e, false);
            s.pi[n + j] = big;
        }
        for &(i, j, c) in arcs {
            s.push_arc(i, n + j, c);
        }
        s.real_arcs = arcs.len();
        s
    }

    fn push_arc(&mut self, t: usize, h: usize, c: f64) -> usize {
        self.tail.push(t);
        self.head.push(h);
        self.cost.push(c);
        self.flow.push(0.0);
        self.basic.push(false);
        self.tail.len() - 1
    }

    fn attach(&mut self, x: usize, e: usize, up: bool) {
        self.pred[x] = e;
        self.up[x] = up;
        self.basic[e] = true;
        self.children[self.root].push(x);
    }

    fn reduced(&self, e: usize) -> f64 {
        self.cost[e] + self.pi[self.tail[e]] - self.pi[self.head[e]]
    }

    /// Block pricing: the most negative reduced cost in the first block that has one.
    fn entering(&mut self) -> Option<usize> {
        let total = self.tail.len();
        let block = ((total as f64).sqrt() as usize).max(64);
        let mut scanned = 0;
        let mut best = (NONE, -self.tol);
        let mut e = self.next_block % total;
        while scanned < total {
            let end = (scanned + block).min(total);
            while scanned < end {
                if !self.basic[e] {
                    let r = self.reduced(e);
                    if r < best.1 {
                        best = (e, r);
                    }
                }
                e += 1;
                if e == total {
                    e = 0;
                }
                scanned += 1;
            }
            if best.0 != NONE {
                self.next_block = e;
                return Some(best.0);
            }
        }
        None
    }

    fn pivot(&mut self, e_in: usize) {
        let (first, second) = (self.tail[e_in], self.head[e_in]);
        let (mut a, mut b) = (first, second);
        while a != b {
            if self.depth[a] >= self.depth[b] {
                a = self.parent[a];
            } else {
                b = self.parent[b];
            }
        }
        let join = a;
        let mut delta = f64::INFINITY;
        let (mut u_out, mut side) = (NONE, 0);
        let mut x = first;
        while x != join {
            if self.up[x] && self.flow[self.pred[x]] < delta {
                delta = self.flow[self.pred[x]];
                u_out = x;
                side = 1;
            }
            x = self.parent[x];
        }
        let mut x = second;
        while x != join {
            if !self.up[x] && self.flow[self.pred[x]] <= delta {
                delta = self.flow[self.pred[x]];
                u_out = x;
                side = 2;
            }
            x = self.parent[x];
        }
        assert!(u_out != NONE, "transport network has no negative cycles");
        if delta > 0.0 {
            self.flow[e_in] += delta;
            let mut x = first;
            while x != join {
                let f = &mut self.flow[self.pred[x]];
                *f = if self.up[x] { *f - delta } else { *f + delta };
                x = self.parent[x];
            }
            let mut x = second;
            while x != join {
                let f = &mut self.flow[self.pred[x]];
                *f = if self.up[x] { *f + delta } else { *f - delta };
                x = self.parent[x];
            }
        }
        let (q, p) = if side == 1 { (first, second) } else { (second, first) };
        let e_out = self.pred[u_out];
        self.basic[e_out] = false;
        self.basic[e_in] = true;
        // detach the subtree below the leaving arc
        let old_parent = self.parent[u_out];
        self.remove_child(old_parent, u_out);
        // reverse the path q -> u_out so that q becomes the subtree root
        let (mut x, mut new_par, mut new_pred, mut new_up) = (q, p, e_in, self.tail[e_in] == q);
        loop {
            let (par, pr, upx) = (self.parent[x], self.pred[x], self.up[x]);
            if x != u_out {
                self.remove_child(par, x);
            }
            self.parent[x] = new_par;
            self.pred[x] = new_pred;
            self.up[x] = new_up;
            self.children[new_par].push(x);
            if x == u_out {
                break;
            }
            new_par = x;
            new_pred = pr;
            new_up = !upx;
            x = par;
        }
        // refresh depth and potentials in the moved subtree
        let mut stack = vec![q];
        while let Some(x) = stack.pop() {
            let par = self.parent[x];
            let c = self.cost[self.pred[x]];
            self.depth[x] = self.depth[par] + 1;
            self.pi[x] = if self.up[x] { self.pi[par] - c } else { self.pi[par] + c };
            stack.extend(self.children[x].iter().copied());
        }
    }

    fn remove_child(&mut self, par: usize, x: usize) {
        let ch = &mut self.children[par];
        let pos = ch.iter().position(|&c| c == x).expect("child present");
        ch.swap_remove(pos);
    }

    fn solve(&mut self) {
        while let Some(e) = self.entering() {
            self.pivot(e);
        }
    }

    fn add_arcs(&mut self, arcs: &[(usize, usize, f64)]) {
        for &(i, j, c) in arcs {
            self.push_arc(i, self.n + j, c);
        }
        self.real_arcs += arcs.len();
    }

    /// Real arcs come after the `n + m` artificial ones.
    fn plan(&self) -> TransportPlan {
        let first_real = self.root;
        let mut entries = Vec::new();
        let mut cost = 0.0;
        for e in first_real..first_real + self.real_arcs {
            if self.flow[e] > 0.0 {
                entries.push((self.tail[e], self.head[e] - self.n, self.flow[e]));
                cost += self.flow[e] * self.cost[e];
            }
        }
        entries.sort_by_key(|a| (a.0, a.1));
        TransportPlan { entries, cost }
    }
}

fn check_dims(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<(), MetricsError> {
    if a.dim() != b.dim() {
        return Err(MetricsError::Dimension { expected: a.dim(), found: b.dim() });
    }
    Ok(())
}

/// Target weights rescaled to the source total, so the network is balanced.
fn balanced(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Vec<f64> {
    let (sa, sb): (f64, f64) = (a.weights().iter().sum(), b.weights().iter().sum());
    b.weights().iter().map(|w| w * sa / sb).collect()
}

fn key(d: &DiscreteDistribution) -> (usize, Vec<u64>, Vec<u64>) {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect();
    (d.len(), bits(d.atoms()), bits(d.weights()))
}

/// Solves in a canonical argument order so that swapping inputs gives the same value bitwise.
fn symmetric(
    a: &DiscreteDistribution,
    b: &DiscreteDistribution,
    solve: impl Fn(&DiscreteDistribution, &DiscreteDistribution) -> Result<(f64, TransportPlan), MetricsError>,
) -> Result<(f64, TransportPlan), MetricsError> {
    check_dims(a, b)?;
    if key(b) < key(a) {
        let (w, plan) = solve(b, a)?;
        let mut entries: Vec<_> = plan.entries.into_iter().map(|(i, j, m)| (j, i, m)).collect();
        entries.sort_by_key(|x| (x.0, x.1));
        Ok((w, TransportPlan { entries, cost: plan.cost }))
    } else {
        solve(a, b)
    }
}

/// Exact `W1(a, b)` under the Euclidean ground metric, with an optimal plan.
pub fn w1_discrete_exact(
    a: &DiscreteDistribution,
    b: &DiscreteDistribution,
) -> Result<(f64, TransportPlan), MetricsError> {
    symmetric(a, b, dense)
}

fn dense(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<(f64, TransportPlan), MetricsError> {
    let (n, m) = (a.len(), b.len());
    if n * m > DENSE_PAIR_LIMIT {
        return Err(MetricsError::TooLarge { pairs: n * m, limit: DENSE_PAIR_LIMIT });
    }
    let mut arcs = Vec::with_capacity(n * m);
    let mut max_cost: f64 = 0.0;
    for i in 0..n {
        for j in 0..m {
            let c = dist(a.atom(i), b.atom(j));
            max_cost = max_cost.max(c);
            arcs.push((i, j, c));
        }
    }
    let mut s = Simplex::new(a.weights(), &balanced(a, b), &arcs, max_cost);
    s.solve();
    let plan = s.plan();
    Ok((plan.cost, plan))
}

/// Exact `W1(a, b)` for large instances. Solves on the `k`-nearest-neighbour
/// arcs in both directions, then checks the dual over all pairs and re-solves
/// with every violating arc until none remain. Collinear inputs are solved
/// directly by the monotone coupling along their common line.
pub fn w1_sparse_verified(
    a: &DiscreteDistribution,
    b: &DiscreteDistribution,
    k: usize,
) -> Result<(f64, TransportPlan), MetricsError> {
    symmetric(a, b, |a, b| sparse(a, b, k))
}

fn sparse(a: &DiscreteDistribution, b: &DiscreteDistribution, k: usize) -> Result<(f64, TransportPlan), MetricsError> {
    let (n, m) = (a.len(), b.len());
    let k = k.max(1);
    let demand = balanced(a, b);
    if collinear(a, b) {
        let coupling = projection_coupling(a, a.weights(), b, &demand);
        // the monotone coupling along the line is optimal
        let mut entries: Vec<_> = coupling.into_iter().filter(|e| e.2 > 0.0).collect();
        entries.sort_by_key(|x| (x.0, x.1));
        let cost = entries.iter().map(|&(i, j, f)| f * dist(a.atom(i), b.atom(j))).sum();
        return Ok((cost, TransportPlan { entries, cost }));
    }
    let mut seen = std::collections::HashSet::new();
    let mut arcs: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_cost: f64 = 0.0;
    let mut row = Vec::with_capacity(m);
    for i in 0..n {
        row.clear();
        row.extend((0..m).map(|j| (dist(a.atom(i), b.atom(j)), j)));
        max_cost = row.iter().fold(max_cost, |acc, &(c, _)| acc.max(c));
        let kk = k.min(m);
        row.select_nth_unstable_by(kk - 1, |x, y| x.0.total_cmp(&y.0));
        for &(c, j) in &row[..kk] {
            if seen.insert((i, j)) {
                arcs.push((i, j, c));
            }
        }
    }
    let mut col = Vec::with_capacity(n);
    for j in 0..m {
        col.clear();
        col.extend((0..n).map(|i| (dist(a.atom(i), b.atom(j)), i)));
        let kk = k.min(n);
        col.select_nth_unstable_by(kk - 1, |x, y| x.0.total_cmp(&y.0));
        for &(c, i) in &col[..kk] {
            if seen.insert((i, j)) {
                arcs.push((i, j, c));
            }
        }
    }
    let mut s = Simplex::new(a.weights(), &demand, &arcs, max_cost);
    loop {
        s.solve();
        let mut violating = Vec::new();
        for i in 0..n {
            for j in 0..m {
                let c = dist(a.atom(i), b.atom(j));
                if c + s.pi[i] - s.pi[n + j] < -s.tol && seen.insert((i, j)) {
                    violating.push((i, j, c));
                }
            }
        }
        if violating.is_empty() {
            break;
        }
        s.add_arcs(&violating);
    }
    let plan = s.plan();
    Ok((plan.cost, plan))
}

/// Leading principal direction of the pooled atoms, by power iteration.
fn principal_axis(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Vec<f64> {
    let d = a.dim();
    let pts: Vec<&[f64]> = (0..a.len()).map(|i| a.atom(i)).chain((0..b.len()).map(|j| b.atom(j))).collect();
    let mut mean = vec![0.0; d];
    for p in &pts {
        mean.iter_mut().zip(*p).for_each(|(m, x)| *m += x / pts.len() as f64);
    }
    let mut cov = vec![0.0; d * d];
    for p in &pts {
        for r in 0..d {
            for c in 0..d {
                cov[r * d + c] += (p[r] - mean[r]) * (p[c] - mean[c]);
            }
        }
    }
    let mut v: Vec<f64> = (0..d).map(|k| 1.0 + k as f64 * 0.1).collect();
    for _ in 0..100 {
        let w: Vec<f64> = (0..d).map(|r| (0..d).map(|c| cov[r * d + c] * v[c]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v = w.iter().map(|x| x / norm).collect();
    }
    v
}

/// Two-sided bound on `W1(a, b)` from the principal line of the pooled atoms.
#[derive(Debug, Clone)]
pub struct LineBracket {
    /// Exact `W1` of the projections onto the line; projection is 1-Lipschitz.
    pub lower: f64,
    /// Euclidean cost of the monotone coupling along the line.
    pub upper: f64,
    pub plan: TransportPlan,
}

/// Brackets `W1(a, b)` in `O((n + m) log(n + m))`. The gap is at most twice
/// the largest distance of an atom from the line, so it is tight for nearly
/// collinear inputs and coincides with the exact value for collinear ones.
pub fn w1_line_bracket(a: &DiscreteDistribution, b: &DiscreteDistribution) -> Result<LineBracket, MetricsError> {
    check_dims(a, b)?;
    let demand = balanced(a, b);
    let v = principal_axis(a, b);
    let proj = |dd: &DiscreteDistribution| -> Vec<f64> {
        (0..dd.len()).map(|i| dd.atom(i).iter().zip(&v).map(|(x, y)| x * y).sum()).collect()
    };
    let pb = DiscreteDistribution::new(proj(b), b.weights().to_vec(), 1)
        .map_err(|e| MetricsError::Invalid(e.to_string()))?;
    let pa = DiscreteDistribution::new(proj(a), a.weights().to_vec(), 1)
        .map_err(|e| MetricsError::Invalid(e.to_string()))?;
    let lower = super::w1_1d_exact(&pa, &pb)?;
    let mut entries: Vec<_> =
        projection_coupling(a, a.weights(), b, &demand).into_iter().filter(|e| e.2 > 0.0).collect();
    entries.sort_by_key(|x| (x.0, x.1));
    let upper = entries.iter().map(|&(i, j, f)| f * dist(a.atom(i), b.atom(j))).sum();
    Ok(LineBracket { lower: lower.min(upper), upper, plan: TransportPlan { entries, cost: upper } })
}

/// Whether every atom lies on one line, up to `1e-12` times the pooled extent.
fn collinear(a: &DiscreteDistribution, b: &DiscreteDistribution) -> bool {
    let d = a.dim();
    if d == 1 {
        return true;
    }
    let v = principal_axis(a, b);
    let base = a.atom(0);
    let pts = || (0..a.len()).map(|i| a.atom(i)).chain((0..b.len()).map(|j| b.atom(j)));
    let extent = pts().map(|p| dist(p, base)).fold(0.0, f64::max);
    pts().all(|p| {
        let t: f64 = p.iter().zip(base).zip(&v).map(|((x, y), w)| (x - y) * w).sum();
        let off = p.iter().zip(base).zip(&v).map(|((x, y), w)| (x - y - t * w).powi(2)).sum::<f64>().sqrt();
        off <= 1e-12 * (1.0 + extent)
    })
}

/// Monotone coupling of the two distributions projected onto their principal
/// axis, as `(source, target, mass)`. Optimal when all atoms are collinear.
fn projection_coupling(
    a: &DiscreteDistribution,
    wa: &[f64],
    b: &DiscreteDistribution,
    wb: &[f64],
) -> Vec<(usize, usize, f64)> {
    let v = principal_axis(a, b);
    let proj = |p: &[f64]| p.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
    let sorted = |dd: &DiscreteDistribution| {
        let mut idx: Vec<usize> = (0..dd.len()).collect();
        idx.sort_by(|&x, &y| proj(dd.atom(x)).total_cmp(&proj(dd.atom(y))));
        idx
    };
    let (ia, ib) = (sorted(a), sorted(b));
    let (mut p, mut q) = (0, 0);
    let (mut ra, mut rb) = (wa[ia[0]], wb[ib[0]]);
    let mut out = Vec::with_capacity(ia.len() + ib.len());
    loop {
        let last = p + 1 == ia.len() && q + 1 == ib.len();
        // the final cell absorbs rounding leftovers so supplies balance exactly
        let step = if last { ra } else { ra.min(rb) };
        out.push((ia[p], ib[q], step));
        if last {
            break;
        }
        ra -= step;
        rb -= step;
        if (ra <= rb && p + 1 < ia.len()) || q + 1 == ib.len() {
            p += 1;
            ra = wa[ia[p]];
        } else {
            q += 1;
            rb = wb[ib[q]];
        }
    }
    out
}
