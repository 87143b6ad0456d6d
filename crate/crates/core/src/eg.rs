//! Eisenberg-Gale market equilibria.
//!
//! Items with identical value vectors are merged into one item whose supply is
//! the multiplicity, so long sequences drawn from a small support stay cheap.
//! The solver runs proportional-response iterations and, once close, snaps to
//! the exact equilibrium support: tight edges are grouped into components,
//! multipliers are fixed by the tight ratios and the component budgets, and a
//! max-flow distributes spending over the tight edges. Every returned solution
//! carries the duality-gap certificate
//! `gap = Σ_τ s_τ max_i β_i v_i^τ - ‖B‖₁` with `β_i = B_i / u_i(x)`,
//! which equals dual minus primal objective at `(x, β(x))`.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AgentWeights, Allocation, ValueSequence};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const PREFIX_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Target gap relative to `‖B‖₁`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Gap is evaluated every this many iterations.
    pub check_every: usize,
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions { tol, ..Default::default() }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iterations: 1_000_000,
            check_every: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketEquilibrium {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Allocation>,
    /// `u_i = ⟨v_i, x_i⟩` (totals over the sequence).
    pub utilities: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// `p^τ = max_i β_i v_i^τ`.
    pub prices: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
}

impl MarketEquilibrium {
    pub fn to_json(&self, with_x: bool) -> Result<String> {
        if with_x {
            Ok(serde_json::to_string_pretty(self)?)
        } else {
            let mut c = self.clone();
            c.x = None;
            Ok(serde_json::to_string_pretty(&c)?)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnderlyingMarket {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    /// Time-averaged equilibrium utilities `u*`.
    pub utilities: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub gap: f64,
}

/// A market with merged items, values stored item-major.
#[derive(Clone, Debug)]
struct Market {
    n: usize,
    vals: Vec<f64>,
    supply: Vec<f64>,
    b: Vec<f64>,
}

impl Market {
    fn m(&self) -> usize {
        self.supply.len()
    }

    fn item(&self, k: usize) -> &[f64] {
        &self.vals[k * self.n..(k + 1) * self.n]
    }

    fn utilities(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut u = vec![0.0; n];
        for k in 0..self.m() {
            let s = self.supply[k];
            for i in 0..n {
                u[i] += s * self.vals[k * n + i] * x[k * n + i];
            }
        }
        u
    }

    fn revenue(&self, beta: &[f64]) -> f64 {
        (0..self.m())
            .map(|k| {
                let p = self
                    .item(k)
                    .iter()
                    .zip(beta)
                    .map(|(v, b)| v * b)
                    .fold(0.0, f64::max);
                self.supply[k] * p
            })
            .sum()
    }

    /// Certified gap of `x`, or `None` if some agent gets nothing.
    fn gap(&self, x: &[f64]) -> Option<(f64, Vec<f64>)> {
        let u = self.utilities(x);
        if u.iter().any(|&ui| ui <= 0.0) {
            return None;
        }
        let beta: Vec<f64> = self.b.iter().zip(&u).map(|(b, u)| b / u).collect();
        let g = self.revenue(&beta) - self.b.iter().sum::<f64>();
        Some((g.max(0.0), u))
    }

    fn uniform_start(&self) -> Vec<f64> {
        let n = self.n;
        let mut x = vec![0.0; self.vals.len()];
        for k in 0..self.m() {
            let pos = self.item(k).iter().filter(|&&v| v > 0.0).count();
            for i in 0..n {
                if self.vals[k * n + i] > 0.0 {
                    x[k * n + i] = 1.0 / pos as f64;
                }
            }
        }
        x
    }

    fn proportional_response(&self, x: &mut [f64], iters: usize) {
        let n = self.n;
        let mut spend = vec![0.0; n];
        for _ in 0..iters {
            let u = self.utilities(x);
            for k in 0..self.m() {
                let s = self.supply[k];
                let mut p = 0.0;
                for i in 0..n {
                    let idx = k * n + i;
                    let b = if u[i] > 0.0 {
                        self.b[i] * s * self.vals[idx] * x[idx] / u[i]
                    } else {
                        0.0
                    };
                    spend[i] = b;
                    p += b;
                }
                if p > 0.0 {
                    for i in 0..n {
                        x[k * n + i] = spend[i] / p;
                    }
                }
            }
        }
    }

    /// Snaps a near-equilibrium to the exact one on its tight support.
    fn polish(&self, x: &[f64], eta: f64) -> Option<Vec<f64>> {
        let n = self.n;
        let m = self.m();
        let u = self.utilities(x);
        if u.iter().any(|&ui| ui <= 0.0) {
            return None;
        }
        let beta: Vec<f64> = self.b.iter().zip(&u).map(|(b, u)| b / u).collect();
        let tight = tight_sets(self, &beta, eta);

        let mut uf = UnionFind::new(n);
        for t in &tight {
            for w in t.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        // Multipliers consistent with every tight ratio along a BFS tree.
        let mut agent_items: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (k, t) in tight.iter().enumerate() {
            for &i in t {
                agent_items[i].push(k);
            }
        }
        let mut nb = vec![f64::NAN; n];
        for r in 0..n {
            if !nb[r].is_nan() {
                continue;
            }
            nb[r] = 1.0;
            let mut q = VecDeque::from([r]);
            while let Some(i) = q.pop_front() {
                for &k in &agent_items[i] {
                    let price = nb[i] * self.vals[k * n + i];
                    for &j in &tight[k] {
                        if nb[j].is_nan() {
                            nb[j] = price / self.vals[k * n + j];
                            q.push_back(j);
                        }
                    }
                }
            }
        }
        // Each component's revenue must equal its budget.
        let mut rev = vec![0.0; n];
        let mut budget = vec![0.0; n];
        for i in 0..n {
            budget[uf.find(i)] += self.b[i];
        }
        for (k, t) in tight.iter().enumerate() {
            if let Some(&i0) = t.first() {
                let p = t.iter().map(|&i| nb[i] * self.vals[k * n + i]).fold(0.0, f64::max);
                rev[uf.find(i0)] += self.supply[k] * p;
            }
        }
        for i in 0..n {
            let c = uf.find(i);
            if !(rev[c] > 0.0) {
                return None;
            }
            nb[i] *= budget[c] / rev[c];
        }
        let tight = tight_sets(self, &nb, 1e-12);
        let prices: Vec<f64> = (0..m)
            .map(|k| self.item(k).iter().zip(&nb).map(|(v, b)| v * b).fold(0.0, f64::max))
            .collect();

        // source -> agents -> items -> sink
        let src = 0;
        let sink = 1 + n + m;
        let mut g = FlowGraph::new(n + m + 2);
        for i in 0..n {
            g.add_edge(src, 1 + i, self.b[i]);
        }
        let mut edges = Vec::new();
        for (k, t) in tight.iter().enumerate() {
            if prices[k] <= 0.0 {
                continue;
            }
            g.add_edge(1 + n + k, sink, prices[k] * self.supply[k]);
            for &i in t {
                edges.push((i, k, g.add_edge(1 + i, 1 + n + k, f64::INFINITY)));
            }
        }
        g.max_flow(src, sink);
        let mut xn = vec![0.0; n * m];
        for (i, k, e) in edges {
            xn[k * n + i] = g.flow(e).max(0.0) / (prices[k] * self.supply[k]);
        }
        for k in 0..m {
            let row = &mut xn[k * n..(k + 1) * n];
            let s: f64 = row.iter().sum();
            if s > 1.0 {
                row.iter_mut().for_each(|a| *a /= s);
            }
        }
        Some(xn)
    }

    fn solve(&self, mut x: Vec<f64>, opts: &SolverOptions) -> Result<(Vec<f64>, f64, usize)> {
        let total: f64 = self.b.iter().sum();
        let target = opts.tol * total;
        let step = opts.check_every.max(1);
        let mut it = 0;
        let mut last = f64::INFINITY;
        loop {
            if let Some((g, _)) = self.gap(&x) {
                last = g;
                if g <= target {
                    return Ok((x, g, it));
                }
                if g < 0.1 * total {
                    for e in 1..=8 {
                        let eta = 10f64.powi(-e);
                        if let Some(xp) = self.polish(&x, eta) {
                            if let Some((gp, _)) = self.gap(&xp) {
                                if gp <= target {
                                    return Ok((xp, gp, it));
                                }
                            }
                        }
                    }
                }
            }
            if it >= opts.max_iterations {
                return Err(Error::NotConverged {
                    iterations: it,
                    gap: last,
                });
            }
            self.proportional_response(&mut x, step);
            it += step;
        }
    }
}

fn tight_sets(mkt: &Market, beta: &[f64], eta: f64) -> Vec<Vec<usize>> {
    (0..mkt.m())
        .map(|k| {
            let row = mkt.item(k);
            let p = row.iter().zip(beta).map(|(v, b)| v * b).fold(0.0, f64::max);
            if p <= 0.0 {
                return Vec::new();
            }
            (0..mkt.n)
                .filter(|&i| row[i] > 0.0 && beta[i] * row[i] >= (1.0 - eta) * p)
                .collect()
        })
        .collect()
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[rb] = ra;
        }
    }
}

/// Dinic's max-flow on real capacities.
struct FlowGraph {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    orig: Vec<f64>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        FlowGraph {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            orig: Vec::new(),
        }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: f64) -> usize {
        let e = self.to.len();
        self.adj[a].push(e);
        self.to.push(b);
        self.cap.push(c);
        self.orig.push(c);
        self.adj[b].push(e + 1);
        self.to.push(a);
        self.cap.push(0.0);
        self.orig.push(0.0);
        e
    }

    fn flow(&self, e: usize) -> f64 {
        self.cap[e ^ 1]
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let scale = self.orig.iter().filter(|c| c.is_finite()).fold(0.0f64, |a, &c| a.max(c));
        let eps = scale * 1e-15;
        let nodes = self.adj.len();
        let mut total = 0.0;
        loop {
            let mut level = vec![usize::MAX; nodes];
            level[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(a) = q.pop_front() {
                for &e in &self.adj[a] {
                    let b = self.to[e];
                    if self.cap[e] > eps && level[b] == usize::MAX {
                        level[b] = level[a] + 1;
                        q.push_back(b);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut next = vec![0usize; nodes];
            loop {
                let f = self.augment(s, t, f64::INFINITY, &level, &mut next, eps);
                if f <= eps {
                    break;
                }
                total += f;
            }
        }
    }

    fn augment(&mut self, a: usize, t: usize, limit: f64, level: &[usize], next: &mut [usize], eps: f64) -> f64 {
        if a == t {
            return limit;
        }
        while next[a] < self.adj[a].len() {
            let e = self.adj[a][next[a]];
            let b = self.to[e];
            if self.cap[e] > eps && level[b] == level[a] + 1 {
                let f = self.augment(b, t, limit.min(self.cap[e]), level, next, eps);
                if f > eps {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                    return f;
                }
            }
            next[a] += 1;
        }
        0.0
    }
}

/// Merges identical rows. Returns the market and, per original row, its item.
fn merge_rows<'a>(
    rows: impl Iterator<Item = (&'a [f64], f64)>,
    n: usize,
    b: &AgentWeights,
) -> (Market, Vec<usize>) {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut vals = Vec::new();
    let mut supply = Vec::new();
    let mut map = Vec::new();
    for (row, s) in rows {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let k = *index.entry(key).or_insert_with(|| {
            vals.extend_from_slice(row);
            supply.push(0.0);
            supply.len() - 1
        });
        supply[k] += s;
        map.push(k);
    }
    (
        Market {
            n,
            vals,
            supply,
            b: b.as_slice().to_vec(),
        },
        map,
    )
}

fn check_agents(mkt: &Market) -> Result<()> {
    for i in 0..mkt.n {
        if !(0..mkt.m()).any(|k| mkt.supply[k] > 0.0 && mkt.vals[k * mkt.n + i] > 0.0) {
            return Err(Error::ZeroAgent { agent: i + 1 });
        }
    }
    Ok(())
}

fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

/// Solves the EG program on the whole sequence. `gap ≤ tol·‖B‖₁` on success.
pub fn solve_eg(v: &ValueSequence, b: &AgentWeights, tol: f64) -> Result<MarketEquilibrium> {
    solve_eg_with(v, b, &SolverOptions::with_tol(tol))
}

pub fn solve_eg_with(v: &ValueSequence, b: &AgentWeights, opts: &SolverOptions) -> Result<MarketEquilibrium> {
    if b.len() != v.agents() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: v.agents(),
        });
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let n = v.agents();
    let (mkt, map) = merge_rows(v.rows().map(|r| (r, 1.0)), n, b);
    check_agents(&mkt)?;
    let (x, gap, iterations) = mkt.solve(mkt.uniform_start(), opts)?;
    let utilities = mkt.utilities(&x);
    let multipliers: Vec<f64> = b.as_slice().iter().zip(&utilities).map(|(b, u)| b / u).collect();
    let prices = v
        .rows()
        .map(|r| r.iter().zip(&multipliers).map(|(v, b)| v * b).fold(0.0, f64::max))
        .collect();
    let mut data = Vec::with_capacity(v.horizon() * n);
    for &k in &map {
        data.extend_from_slice(&x[k * n..(k + 1) * n]);
    }
    Ok(MarketEquilibrium {
        x: Some(Allocation::Dense { agents: n, data }),
        utilities,
        multipliers,
        prices,
        gap,
        iterations,
    })
}

/// EG with item supplies equal to `probs`; utilities are time-averaged.
pub fn solve_underlying(support: &[Vec<f64>], probs: &[f64], b: &AgentWeights, tol: f64) -> Result<UnderlyingMarket> {
    if support.is_empty() || support.len() != probs.len() {
        return Err(Error::InvalidParameter("support and probs must be nonempty and of equal length".into()));
    }
    let n = b.len();
    if let Some(r) = support.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: r.len() });
    }
    if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("probs must be nonnegative and sum to 1".into()));
    }
    if support.iter().flatten().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidParameter("support values must be finite and nonnegative".into()));
    }
    let (mkt, _) = merge_rows(
        support.iter().zip(probs).filter(|(_, p)| **p > 0.0).map(|(r, p)| (r.as_slice(), *p)),
        n,
        b,
    );
    check_agents(&mkt)?;
    let (x, gap, _) = mkt.solve(mkt.uniform_start(), &SolverOptions::with_tol(tol))?;
    let utilities = mkt.utilities(&x);
    let multipliers = b.as_slice().iter().zip(&utilities).map(|(b, u)| b / u).collect();
    Ok(UnderlyingMarket {
        support: support.to_vec(),
        probs: probs.to_vec(),
        utilities,
        multipliers,
        gap,
    })
}

/// `Σ_i B_i log u_i(x)`; `-∞` if some agent gets nothing.
pub fn primal_objective(v: &ValueSequence, x: &Allocation, b: &AgentWeights) -> Result<f64> {
    let u = x.utilities(v)?;
    Ok(b.as_slice()
        .iter()
        .zip(&u)
        .map(|(b, u)| if *u > 0.0 { b * u.ln() } else { f64::NEG_INFINITY })
        .sum())
}

/// `Σ_τ max_i β_i v_i^τ - Σ_i B_i log β_i + Σ_i (B_i log B_i - B_i)`.
pub fn dual_objective(beta: &[f64], v: &ValueSequence, b: &AgentWeights) -> Result<f64> {
    if beta.len() != v.agents() || b.len() != v.agents() {
        return Err(Error::DimensionMismatch {
            expected: v.agents(),
            got: beta.len(),
        });
    }
    if let Some(i) = beta.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter(format!("multiplier of agent {} must be positive", i + 1)));
    }
    let revenue: f64 = v
        .rows()
        .map(|r| r.iter().zip(beta).map(|(v, b)| v * b).fold(0.0, f64::max))
        .sum();
    let log_term: f64 = b.as_slice().iter().zip(beta).map(|(b, x)| b * x.ln()).sum();
    let constant: f64 = b.as_slice().iter().map(|b| b * b.ln() - b).sum();
    Ok(revenue - log_term + constant)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    /// Largest violation found (0 when none).
    pub worst: f64,
}

impl Check {
    fn from_worst(worst: f64, tol: f64) -> Self {
        Check {
            passed: worst <= tol,
            worst: worst.max(0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub envy_free: Check,
    pub proportional: Check,
    pub market_clearing: Check,
    pub budget_exhaustion: Check,
    pub complementarity: Check,
}

impl EquilibriumReport {
    pub fn passed(&self) -> bool {
        [
            &self.envy_free,
            &self.proportional,
            &self.market_clearing,
            &self.budget_exhaustion,
            &self.complementarity,
        ]
        .iter()
        .all(|c| c.passed)
    }
}

/// Verifies the five equilibrium properties. Requires `eq.x`.
pub fn check_equilibrium(eq: &MarketEquilibrium, v: &ValueSequence, b: &AgentWeights, tol: f64) -> Result<EquilibriumReport> {
    let x = eq
        .x
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("equilibrium carries no allocation".into()))?;
    let n = v.agents();
    let cross = x.cross_utilities(v)?;
    let w = b.as_slice();
    let total = b.total();

    let mut envy: f64 = 0.0;
    for i in 0..n {
        for k in 0..n {
            envy = envy.max(cross[i][k] / w[k] - cross[i][i] / w[i]);
        }
    }
    let mono = v.monopolistic();
    let prop = (0..n).map(|i| w[i] / total * mono[i] - cross[i][i]).fold(0.0, f64::max);

    let mut clearing: f64 = 0.0;
    let mut spent = vec![0.0; n];
    let mut row = vec![0.0; n];
    for tau in 0..v.horizon() {
        x.row_into(tau, &mut row);
        let p = eq.prices[tau];
        if p > 0.0 {
            clearing = clearing.max((row.iter().sum::<f64>() - 1.0).abs());
        }
        for i in 0..n {
            spent[i] += p * row[i];
        }
    }
    let budget = (0..n).map(|i| (spent[i] - w[i]).abs()).fold(0.0, f64::max);
    let comp = (0..n)
        .map(|i| (eq.multipliers[i] * cross[i][i] - w[i]).abs())
        .fold(0.0, f64::max);
    Ok(EquilibriumReport {
        envy_free: Check::from_worst(envy, tol),
        proportional: Check::from_worst(prop, tol),
        market_clearing: Check::from_worst(clearing, tol),
        budget_exhaustion: Check::from_worst(budget, tol),
        complementarity: Check::from_worst(comp, tol),
    })
}

/// Hindsight solution on a prefix of the sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixSolution {
    pub tau: usize,
    /// Time-averaged hindsight utilities `u^{*,1:τ}`.
    pub utilities: Vec<f64>,
    /// Agents with no positive value in the prefix (utility reported as 0).
    pub flagged: Vec<bool>,
    pub gap: f64,
}

/// Solves EG on each prefix `1..=τ`, warm-starting from the previous one.
pub fn hindsight_prefix(v: &ValueSequence, b: &AgentWeights, checkpoints: &[usize], tol: f64) -> Result<Vec<PrefixSolution>> {
    if b.len() != v.agents() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: v.agents(),
        });
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("checkpoints must be strictly increasing".into()));
    }
    if let Some(&c) = checkpoints.iter().find(|&&c| c == 0 || c > v.horizon()) {
        return Err(Error::InvalidParameter(format!("checkpoint {c} outside [1, {}]", v.horizon())));
    }
    let n = v.agents();
    let opts = SolverOptions::with_tol(tol);

    let mut counts: HashMap<Vec<u64>, (usize, usize)> = HashMap::new();
    let mut order: Vec<Vec<f64>> = Vec::new();
    let mut warm: HashMap<Vec<u64>, Vec<f64>> = HashMap::new();
    let mut positive = vec![false; n];
    let mut consumed = 0;
    let mut out = Vec::with_capacity(checkpoints.len());

    for &tau in checkpoints {
        for row in v.rows().skip(consumed).take(tau - consumed) {
            let len = order.len();
            let e = counts.entry(row_key(row)).or_insert_with(|| (len, 0));
            if e.0 == len {
                order.push(row.to_vec());
            }
            e.1 += 1;
            for i in 0..n {
                positive[i] |= row[i] > 0.0;
            }
        }
        consumed = tau;

        let active: Vec<usize> = (0..n).filter(|&i| positive[i]).collect();
        let na = active.len();
        let mut vals = Vec::with_capacity(order.len() * na);
        let mut supply = Vec::with_capacity(order.len());
        let mut keys = Vec::with_capacity(order.len());
        for row in &order {
            let key = row_key(row);
            supply.push(counts[&key].1 as f64);
            vals.extend(active.iter().map(|&i| row[i]));
            keys.push(key);
        }
        let mkt = Market {
            n: na,
            vals,
            supply,
            b: active.iter().map(|&i| b[i]).collect(),
        };
        let mut x0 = mkt.uniform_start();
        for (k, key) in keys.iter().enumerate() {
            if let Some(prev) = warm.get(key) {
                if prev.len() == na {
                    for j in 0..na {
                        x0[k * na + j] = 0.99 * prev[j] + 0.01 * x0[k * na + j];
                    }
                }
            }
        }
        let (x, gap, _) = mkt.solve(x0, &opts).map_err(|e| e.context(format!("prefix {tau}")))?;
        let ua = mkt.utilities(&x);
        for (k, key) in keys.into_iter().enumerate() {
            warm.insert(key, x[k * na..(k + 1) * na].to_vec());
        }
        let mut utilities = vec![0.0; n];
        for (j, &i) in active.iter().enumerate() {
            utilities[i] = ua[j] / tau as f64;
        }
        out.push(PrefixSolution {
            tau,
            utilities,
            flagged: positive.iter().map(|p| !p).collect(),
            gap,
        });
    }
    Ok(out)
}
