//! Seeded input generators and adversarial constructions.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with the spec's
//! 64-bit seed. Stream 0 carries the per-round draws, and round `τ` starts at
//! word `τ · WORDS_PER_ROUND`, so any round can be regenerated on its own.
//! Block shuffles use stream `1 + k` for block `k`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{PaceState, Variant};
use crate::eg::solve_eg;
use crate::error::{Error, Result};
use crate::metrics::competitive_ratio;
use crate::model::{AgentWeights, ExtReal, ValueSequence};

/// 32-bit words reserved for each round on stream 0.
pub const WORDS_PER_ROUND: u128 = 16;

fn round_rng(seed: u64, tau: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_word_pos(tau as u128 * WORDS_PER_ROUND);
    rng
}

/// Uniform draw in `[0, 1)` for round `tau`; consumes two words.
fn uniform(seed: u64, tau: usize) -> f64 {
    round_rng(seed, tau).random::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteDistribution {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(support: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let d = FiniteDistribution { support, probs };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let m = support.len();
        Self::new(support, vec![1.0 / m.max(1) as f64; m])
    }

    pub fn agents(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() || self.support.len() != self.probs.len() {
            return Err(Error::InvalidParameter(
                "distribution needs a nonempty support matching its probabilities".into(),
            ));
        }
        let n = self.agents();
        if n == 0 {
            return Err(Error::InvalidParameter("support points need at least one agent".into()));
        }
        if let Some(r) = self.support.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: r.len() });
        }
        if self.support.iter().flatten().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter("support values must be finite and nonnegative".into()));
        }
        if self.probs.iter().any(|p| !(*p >= 0.0)) || (self.probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("probabilities must be nonnegative and sum to 1".into()));
        }
        let mean = self.mean();
        if let Some(i) = mean.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::ZeroAgent { agent: i + 1 });
        }
        Ok(())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.agents()];
        for (row, p) in self.support.iter().zip(&self.probs) {
            for (a, v) in m.iter_mut().zip(row) {
                *a += p * v;
            }
        }
        m
    }

    /// Inverse-CDF pick for `u ∈ [0, 1)`.
    pub fn pick(&self, u: f64) -> &[f64] {
        let mut acc = 0.0;
        for (row, p) in self.support.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return row;
            }
        }
        let last = self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
        &self.support[last]
    }

    fn masses(&self) -> BTreeMap<Vec<u64>, f64> {
        let mut out = BTreeMap::new();
        for (row, p) in self.support.iter().zip(&self.probs) {
            *out.entry(row.iter().map(|v| v.to_bits()).collect()).or_insert(0.0) += p;
        }
        out
    }
}

/// Total variation between two laws over value vectors.
pub fn tv_distance(a: &FiniteDistribution, b: &FiniteDistribution) -> f64 {
    tv_masses(&a.masses(), &b.masses())
}

fn tv_masses(a: &BTreeMap<Vec<u64>, f64>, b: &BTreeMap<Vec<u64>, f64>) -> f64 {
    let mut d = 0.0;
    for (k, p) in a {
        d += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, q) in b {
        if !a.contains_key(k) {
            d += q;
        }
    }
    0.5 * d
}

fn mix(parts: &[(f64, &FiniteDistribution)]) -> BTreeMap<Vec<u64>, f64> {
    let total: f64 = parts.iter().map(|(w, _)| w).sum();
    let mut out = BTreeMap::new();
    for (w, d) in parts {
        for (k, p) in d.masses() {
            *out.entry(k).or_insert(0.0) += w / total * p;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub len: usize,
    pub dist: FiniteDistribution,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum InputModel {
    Iid {
        #[serde(flatten)]
        dist: FiniteDistribution,
    },
    /// Round `τ` (1-based) draws uniformly from `pools[(τ-1) mod q]`.
    Periodic { pools: Vec<Vec<Vec<f64>>> },
    /// Consecutive blocks; each emits a shuffled multiset matching its law.
    /// `delta`, if given, is a budget the blocks must respect.
    Block {
        blocks: Vec<Block>,
        #[serde(default)]
        delta: Option<f64>,
    },
    /// Markov chain over value vectors, started in `initial`.
    Ergodic {
        states: Vec<Vec<f64>>,
        transition: Vec<Vec<f64>>,
        initial: usize,
    },
    /// Rounds inside `windows` (1-based, inclusive) draw from `corruption`,
    /// all others from `base`.
    Corrupted {
        base: FiniteDistribution,
        corruption: FiniteDistribution,
        windows: Vec<(usize, usize)>,
        #[serde(default)]
        delta: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputModelSpec {
    #[serde(flatten)]
    pub model: InputModel,
    pub t: usize,
    pub seed: u64,
}

impl InputModelSpec {
    pub fn new(model: InputModel, t: usize, seed: u64) -> Self {
        InputModelSpec { model, t, seed }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        InputModelSpec { seed, ..self.clone() }
    }

    pub fn agents(&self) -> usize {
        match &self.model {
            InputModel::Iid { dist } => dist.agents(),
            InputModel::Periodic { pools } => pools.first().and_then(|p| p.first()).map_or(0, Vec::len),
            InputModel::Block { blocks, .. } => blocks.first().map_or(0, |b| b.dist.agents()),
            InputModel::Ergodic { states, .. } => states.first().map_or(0, Vec::len),
            InputModel::Corrupted { base, .. } => base.agents(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t == 0 {
            return Err(Error::InvalidParameter("t must be positive".into()));
        }
        let n = self.agents();
        let same_n = |m: usize| -> Result<()> {
            if m != n {
                return Err(Error::DimensionMismatch { expected: n, got: m });
            }
            Ok(())
        };
        match &self.model {
            InputModel::Iid { dist } => dist.validate()?,
            InputModel::Periodic { pools } => {
                if pools.is_empty() || pools.iter().any(Vec::is_empty) {
                    return Err(Error::InvalidParameter("periodic pools must be nonempty".into()));
                }
                for row in pools.iter().flatten() {
                    same_n(row.len())?;
                    if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                        return Err(Error::InvalidParameter("pool values must be finite and nonnegative".into()));
                    }
                }
            }
            InputModel::Block { blocks, delta } => {
                let covered: usize = blocks.iter().map(|b| b.len).sum();
                if blocks.is_empty() || covered != self.t || blocks.iter().any(|b| b.len == 0) {
                    return Err(Error::InvalidParameter(format!(
                        "blocks must be nonempty and cover exactly {} rounds, got {covered}",
                        self.t
                    )));
                }
                for b in blocks {
                    b.dist.validate()?;
                    same_n(b.dist.agents())?;
                }
                check_budget(empirical_tv_delta(self)?, *delta)?;
            }
            InputModel::Ergodic {
                states,
                transition,
                initial,
            } => {
                let s = states.len();
                if s == 0 || transition.len() != s || *initial >= s {
                    return Err(Error::InvalidParameter("ergodic chain needs matching states and transition rows".into()));
                }
                for row in states {
                    same_n(row.len())?;
                    if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                        return Err(Error::InvalidParameter("state values must be finite and nonnegative".into()));
                    }
                }
                for row in transition {
                    if row.len() != s
                        || row.iter().any(|p| !(*p >= 0.0))
                        || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12
                    {
                        return Err(Error::InvalidParameter("transition rows must be distributions over the states".into()));
                    }
                }
            }
            InputModel::Corrupted {
                base,
                corruption,
                windows,
                delta,
            } => {
                base.validate()?;
                corruption.validate()?;
                same_n(corruption.agents())?;
                if windows.iter().any(|(a, b)| *a == 0 || a > b || *b > self.t) {
                    return Err(Error::InvalidParameter(format!(
                        "corruption windows must lie within [1, {}]",
                        self.t
                    )));
                }
                check_budget(empirical_tv_delta(self)?, *delta)?;
            }
        }
        Ok(())
    }
}

fn check_budget(delta: f64, budget: Option<f64>) -> Result<()> {
    match budget {
        Some(b) if delta > b + 1e-12 => Err(Error::InvalidParameter(format!(
            "deviation {delta} exceeds the declared budget {b}"
        ))),
        _ => Ok(()),
    }
}

fn in_windows(windows: &[(usize, usize)], tau1: usize) -> bool {
    windows.iter().any(|&(a, b)| a <= tau1 && tau1 <= b)
}

/// Counts `len · p_j` rounded by largest remainder (ties to lower index).
fn multiset_counts(len: usize, probs: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = probs.iter().map(|p| p * len as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut left = len.saturating_sub(counts.iter().sum());
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &j in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if probs[j] > 0.0 {
            counts[j] += 1;
            left -= 1;
        }
    }
    counts
}

/// Draws the instance. Deterministic in `(spec, seed)`.
pub fn gen(spec: &InputModelSpec) -> Result<ValueSequence> {
    spec.validate()?;
    let (t, n, seed) = (spec.t, spec.agents(), spec.seed);
    let mut data = Vec::with_capacity(t * n);
    match &spec.model {
        InputModel::Iid { dist } => {
            for tau in 0..t {
                data.extend_from_slice(dist.pick(uniform(seed, tau)));
            }
        }
        InputModel::Periodic { pools } => {
            let q = pools.len();
            for tau in 0..t {
                let pool = &pools[tau % q];
                let j = ((uniform(seed, tau) * pool.len() as f64) as usize).min(pool.len() - 1);
                data.extend_from_slice(&pool[j]);
            }
        }
        InputModel::Block { blocks, .. } => {
            for (k, b) in blocks.iter().enumerate() {
                let counts = multiset_counts(b.len, &b.dist.probs);
                let mut idx: Vec<usize> = counts
                    .iter()
                    .enumerate()
                    .flat_map(|(j, &c)| std::iter::repeat_n(j, c))
                    .collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(1 + k as u64);
                idx.shuffle(&mut rng);
                for j in idx {
                    data.extend_from_slice(&b.dist.support[j]);
                }
            }
        }
        InputModel::Ergodic {
            states,
            transition,
            initial,
        } => {
            let mut s = *initial;
            for tau in 0..t {
                if tau > 0 {
                    let u = uniform(seed, tau);
                    let row = &transition[s];
                    let mut acc = 0.0;
                    let mut next = row.iter().rposition(|p| *p > 0.0).unwrap_or(0);
                    for (j, p) in row.iter().enumerate() {
                        acc += p;
                        if u < acc {
                            next = j;
                            break;
                        }
                    }
                    s = next;
                }
                data.extend_from_slice(&states[s]);
            }
        }
        InputModel::Corrupted {
            base,
            corruption,
            windows,
            ..
        } => {
            for tau in 0..t {
                let d = if in_windows(windows, tau + 1) { corruption } else { base };
                data.extend_from_slice(d.pick(uniform(seed, tau)));
            }
        }
    }
    ValueSequence::from_flat(t, n, data)
}

/// `(1/t) Σ_k |I_k| · TV(Q^(k), Q̄)` from the declared laws (per-round blocks
/// for the corrupted model).
pub fn empirical_tv_delta(spec: &InputModelSpec) -> Result<f64> {
    let t = spec.t as f64;
    match &spec.model {
        InputModel::Block { blocks, .. } => {
            let parts: Vec<(f64, &FiniteDistribution)> = blocks.iter().map(|b| (b.len as f64, &b.dist)).collect();
            let avg = mix(&parts);
            Ok(blocks
                .iter()
                .map(|b| b.len as f64 * tv_masses(&b.dist.masses(), &avg))
                .sum::<f64>()
                / t)
        }
        InputModel::Corrupted {
            base,
            corruption,
            windows,
            ..
        } => {
            let bad = (1..=spec.t).filter(|&tau| in_windows(windows, tau)).count() as f64;
            let good = t - bad;
            let avg = mix(&[(good, base), (bad, corruption)]);
            Ok((good * tv_masses(&base.masses(), &avg) + bad * tv_masses(&corruption.masses(), &avg)) / t)
        }
        _ => Err(Error::InvalidParameter(
            "deviation is defined for block and corrupted models".into(),
        )),
    }
}

/// `δ(ι)` of an ergodic chain over the horizon: the largest TV distance
/// between an `ι`-step law from a reachable state and the time-averaged
/// marginal.
pub fn ergodic_delta(spec: &InputModelSpec, iota: usize) -> Result<f64> {
    let InputModel::Ergodic {
        states,
        transition,
        initial,
    } = &spec.model
    else {
        return Err(Error::InvalidParameter("ergodic deviation needs an ergodic model".into()));
    };
    spec.validate()?;
    if iota == 0 || iota >= spec.t {
        return Err(Error::InvalidParameter(format!("iota must lie in [1, {}]", spec.t - 1)));
    }
    let s = states.len();
    let step = |mu: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; s];
        for (i, m) in mu.iter().enumerate() {
            if *m > 0.0 {
                for (j, p) in transition[i].iter().enumerate() {
                    out[j] += m * p;
                }
            }
        }
        out
    };
    let mut mu = vec![0.0; s];
    mu[*initial] = 1.0;
    let mut avg = vec![0.0; s];
    let mut reachable = vec![false; s];
    for tau in 0..spec.t {
        if tau > 0 {
            mu = step(&mu);
        }
        for j in 0..s {
            avg[j] += mu[j] / spec.t as f64;
            // conditioning rounds are 1..=t-ι
            if tau < spec.t - iota && mu[j] > 0.0 {
                reachable[j] = true;
            }
        }
    }
    let to_values = |w: &[f64]| -> BTreeMap<Vec<u64>, f64> {
        let mut out = BTreeMap::new();
        for (j, p) in w.iter().enumerate() {
            if *p > 0.0 {
                *out.entry(states[j].iter().map(|v| v.to_bits()).collect()).or_insert(0.0) += p;
            }
        }
        out
    };
    let avg_v = to_values(&avg);
    let mut worst: f64 = 0.0;
    for j in (0..s).filter(|&j| reachable[j]) {
        let mut w = vec![0.0; s];
        w[j] = 1.0;
        for _ in 0..iota {
            w = step(&w);
        }
        worst = worst.max(tv_masses(&to_values(&w), &avg_v));
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvyConstruction {
    pub instance: ValueSequence,
    /// `(W_2 - R) / R` from the realized integer phase lengths.
    pub predicted_envy: f64,
    /// Ratio actually used, `(1/ε)^{1/k}`.
    pub a: f64,
    pub k: usize,
    /// `(length, value_1, value_2)` per phase.
    pub phases: Vec<(usize, f64, f64)>,
}

/// Two-agent instance on which equal-weight pacing ends with multiplicative
/// envy close to `1 + 2 ln(1/ε)`. `a` is adjusted so that `ε a^k = 1` with
/// `k = round(log_a(1/ε))`.
pub fn adv_envy_worstcase(eps: f64, a: f64, r: usize) -> Result<EnvyConstruction> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0, 1], got {eps}")));
    }
    if !(a > 1.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("a must exceed 1, got {a}")));
    }
    if r == 0 {
        return Err(Error::InvalidParameter("R must be positive".into()));
    }
    let k = ((1.0 / eps).ln() / a.ln()).round() as usize;
    let a = if k == 0 { a } else { (1.0 / eps).powf(1.0 / k as f64) };
    let rf = r as f64;
    let mut phases = vec![(r, 0.0, 1.0), (r, eps, 1.0)];
    if k > 0 {
        let lb = ((1.0 - 1.0 / a) * rf).ceil() as usize;
        let lc = ((1.0 - 1.0 / a) * rf / eps).ceil() as usize;
        let level = |j: usize| if j == k { 1.0 } else { eps * a.powi(j as i32) };
        for j in 1..=k {
            phases.push((lb, level(j), 1.0));
        }
        for j in 1..=k {
            phases.push((lc, level(j), eps));
        }
    }
    let total: usize = phases.iter().map(|p| p.0).sum();
    let mut data = Vec::with_capacity(2 * total);
    let mut w2 = 0.0;
    for &(len, v1, v2) in &phases {
        w2 += len as f64 * v2;
        for _ in 0..len {
            data.push(v1);
            data.push(v2);
        }
    }
    Ok(EnvyConstruction {
        instance: ValueSequence::from_flat(total, 2, data)?,
        predicted_envy: (w2 - rf) / rf,
        a,
        k,
        phases,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrKiller {
    pub instance: ValueSequence,
    /// `(n!)^{1/n} Π_k ((t_k - t_{k-1}) / t_k)^{1/n}`.
    pub bound: f64,
    /// Agent losing its values at the end of each phase; the last entry is
    /// the survivor.
    pub order: Vec<usize>,
    /// Utilities of the policy on the instance.
    pub policy_utilities: Vec<f64>,
    /// Alternate allocation giving phase `k` entirely to `order[k]`.
    pub witness_utilities: Vec<f64>,
    /// `NW(witness) / NW(policy)`; infinite if the policy starves an agent.
    pub witness_ratio: ExtReal,
}

impl CrKiller {
    /// Competitive ratio of the policy against the exact hindsight optimum.
    pub fn measured_cr(&self, tol: f64) -> Result<ExtReal> {
        let b = AgentWeights::uniform(self.instance.agents());
        let eq = solve_eg(&self.instance, &b, tol)?;
        competitive_ratio(&self.policy_utilities, &eq.utilities, &b)
    }
}

/// Adaptive construction against `policy` with equal weights. `phases` are
/// the cumulative phase ends `t_1 < ... < t_n`. The first phase is all ones;
/// at each phase end the unkilled agent with the least utility (ties to the
/// smaller index) has its values zeroed for the rest of the sequence.
pub fn adv_cr_killer(n: usize, phases: &[usize], policy: &Variant) -> Result<CrKiller> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one agent".into()));
    }
    if n > phases.len() {
        return Err(Error::InvalidParameter(format!(
            "{n} agents need {n} phases, got {}",
            phases.len()
        )));
    }
    if phases.len() > n {
        return Err(Error::InvalidParameter(format!(
            "expected exactly {n} phase ends, got {}",
            phases.len()
        )));
    }
    if phases[0] == 0 || phases.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("phase ends must be positive and increasing".into()));
    }
    if matches!(policy, Variant::SetAside { monopolistic: None }) {
        return Err(Error::InvalidParameter(
            "set-aside needs monopolistic utilities that an adaptive instance cannot supply".into(),
        ));
    }
    let b = AgentWeights::uniform(n);
    let policy = match policy {
        Variant::Constrained { lows, highs } if lows.len() != n || highs.len() != n => {
            return Err(Error::DimensionMismatch { expected: n, got: lows.len() })
        }
        p => p.clone(),
    };
    let mut state = PaceState::new(b.clone(), policy)?;
    let t = *phases.last().unwrap();
    let mut data = Vec::with_capacity(t * n);
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    let mut start = 0;
    let mut row = vec![0.0; n];
    for (k, &end) in phases.iter().enumerate() {
        for (r, a) in row.iter_mut().zip(&alive) {
            *r = if *a { 1.0 } else { 0.0 };
        }
        for _ in start..end {
            state.advance(&row)?;
            data.extend_from_slice(&row);
        }
        let victim = (0..n)
            .filter(|&i| alive[i])
            .min_by(|&a, &b| state.utilities()[a].partial_cmp(&state.utilities()[b]).unwrap().then(a.cmp(&b)))
            .unwrap();
        if k + 1 < n {
            alive[victim] = false;
        }
        order.push(victim);
        start = end;
    }
    let mut witness = vec![0.0; n];
    let mut prev = 0;
    let mut log_bound = 0.0;
    for (k, &end) in phases.iter().enumerate() {
        witness[order[k]] = (end - prev) as f64;
        log_bound += ((end - prev) as f64 / end as f64).ln() + ((k + 1) as f64).ln();
        prev = end;
    }
    let policy_utilities = state.utilities().to_vec();
    Ok(CrKiller {
        instance: ValueSequence::from_flat(t, n, data)?,
        bound: (log_bound / n as f64).exp(),
        witness_ratio: competitive_ratio(&policy_utilities, &witness, &b)?,
        order,
        policy_utilities,
        witness_utilities: witness,
    })
}

/// Constant two-agent instance `v^τ = (c, c)` with `c = min(1/r₂, cap)`.
pub fn adv_constrained_failure(r2: f64, cap: f64, t: usize) -> Result<ValueSequence> {
    if !(r2 > 0.0 && cap > 0.0 && r2.is_finite() && cap.is_finite()) || t == 0 {
        return Err(Error::InvalidParameter("r2 and cap must be positive, t at least 1".into()));
    }
    let c = (1.0 / r2).min(cap);
    ValueSequence::from_flat(t, 2, vec![c; 2 * t])
}

/// Draws a fresh 64-bit seed for repetition `rep` from a base seed.
pub fn repetition_seed(base: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(u64::MAX);
    rng.set_word_pos(2 * rep as u128);
    rng.next_u64()
}
