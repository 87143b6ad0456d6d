//! Online allocation dynamics: unconstrained, constrained, seeded and
//! set-aside pacing, the one-step Nash-welfare greedy rule and the
//! proportional baseline.
//!
//! Every integral variant allocates item `τ` to the smallest index maximizing
//! a per-agent score. For the pacing variants the score is the bid
//! `β_i^τ v_i^τ` divided by the common factor `τ - 1`, i.e.
//! `B_i v_i^τ / D_i^{τ-1}` where `D_i` is the variant's tracked cumulative
//! utility. Dropping the common factor leaves the argmax unchanged and makes
//! the decision independent of the round counter, which keeps restricted
//! instances and rescaled instances bit-identical to the originals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{min_argmax, AgentWeights, Allocation, ExtReal, ValueSequence};

/// Which online rule allocates the items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Unconstrained,
    /// Multipliers projected to `[lows[i], highs[i]]` after every update.
    Constrained { lows: Vec<f64>, highs: Vec<f64> },
    /// Every agent starts with a fictitious utility `xi`.
    Seeded { xi: f64 },
    /// Half of each item split equally, the other half auctioned with seeds
    /// `W_i/(2n)`. `None` means "use the exact monopolistic utilities".
    SetAside { monopolistic: Option<Vec<f64>> },
    OneStepGreedy,
    Proportional,
}

impl Variant {
    /// Projection intervals `[B_i/(1+δ₀), B_i(1+δ₀)]`.
    pub fn constrained_normalized(weights: &AgentWeights, delta0: f64) -> Result<Self> {
        if !(delta0 > 0.0 && delta0.is_finite()) {
            return Err(Error::InvalidParameter(format!("delta0 must be positive, got {delta0}")));
        }
        Ok(Variant::Constrained {
            lows: weights.as_slice().iter().map(|b| b / (1.0 + delta0)).collect(),
            highs: weights.as_slice().iter().map(|b| b * (1.0 + delta0)).collect(),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Unconstrained => "pace",
            Variant::Constrained { .. } => "constrained",
            Variant::Seeded { .. } => "seeded",
            Variant::SetAside { .. } => "set-aside",
            Variant::OneStepGreedy => "greedy",
            Variant::Proportional => "proportional",
        }
    }

    /// True for the variants that hand each item to a single agent.
    pub fn is_integral(&self) -> bool {
        !matches!(self, Variant::Proportional | Variant::SetAside { .. })
    }

    /// True for variants whose multipliers are pacing multipliers.
    pub fn is_pacing(&self) -> bool {
        matches!(
            self,
            Variant::Unconstrained | Variant::Constrained { .. } | Variant::Seeded { .. } | Variant::SetAside { .. }
        )
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            Variant::Constrained { lows, highs } => {
                if lows.len() != n || highs.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        got: lows.len().min(highs.len()),
                    });
                }
                for (i, (l, r)) in lows.iter().zip(highs).enumerate() {
                    if !(*l >= 0.0 && l < r && r.is_finite()) {
                        return Err(Error::InvalidParameter(format!(
                            "projection interval [{l}, {r}] of agent {} is not 0 <= l < r < inf",
                            i + 1
                        )));
                    }
                }
            }
            Variant::Seeded { xi } => {
                if !(*xi > 0.0 && xi.is_finite()) {
                    return Err(Error::InvalidParameter(format!("seed must be positive, got {xi}")));
                }
            }
            Variant::SetAside { monopolistic: Some(w) } => {
                if w.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: w.len() });
                }
                if let Some(i) = w.iter().position(|x| !(*x > 0.0 && x.is_finite())) {
                    return Err(Error::InvalidParameter(format!(
                        "monopolistic utility of agent {} must be positive",
                        i + 1
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Fills in exact monopolistic utilities for a set-aside variant.
    pub fn resolve(&self, v: &ValueSequence) -> Variant {
        match self {
            Variant::SetAside { monopolistic: None } => Variant::SetAside {
                monopolistic: Some(v.monopolistic()),
            },
            other => other.clone(),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Seeded { xi } => write!(f, "seeded,xi={xi}"),
            Variant::Constrained { lows, highs } => {
                write!(f, "constrained,lows={lows:?},highs={highs:?}")
            }
            other => f.write_str(other.name()),
        }
    }
}

/// Parses `name[,key=value...]`. Constrained variants parsed this way hold a
/// placeholder interval and must go through [`VariantSpec::build`].
#[derive(Clone, Debug, PartialEq)]
pub struct VariantSpec {
    pub name: String,
    pub params: Vec<(String, f64)>,
}

impl VariantSpec {
    fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Builds the variant for a particular weight vector.
    pub fn build(&self, weights: &AgentWeights) -> Result<Variant> {
        let v = match self.name.as_str() {
            "pace" | "unconstrained" => Variant::Unconstrained,
            "constrained" => {
                let delta0 = self.param("delta0").unwrap_or(1.0);
                Variant::constrained_normalized(weights, delta0)?
            }
            "seeded" => Variant::Seeded {
                xi: self.param("xi").unwrap_or(1.0),
            },
            "set-aside" | "setaside" => Variant::SetAside { monopolistic: None },
            "greedy" | "one-step-greedy" => Variant::OneStepGreedy,
            "proportional" => Variant::Proportional,
            other => return Err(Error::InvalidParameter(format!("unknown variant {other:?}"))),
        };
        v.validate(weights.len())?;
        Ok(v)
    }

    /// Comma-free label, e.g. `seeded;xi=0.5`; parses back to the same spec.
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            self.name.clone()
        } else {
            let p: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("{};{}", self.name, p.join(";"))
        }
    }
}

impl FromStr for VariantSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split([',', ';']).map(str::trim);
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        const KNOWN: [&str; 9] = [
            "pace",
            "unconstrained",
            "constrained",
            "seeded",
            "set-aside",
            "setaside",
            "greedy",
            "one-step-greedy",
            "proportional",
        ];
        if !KNOWN.contains(&name.as_str()) {
            return Err(Error::InvalidParameter(format!("unknown variant {name:?}")));
        }
        let mut params = Vec::new();
        for p in parts {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("malformed variant parameter {p:?}")))?;
            let v: f64 = v
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("malformed number in {p:?}")))?;
            let k = k.trim();
            let allowed = match name.as_str() {
                "constrained" => k == "delta0",
                "seeded" => k == "xi",
                _ => false,
            };
            if !allowed {
                return Err(Error::InvalidParameter(format!("{name} takes no parameter {k:?}")));
            }
            params.push((k.to_string(), v));
        }
        Ok(VariantSpec { name, params })
    }
}

/// Pacing multiplier. `Unserved` stands for `+∞` (zero tracked utility).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplier {
    Served(f64),
    Unserved,
}

impl Multiplier {
    /// `β v` with the `0 · ∞ = 0` convention.
    pub fn bid(self, value: f64) -> ExtReal {
        match self {
            Multiplier::Served(b) => ExtReal::Finite(b * value),
            Multiplier::Unserved if value > 0.0 => ExtReal::Infinite,
            Multiplier::Unserved => ExtReal::Finite(0.0),
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Multiplier::Served(b) => Some(b),
            Multiplier::Unserved => None,
        }
    }
}

/// How multipliers are set before the first item arrives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstRound {
    /// Tracked utility starts at zero: unconstrained agents are unserved,
    /// constrained agents sit at the top of their interval, seeded agents
    /// start from their seed.
    #[default]
    Unserved,
    /// `β¹ = 1ⁿ` for every agent.
    UnitMultipliers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// `None` only for the proportional baseline.
    pub winner: Option<usize>,
    pub allocation: Vec<f64>,
    pub bids: Vec<ExtReal>,
    /// `b_i^τ = β_i^τ v_i^τ 1{i = i^τ}`.
    pub expenditure: Vec<ExtReal>,
    pub utilities: Vec<f64>,
}

/// State of one dynamic after `round` completed items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaceState {
    round: usize,
    utilities: Vec<f64>,
    /// Cumulative utility the decision rule divides by (seeded and set-aside
    /// variants include their seed; set-aside is in normalized units).
    tracked: Vec<f64>,
    /// Tracked time-average, updated incrementally.
    average: Vec<f64>,
    multipliers: Vec<Multiplier>,
    variant: Variant,
    weights: AgentWeights,
    first_round: FirstRound,
}

impl PaceState {
    pub fn new(weights: AgentWeights, variant: Variant) -> Result<Self> {
        Self::with_first_round(weights, variant, FirstRound::default())
    }

    pub fn with_first_round(weights: AgentWeights, variant: Variant, first_round: FirstRound) -> Result<Self> {
        let n = weights.len();
        variant.validate(n)?;
        if let Variant::SetAside { monopolistic: None } = variant {
            return Err(Error::InvalidParameter(
                "set-aside needs monopolistic utilities; resolve the variant against the instance first".into(),
            ));
        }
        let tracked = match &variant {
            Variant::Seeded { xi } => vec![*xi; n],
            Variant::SetAside { .. } => vec![0.5 / n as f64; n],
            _ => vec![0.0; n],
        };
        let multipliers = (0..n)
            .map(|i| initial_multiplier(&variant, &weights, &tracked, i, first_round))
            .collect();
        Ok(PaceState {
            round: 0,
            utilities: vec![0.0; n],
            tracked,
            average: vec![0.0; n],
            multipliers,
            variant,
            weights,
            first_round,
        })
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn agents(&self) -> usize {
        self.weights.len()
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }

    /// Realized time-averaged utilities `U_i / τ`.
    pub fn averages(&self) -> Vec<f64> {
        let tau = self.round.max(1) as f64;
        self.utilities.iter().map(|u| u / tau).collect()
    }

    /// The variant's tracked average (the quantity multipliers divide by).
    pub fn tracked_average(&self) -> &[f64] {
        &self.average
    }

    pub fn multipliers(&self) -> &[Multiplier] {
        &self.multipliers
    }

    pub fn variant(&self) -> &Variant {
        &self.variant
    }

    pub fn weights(&self) -> &AgentWeights {
        &self.weights
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.agents() {
            return Err(Error::DimensionMismatch {
                expected: self.agents(),
                got: row.len(),
            });
        }
        Ok(())
    }

    fn value_scale(&self, i: usize) -> f64 {
        match &self.variant {
            Variant::SetAside { monopolistic: Some(w) } => 1.0 / w[i],
            _ => 1.0,
        }
    }

    /// Bids `β_i v_i` at the current round. Unserved agents bid `+∞` on a
    /// positive value and 0 otherwise. Set-aside bids are on normalized values.
    /// The greedy rule reports its log-increments; the proportional baseline
    /// reports zeros.
    pub fn bids(&self, row: &[f64]) -> Result<Vec<ExtReal>> {
        self.check_row(row)?;
        Ok(match &self.variant {
            Variant::OneStepGreedy => (0..row.len()).map(|i| self.score(row, i)).collect(),
            Variant::Proportional => vec![ExtReal::Finite(0.0); row.len()],
            _ => (0..row.len())
                .map(|i| self.multipliers[i].bid(row[i] * self.value_scale(i)))
                .collect(),
        })
    }

    fn score(&self, row: &[f64], i: usize) -> ExtReal {
        let v = row[i];
        let b = self.weights[i];
        let unit_start = self.round == 0 && self.first_round == FirstRound::UnitMultipliers;
        match &self.variant {
            Variant::Constrained { .. } => self.multipliers[i].bid(v),
            _ if unit_start => ExtReal::Finite(v * self.value_scale(i)),
            Variant::Unconstrained => {
                if v == 0.0 {
                    ExtReal::Finite(0.0)
                } else if self.tracked[i] == 0.0 {
                    ExtReal::Infinite
                } else {
                    ExtReal::Finite(b * v / self.tracked[i])
                }
            }
            Variant::Seeded { .. } => ExtReal::Finite(b * v / self.tracked[i]),
            Variant::SetAside { monopolistic: Some(w) } => ExtReal::Finite(b * (v / w[i]) / self.tracked[i]),
            Variant::OneStepGreedy => {
                if v == 0.0 {
                    ExtReal::Finite(0.0)
                } else if self.utilities[i] == 0.0 {
                    ExtReal::Infinite
                } else {
                    ExtReal::Finite(b * (v / self.utilities[i]).ln_1p())
                }
            }
            Variant::SetAside { monopolistic: None } | Variant::Proportional => ExtReal::Finite(0.0),
        }
    }

    /// Winner of the next item without changing state.
    pub fn decide(&self, row: &[f64]) -> Option<usize> {
        match self.variant {
            Variant::Proportional => None,
            _ => Some(min_argmax((0..row.len()).map(|i| self.score(row, i)))),
        }
    }

    /// Allocated fraction of the current item for `agent`.
    fn share(&self, winner: Option<usize>, agent: usize) -> f64 {
        let n = self.agents() as f64;
        match (&self.variant, winner) {
            (Variant::Proportional, _) => self.weights[agent] / self.weights.total(),
            (Variant::SetAside { .. }, Some(w)) => 0.5 / n + if w == agent { 0.5 } else { 0.0 },
            (_, Some(w)) if w == agent => 1.0,
            _ => 0.0,
        }
    }

    /// Applies one item, returning the winner (if integral) and the winner's
    /// expenditure (`None` means `+∞`).
    fn apply(&mut self, row: &[f64]) -> (Option<usize>, Option<f64>) {
        let winner = self.decide(row);
        let spend = winner.and_then(|w| match self.variant {
            Variant::OneStepGreedy | Variant::Proportional => Some(0.0),
            _ => self.multipliers[w].bid(row[w] * self.value_scale(w)).finite(),
        });
        self.round += 1;
        let tau = self.round as f64;
        let n = self.agents();
        for i in 0..n {
            let u = row[i] * self.share(winner, i);
            self.utilities[i] += u;
            let tracked_inc = match &self.variant {
                Variant::SetAside { monopolistic: Some(w) } => {
                    if winner == Some(i) {
                        0.5 * row[i] / w[i]
                    } else {
                        0.0
                    }
                }
                _ => u,
            };
            self.tracked[i] += tracked_inc;
            // ū^τ = (τ-1)/τ ū^{τ-1} + u^τ/τ, with any seed entering once at τ = 1.
            let seed = if self.round == 1 {
                match &self.variant {
                    Variant::Seeded { xi } => *xi,
                    Variant::SetAside { .. } => 0.5 / n as f64,
                    _ => 0.0,
                }
            } else {
                0.0
            };
            self.average[i] = (tau - 1.0) / tau * self.average[i] + (tracked_inc + seed) / tau;
            self.multipliers[i] = self.next_multiplier(i);
        }
        (winner, spend)
    }

    fn next_multiplier(&self, i: usize) -> Multiplier {
        let b = self.weights[i];
        let avg = self.average[i];
        match &self.variant {
            Variant::Constrained { lows, highs } => {
                let raw = if avg > 0.0 { b / avg } else { f64::MAX };
                Multiplier::Served(raw.clamp(lows[i], highs[i]))
            }
            Variant::Proportional => Multiplier::Served(0.0),
            _ if avg > 0.0 => Multiplier::Served(b / avg),
            _ => Multiplier::Unserved,
        }
    }

    /// Mutating single step.
    pub fn advance(&mut self, row: &[f64]) -> Result<StepOutcome> {
        self.check_row(row)?;
        let bids = self.bids(row)?;
        let before = self.utilities.clone();
        let (winner, spend) = self.apply(row);
        let n = self.agents();
        let allocation: Vec<f64> = (0..n).map(|i| self.share(winner, i)).collect();
        let mut expenditure = vec![ExtReal::Finite(0.0); n];
        if let (Some(w), true) = (winner, self.variant.is_pacing()) {
            expenditure[w] = spend.map_or(ExtReal::Infinite, ExtReal::Finite);
        }
        let utilities = self.utilities.iter().zip(&before).map(|(a, b)| a - b).collect();
        Ok(StepOutcome {
            winner,
            allocation,
            bids,
            expenditure,
            utilities,
        })
    }

    /// Pure single step: returns the successor state and the outcome.
    pub fn step(&self, row: &[f64]) -> Result<(PaceState, StepOutcome)> {
        let mut next = self.clone();
        let out = next.advance(row)?;
        Ok((next, out))
    }
}

fn initial_multiplier(
    variant: &Variant,
    weights: &AgentWeights,
    tracked: &[f64],
    i: usize,
    first_round: FirstRound,
) -> Multiplier {
    match (variant, first_round) {
        (Variant::Constrained { lows, highs }, FirstRound::UnitMultipliers) => {
            Multiplier::Served(1.0f64.clamp(lows[i], highs[i]))
        }
        (Variant::Constrained { highs, .. }, FirstRound::Unserved) => Multiplier::Served(highs[i]),
        (Variant::Proportional, _) => Multiplier::Served(0.0),
        (_, FirstRound::UnitMultipliers) => Multiplier::Served(1.0),
        (Variant::Seeded { .. } | Variant::SetAside { .. }, FirstRound::Unserved) => {
            Multiplier::Served(weights[i] / tracked[i])
        }
        _ => Multiplier::Unserved,
    }
}

/// State snapshot at a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tau: usize,
    pub utilities: Vec<f64>,
    /// `U_i / τ`.
    pub averages: Vec<f64>,
    /// Multipliers that will price item `τ + 1`.
    pub multipliers: Vec<Multiplier>,
    /// Cumulative finite expenditure per agent.
    pub expenditure: Vec<f64>,
    /// Rounds in which the agent won while unserved (infinite expenditure).
    pub infinite_spends: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// 1-based rounds at which to snapshot the state. The horizon is always
    /// added.
    pub checkpoints: Vec<usize>,
    /// Store every [`StepOutcome`].
    pub keep_steps: bool,
    pub first_round: FirstRound,
    pub label: Option<String>,
}

impl RunOptions {
    pub fn with_checkpoints(checkpoints: &[usize]) -> Self {
        RunOptions {
            checkpoints: checkpoints.to_vec(),
            ..Default::default()
        }
    }
}

/// Full record of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub instance: Option<String>,
    pub horizon: usize,
    pub variant: Variant,
    pub weights: AgentWeights,
    pub first_round: FirstRound,
    pub allocation: Allocation,
    /// Winner expenditure per round (`None` = `+∞`). Empty for non-pacing variants.
    pub spend: Vec<Option<f64>>,
    pub checkpoints: Vec<Checkpoint>,
    pub utilities: Vec<f64>,
    pub averages: Vec<f64>,
    pub multipliers: Vec<Multiplier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<StepOutcome>>,
}

impl RunTrace {
    pub fn agents(&self) -> usize {
        self.weights.len()
    }

    pub fn winners(&self) -> Option<&[usize]> {
        match &self.allocation {
            Allocation::Integral { winners, .. } | Allocation::SetAside { winners, .. } => Some(winners),
            _ => None,
        }
    }

    pub fn checkpoint(&self, tau: usize) -> Option<&Checkpoint> {
        self.checkpoints.iter().find(|c| c.tau == tau)
    }

    /// One CSV row per checkpoint: `tau`, then per agent `avg_i`, `beta_i`,
    /// `spend_i`. Unserved multipliers print as `inf`.
    pub fn to_csv(&self) -> String {
        let n = self.agents();
        let mut out = String::from("tau");
        for prefix in ["avg", "beta", "spend"] {
            for i in 1..=n {
                out.push_str(&format!(",{prefix}_{i}"));
            }
        }
        out.push('\n');
        for c in &self.checkpoints {
            out.push_str(&c.tau.to_string());
            for a in &c.averages {
                out.push_str(&format!(",{a:?}"));
            }
            for m in &c.multipliers {
                match m {
                    Multiplier::Served(b) => out.push_str(&format!(",{b:?}")),
                    Multiplier::Unserved => out.push_str(",inf"),
                }
            }
            for (e, inf) in c.expenditure.iter().zip(&c.infinite_spends) {
                if *inf > 0 {
                    out.push_str(",inf");
                } else {
                    out.push_str(&format!(",{e:?}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Runs a dynamic over the whole sequence. Deterministic: identical inputs
/// give bit-identical traces.
pub fn run(v: &ValueSequence, weights: &AgentWeights, variant: &Variant, checkpoints: &[usize]) -> Result<RunTrace> {
    run_with(v, weights, variant, &RunOptions::with_checkpoints(checkpoints))
}

pub fn run_with(v: &ValueSequence, weights: &AgentWeights, variant: &Variant, opts: &RunOptions) -> Result<RunTrace> {
    let n = v.agents();
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: n,
        });
    }
    let t = v.horizon();
    let variant = variant.resolve(v);
    let mut state = PaceState::with_first_round(weights.clone(), variant.clone(), opts.first_round)?;

    let mut marks: Vec<usize> = opts.checkpoints.iter().copied().filter(|&c| c >= 1 && c <= t).collect();
    marks.push(t);
    marks.sort_unstable();
    marks.dedup();
    let mut next_mark = 0;

    let pacing = variant.is_pacing();
    let mut winners = Vec::with_capacity(if variant == Variant::Proportional { 0 } else { t });
    let mut spend = Vec::with_capacity(if pacing { t } else { 0 });
    let mut cum_spend = vec![0.0; n];
    let mut inf_spends = vec![0usize; n];
    let mut checkpoints = Vec::with_capacity(marks.len());
    let mut steps = opts.keep_steps.then(|| Vec::with_capacity(t));

    for (tau, row) in v.rows().enumerate() {
        let (winner, s) = if let Some(steps) = steps.as_mut() {
            let out = state.advance(row)?;
            let w = out.winner;
            let s = w.and_then(|w| out.expenditure[w].finite());
            steps.push(out);
            (w, s)
        } else {
            state.apply(row)
        };
        if let Some(w) = winner {
            winners.push(w);
            if pacing {
                spend.push(s);
                match s {
                    Some(x) => cum_spend[w] += x,
                    None => inf_spends[w] += 1,
                }
            }
        }
        if marks.get(next_mark) == Some(&(tau + 1)) {
            checkpoints.push(Checkpoint {
                tau: tau + 1,
                utilities: state.utilities.clone(),
                averages: state.averages(),
                multipliers: state.multipliers.clone(),
                expenditure: cum_spend.clone(),
                infinite_spends: inf_spends.clone(),
            });
            next_mark += 1;
        }
    }

    let allocation = match &variant {
        Variant::Proportional => Allocation::Uniform {
            items: t,
            shares: weights.shares(),
        },
        Variant::SetAside { .. } => Allocation::SetAside { agents: n, winners },
        _ => Allocation::Integral { agents: n, winners },
    };
    Ok(RunTrace {
        instance: opts.label.clone(),
        horizon: t,
        variant,
        weights: weights.clone(),
        first_round: opts.first_round,
        allocation,
        spend,
        checkpoints,
        utilities: state.utilities.clone(),
        averages: state.averages(),
        multipliers: state.multipliers.clone(),
        steps,
    })
}

/// Removes agents outside `agents` and every item won by an agent outside it.
/// `agents` is taken as a set; the kept agents retain their relative order.
pub fn restrict_instance(v: &ValueSequence, trace: &RunTrace, agents: &[usize]) -> Result<ValueSequence> {
    if agents.is_empty() {
        return Err(Error::InvalidParameter("empty agent subset".into()));
    }
    if trace.variant != Variant::Unconstrained {
        return Err(Error::InvalidParameter(
            "restriction is defined for unconstrained runs".into(),
        ));
    }
    let winners = trace
        .winners()
        .ok_or_else(|| Error::InvalidParameter("trace has no winners".into()))?;
    if winners.len() != v.horizon() {
        return Err(Error::InvalidParameter("trace does not match instance".into()));
    }
    let mut keep = agents.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if let Some(&bad) = keep.iter().find(|&&i| i >= v.agents()) {
        return Err(Error::InvalidParameter(format!("agent {bad} out of range")));
    }
    let mut member = vec![false; v.agents()];
    for &i in &keep {
        member[i] = true;
    }
    let items: Vec<usize> = (0..v.horizon()).filter(|&tau| member[winners[tau]]).collect();
    v.select(&keep, &items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs(rows: &[&[f64]]) -> ValueSequence {
        ValueSequence::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn ones(n: usize) -> AgentWeights {
        AgentWeights::equal(n, 1.0).unwrap()
    }

    #[test]
    fn first_round_bids() {
        let unit = PaceState::with_first_round(ones(2), Variant::Unconstrained, FirstRound::UnitMultipliers).unwrap();
        assert_eq!(unit.bids(&[1.0, 1.0]).unwrap(), vec![ExtReal::Finite(1.0); 2]);
        let fresh = PaceState::new(ones(2), Variant::Unconstrained).unwrap();
        assert_eq!(fresh.bids(&[1.0, 0.0]).unwrap(), vec![ExtReal::Infinite, ExtReal::Finite(0.0)]);
    }

    #[test]
    fn served_and_unserved_bids() {
        let mut s = PaceState::new(ones(2), Variant::Unconstrained).unwrap();
        s.multipliers = vec![Multiplier::Served(2.0), Multiplier::Served(0.5)];
        s.round = 3;
        assert_eq!(s.bids(&[1.0, 2.0]).unwrap(), vec![ExtReal::Finite(2.0), ExtReal::Finite(1.0)]);
        s.multipliers[1] = Multiplier::Unserved;
        assert_eq!(s.bids(&[3.0, 0.5]).unwrap(), vec![ExtReal::Finite(6.0), ExtReal::Infinite]);
    }

    #[test]
    fn three_round_hand_trace() {
        let v = vs(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let mut s = PaceState::new(ones(2), Variant::Unconstrained).unwrap();
        let w: Vec<_> = v.rows().map(|r| s.advance(r).unwrap().winner.unwrap()).collect();
        assert_eq!(w, vec![0, 1, 0]);
        assert_eq!(s.utilities(), &[2.0, 1.0]);
        assert_eq!(s.multipliers(), &[Multiplier::Served(1.5), Multiplier::Served(3.0)]);
    }

    #[test]
    fn unit_first_round_matches_on_ties() {
        let v = vs(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let opts = RunOptions {
            first_round: FirstRound::UnitMultipliers,
            ..Default::default()
        };
        let tr = run_with(&v, &ones(2), &Variant::Unconstrained, &opts).unwrap();
        assert_eq!(tr.winners().unwrap(), &[0, 1, 0]);
        // Under unit multipliers round 1 goes to the larger raw value.
        let v = vs(&[&[1.0, 2.0]]);
        let tr = run_with(&v, &ones(2), &Variant::Unconstrained, &opts).unwrap();
        assert_eq!(tr.winners().unwrap(), &[1]);
        let tr = run(&v, &ones(2), &Variant::Unconstrained, &[]).unwrap();
        assert_eq!(tr.winners().unwrap(), &[0]);
    }

    #[test]
    fn all_zero_round_goes_to_first_agent() {
        let mut s = PaceState::new(ones(3), Variant::Unconstrained).unwrap();
        let out = s.advance(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(out.winner, Some(0));
        assert_eq!(out.utilities, vec![0.0; 3]);
        assert_eq!(s.multipliers()[0], Multiplier::Unserved);
    }

    #[test]
    fn unserved_winner_spends_infinity() {
        let mut s = PaceState::new(ones(2), Variant::Unconstrained).unwrap();
        let out = s.advance(&[1.0, 1.0]).unwrap();
        assert_eq!(out.expenditure, vec![ExtReal::Infinite, ExtReal::Finite(0.0)]);
        let out = s.advance(&[1.0, 1.0]).unwrap();
        assert_eq!(out.winner, Some(1));
        let out = s.advance(&[1.0, 1.0]).unwrap();
        // β₁ = B/ū = 1/(1/2) = 2
        assert_eq!(out.expenditure[0], ExtReal::Finite(2.0));
    }

    #[test]
    fn seeded_first_step() {
        let xi = 0.25;
        let b = AgentWeights::new(vec![1.0, 2.0]).unwrap();
        let s = PaceState::new(b, Variant::Seeded { xi }).unwrap();
        let (next, out) = s.step(&[1.0, 0.0]).unwrap();
        assert_eq!(out.winner, Some(0));
        assert_eq!(next.tracked_average(), &[1.0 + xi, xi]);
        assert_eq!(
            next.multipliers(),
            &[Multiplier::Served(1.0 / (1.0 + xi)), Multiplier::Served(2.0 / xi)]
        );
        assert_eq!(s.round(), 0);
    }

    #[test]
    fn constrained_failure_example() {
        let r2 = 2.0;
        let c = 0.5f64.min(1.0 / r2);
        let rows: Vec<Vec<f64>> = vec![vec![c, c]; 50];
        let v = ValueSequence::from_rows(&rows).unwrap();
        let variant = Variant::Constrained {
            lows: vec![0.1, 0.1],
            highs: vec![3.0, r2],
        };
        let tr = run(&v, &ones(2), &variant, &[]).unwrap();
        assert!(tr.winners().unwrap().iter().all(|&w| w == 0));
        assert_eq!(tr.utilities, vec![50.0 * c, 0.0]);
        assert!(tr
            .multipliers
            .iter()
            .all(|m| *m == Multiplier::Served(r2)));
    }

    #[test]
    fn proportional_splits_equally() {
        let v = vs(&[&[1.0, 2.0], &[3.0, 0.0]]);
        let tr = run(&v, &ones(2), &Variant::Proportional, &[]).unwrap();
        assert_eq!(tr.utilities, vec![2.0, 1.0]);
        assert_eq!(tr.allocation.row(1), vec![0.5, 0.5]);
        assert!(tr.spend.is_empty());
    }

    #[test]
    fn set_aside_single_item() {
        let v = vs(&[&[1.0, 1.0]]);
        let variant = Variant::SetAside {
            monopolistic: Some(vec![1.0, 1.0]),
        };
        let tr = run(&v, &ones(2), &variant, &[]).unwrap();
        assert_eq!(tr.allocation.row(0), vec![0.75, 0.25]);
        assert_eq!(tr.utilities, vec![0.75, 0.25]);
    }

    #[test]
    fn greedy_uses_log_increment() {
        // U = (1, 4): log(1+2/1) > log(1+4/4)
        let mut s = PaceState::new(ones(2), Variant::OneStepGreedy).unwrap();
        s.advance(&[1.0, 0.0]).unwrap();
        s.advance(&[0.0, 4.0]).unwrap();
        assert_eq!(s.decide(&[2.0, 4.0]), Some(0));
        assert_eq!(s.decide(&[0.5, 4.0]), Some(1));
    }

    #[test]
    fn checkpoints_record_state() {
        let v = vs(&[&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]]);
        let tr = run(&v, &ones(2), &Variant::Unconstrained, &[2, 9]).unwrap();
        let taus: Vec<_> = tr.checkpoints.iter().map(|c| c.tau).collect();
        assert_eq!(taus, vec![2, 4]);
        assert_eq!(tr.checkpoints[0].averages, vec![0.5, 0.5]);
        assert_eq!(tr.checkpoints[0].infinite_spends, vec![1, 1]);
        let csv = tr.to_csv();
        assert!(csv.starts_with("tau,avg_1,avg_2,beta_1,beta_2,spend_1,spend_2\n2,0.5,0.5,2.0,2.0,inf,inf\n"));
    }

    #[test]
    fn restrict_examples() {
        let v = vs(&[&[1.0, 0.5, 0.2], &[0.1, 0.1, 1.0], &[0.3, 0.9, 0.0], &[0.2, 0.2, 0.2], &[0.0, 0.0, 1.0]]);
        let b = ones(3);
        let tr = run(&v, &b, &Variant::Unconstrained, &[]).unwrap();
        assert_eq!(restrict_instance(&v, &tr, &[0, 1, 2]).unwrap(), v);
        let w = tr.winners().unwrap().to_vec();
        let sub = restrict_instance(&v, &tr, &[1, 0]).unwrap();
        let kept: Vec<usize> = (0..5).filter(|&k| w[k] != 2).collect();
        assert_eq!(sub.horizon(), kept.len());
        assert_eq!(sub.agents(), 2);
        assert!(restrict_instance(&v, &tr, &[]).is_err());
    }

    #[test]
    fn variant_spec_parsing() {
        let s: VariantSpec = "seeded,xi=0.5".parse().unwrap();
        assert_eq!(s.build(&ones(2)).unwrap(), Variant::Seeded { xi: 0.5 });
        let c: VariantSpec = "constrained,delta0=1".parse().unwrap();
        match c.build(&ones(2)).unwrap() {
            Variant::Constrained { lows, highs } => {
                assert_eq!(lows, vec![0.5, 0.5]);
                assert_eq!(highs, vec![2.0, 2.0]);
            }
            other => panic!("{other:?}"),
        }
        assert!("bogus".parse::<VariantSpec>().is_err());
        assert!("seeded,xi".parse::<VariantSpec>().is_err());
        assert!("seeded,xi=-1".parse::<VariantSpec>().unwrap().build(&ones(2)).is_err());
        assert!("seeded,x=1".parse::<VariantSpec>().is_err());
        assert!("pace;xi=1".parse::<VariantSpec>().is_err());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let mut s = PaceState::new(ones(2), Variant::Unconstrained).unwrap();
        assert!(matches!(s.advance(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }
}
