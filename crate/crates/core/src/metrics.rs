//! Fairness and efficiency metrics for online allocations.

use serde::{Deserialize, Serialize};

use crate::dynamics::RunTrace;
use crate::eg::PrefixSolution;
use crate::error::{Error, Result};
use crate::model::{AgentWeights, Allocation, ExtReal, ValueSequence};

/// Trajectory denominators below this are treated as flagged.
pub const FLAG_EPS: f64 = 1e-12;

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, got: b });
    }
    Ok(())
}

/// `max{u_i^γ - ū_i, 0}` per agent.
pub fn regret(avg: &[f64], hindsight: &[f64]) -> Result<Vec<f64>> {
    same_len(hindsight.len(), avg.len())?;
    Ok(avg.iter().zip(hindsight).map(|(u, h)| (h - u).max(0.0)).collect())
}

/// `max_k ū_ik/B_k - ū_i/B_i` with `ū_ik = ⟨v_i, x_k⟩ / t`; the max includes
/// `k = i`, so entries are nonnegative.
pub fn additive_envy(v: &ValueSequence, x: &Allocation, b: &AgentWeights) -> Result<Vec<f64>> {
    same_len(v.agents(), b.len())?;
    let cross = x.cross_utilities(v)?;
    let t = v.horizon() as f64;
    let w = b.as_slice();
    Ok((0..w.len())
        .map(|i| {
            let own = cross[i][i] / t / w[i];
            (0..w.len()).map(|k| cross[i][k] / t / w[k]).fold(own, f64::max) - own
        })
        .collect())
}

/// `max_{k≠i} (B_i/B_k) ū_ik / ū_i`. Infinite when `ū_i = 0`; zero for a
/// single agent.
pub fn multiplicative_envy(v: &ValueSequence, x: &Allocation, b: &AgentWeights) -> Result<Vec<ExtReal>> {
    same_len(v.agents(), b.len())?;
    let cross = x.cross_utilities(v)?;
    Ok(multiplicative_envy_from_cross(&cross, b))
}

fn multiplicative_envy_from_cross(cross: &[Vec<f64>], b: &AgentWeights) -> Vec<ExtReal> {
    let n = b.len();
    (0..n)
        .map(|i| {
            if n == 1 {
                return ExtReal::Finite(0.0);
            }
            if cross[i][i] <= 0.0 {
                return ExtReal::Infinite;
            }
            let m = (0..n)
                .filter(|&k| k != i)
                .map(|k| b[i] / b[k] * cross[i][k] / cross[i][i])
                .fold(0.0, f64::max);
            ExtReal::Finite(m)
        })
        .collect()
}

/// `Π_i U_i^{B_i/‖B‖₁}`.
pub fn nash_welfare(u: &[f64], b: &AgentWeights) -> Result<f64> {
    same_len(b.len(), u.len())?;
    let total = b.total();
    Ok(u.iter()
        .zip(b.as_slice())
        .map(|(u, w)| w / total * u.ln())
        .sum::<f64>()
        .exp())
}

/// `Π_i (U_i^γ / U_i)^{B_i/‖B‖₁}`; infinite if the algorithm leaves an agent
/// with zero utility that the benchmark serves.
pub fn competitive_ratio(u_alg: &[f64], u_hind: &[f64], b: &AgentWeights) -> Result<ExtReal> {
    same_len(b.len(), u_alg.len())?;
    same_len(b.len(), u_hind.len())?;
    let total = b.total();
    let mut log = 0.0;
    for i in 0..b.len() {
        if u_alg[i] <= 0.0 {
            if u_hind[i] > 0.0 {
                return Ok(ExtReal::Infinite);
            }
            continue;
        }
        if u_hind[i] > 0.0 {
            log += b[i] / total * (u_hind[i] / u_alg[i]).ln();
        } else {
            return Ok(ExtReal::Finite(0.0));
        }
    }
    Ok(ExtReal::Finite(log.exp()))
}

fn positive_utilities(u: &[f64]) -> Result<()> {
    if let Some(i) = u.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Undefined(format!("agent {} has zero utility", i + 1)));
    }
    Ok(())
}

/// `sup_Ũ Σ_i (B_i/‖B‖₁) Ũ_i / U_i`, attained by giving each item to
/// `argmax_i B_i v_i^τ / U_i`.
pub fn utility_ratio_r(v: &ValueSequence, u_alg: &[f64], b: &AgentWeights) -> Result<f64> {
    same_len(v.agents(), u_alg.len())?;
    same_len(v.agents(), b.len())?;
    positive_utilities(u_alg)?;
    let total = b.total();
    let coef: Vec<f64> = (0..b.len()).map(|i| b[i] / (total * u_alg[i])).collect();
    Ok(v.rows()
        .map(|r| r.iter().zip(&coef).map(|(v, c)| v * c).fold(0.0, f64::max))
        .sum())
}

/// `sup_Ũ Σ_i B_i (Ũ_i + ξ) / (U_i + ξ)` with unnormalized weights.
pub fn utility_ratio_seeded(v: &ValueSequence, u_alg: &[f64], b: &AgentWeights, xi: f64) -> Result<f64> {
    same_len(v.agents(), u_alg.len())?;
    same_len(v.agents(), b.len())?;
    if !(xi > 0.0) {
        return Err(Error::InvalidParameter(format!("seed must be positive, got {xi}")));
    }
    let coef: Vec<f64> = (0..b.len()).map(|i| b[i] / (u_alg[i] + xi)).collect();
    let base: f64 = coef.iter().map(|c| c * xi).sum();
    let items: f64 = v
        .rows()
        .map(|r| r.iter().zip(&coef).map(|(v, c)| v * c).fold(0.0, f64::max))
        .sum();
    Ok(base + items)
}

/// `‖(1/t) Σ_{τ>s} b^τ - B‖²`. Infinite if an unserved winner spent after the
/// warm-up window.
pub fn expenditure_deviation(trace: &RunTrace, b: &AgentWeights, warmup: usize) -> Result<ExtReal> {
    let t = trace.horizon;
    if warmup >= t {
        return Err(Error::InvalidParameter(format!("warm-up {warmup} must be below the horizon {t}")));
    }
    let winners = trace.winners().filter(|_| trace.spend.len() == t).ok_or_else(|| {
        Error::InvalidParameter("expenditure deviation needs a pacing trace".into())
    })?;
    same_len(trace.agents(), b.len())?;
    let mut spent = vec![0.0; b.len()];
    for tau in warmup..t {
        match trace.spend[tau] {
            Some(s) => spent[winners[tau]] += s,
            None => return Ok(ExtReal::Infinite),
        }
    }
    Ok(ExtReal::Finite(
        spent
            .iter()
            .zip(b.as_slice())
            .map(|(s, w)| (s / t as f64 - w).powi(2))
            .sum(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub tau: usize,
    /// `None` for flagged agents.
    pub agents: Vec<Option<f64>>,
    pub max: f64,
    pub mean: f64,
    pub flagged: usize,
}

/// Relative time-averaged regret `max{u*_i - ū_i, 0} / u*_i` at every
/// checkpoint shared by the trace and the prefix solutions.
pub fn relative_regret_trajectory(trace: &RunTrace, prefix: &[PrefixSolution]) -> Result<Vec<TrajectoryRow>> {
    prefix
        .iter()
        .map(|p| {
            let c = trace.checkpoint(p.tau).ok_or_else(|| {
                Error::InvalidParameter(format!("trace has no checkpoint at {}", p.tau))
            })?;
            same_len(c.averages.len(), p.utilities.len())?;
            let agents: Vec<Option<f64>> = (0..p.utilities.len())
                .map(|i| {
                    let star = p.utilities[i];
                    if p.flagged.get(i).copied().unwrap_or(false) || star < FLAG_EPS {
                        None
                    } else {
                        Some((star - c.averages[i]).max(0.0) / star)
                    }
                })
                .collect();
            let vals: Vec<f64> = agents.iter().flatten().copied().collect();
            let max = vals.iter().copied().fold(0.0, f64::max);
            let mean = if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            Ok(TrajectoryRow {
                tau: p.tau,
                flagged: agents.len() - vals.len(),
                agents,
                max,
                mean,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub utilities: Vec<f64>,
    pub hindsight_utilities: Vec<f64>,
    /// Per-agent regret on time-averaged utilities.
    pub regret: Vec<f64>,
    pub additive_envy: Vec<f64>,
    pub multiplicative_envy: Vec<ExtReal>,
    pub nash_welfare: f64,
    pub competitive_ratio: ExtReal,
    /// `None` when some agent has zero utility.
    pub utility_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility_ratio_seeded: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expenditure_deviation: Option<ExtReal>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trajectory: Vec<TrajectoryRow>,
}

impl MetricsReport {
    /// Metrics of a finished run against hindsight utilities (totals).
    /// `warmup` enables the expenditure deviation for pacing traces.
    pub fn evaluate(
        v: &ValueSequence,
        trace: &RunTrace,
        hindsight: &[f64],
        warmup: Option<usize>,
    ) -> Result<MetricsReport> {
        let b = &trace.weights;
        let t = v.horizon() as f64;
        let cross = trace.allocation.cross_utilities(v)?;
        let utilities: Vec<f64> = (0..b.len()).map(|i| cross[i][i]).collect();
        let avg: Vec<f64> = utilities.iter().map(|u| u / t).collect();
        let hind_avg: Vec<f64> = hindsight.iter().map(|u| u / t).collect();
        let utility_ratio_seeded = match &trace.variant {
            crate::dynamics::Variant::Seeded { xi } => Some(utility_ratio_seeded(v, &utilities, b, *xi)?),
            _ => None,
        };
        let expenditure_deviation = match warmup {
            Some(s) if trace.spend.len() == trace.horizon && trace.variant.is_pacing() => {
                Some(expenditure_deviation(trace, b, s)?)
            }
            _ => None,
        };
        Ok(MetricsReport {
            regret: regret(&avg, &hind_avg)?,
            additive_envy: additive_envy(v, &trace.allocation, b)?,
            multiplicative_envy: multiplicative_envy_from_cross(&cross, b),
            nash_welfare: nash_welfare(&utilities, b)?,
            competitive_ratio: competitive_ratio(&utilities, hindsight, b)?,
            utility_ratio: utility_ratio_r(v, &utilities, b).ok(),
            utility_ratio_seeded,
            expenditure_deviation,
            trajectory: Vec::new(),
            hindsight_utilities: hindsight.to_vec(),
            utilities,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
