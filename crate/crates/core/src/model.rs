//! Instance types shared by every other module: agent weights, the item value
//! matrix, extended reals for bids and flagged metrics, plus CSV ingestion and
//! per-agent value normalization.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real number or `+∞`. Bids of unserved agents and flagged metrics use the
/// infinite variant so that no `f64::INFINITY` ever enters arithmetic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ExtRepr", try_from = "ExtRepr")]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExtRepr {
    Num(f64),
    Word(String),
}

impl From<ExtReal> for ExtRepr {
    fn from(x: ExtReal) -> Self {
        match x {
            ExtReal::Finite(v) => ExtRepr::Num(v),
            ExtReal::Infinite => ExtRepr::Word("inf".into()),
        }
    }
}

impl TryFrom<ExtRepr> for ExtReal {
    type Error = String;
    fn try_from(r: ExtRepr) -> std::result::Result<Self, String> {
        match r {
            ExtRepr::Num(v) => Ok(ExtReal::Finite(v)),
            ExtRepr::Word(w) if w == "inf" => Ok(ExtReal::Infinite),
            ExtRepr::Word(w) => Err(format!("expected number or \"inf\", got {w:?}")),
        }
    }
}

impl ExtReal {
    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }

    /// Strictly greater, with `Infinite == Infinite`.
    pub fn gt(self, other: ExtReal) -> bool {
        match (self, other) {
            (ExtReal::Infinite, ExtReal::Finite(_)) => true,
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a > b,
            _ => false,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => f.write_str("inf"),
        }
    }
}

/// Smallest index attaining the maximum. Returns 0 for an all-zero slate.
pub fn min_argmax(scores: impl IntoIterator<Item = ExtReal>) -> usize {
    let mut best = 0;
    let mut best_score: Option<ExtReal> = None;
    for (i, s) in scores.into_iter().enumerate() {
        match best_score {
            None => {
                best_score = Some(s);
                best = i;
            }
            Some(b) if s.gt(b) => {
                best_score = Some(s);
                best = i;
            }
            _ => {}
        }
    }
    best
}

/// Agent weights (budgets). Always nonempty, positive and finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AgentWeights(Vec<f64>);

impl AgentWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInstance("no agents".into()));
        }
        for (i, &b) in weights.iter().enumerate() {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "nonpositive weight at agent {}",
                    i + 1
                )));
            }
        }
        Ok(AgentWeights(weights))
    }

    /// `n` agents of weight `1/n`.
    pub fn uniform(n: usize) -> Self {
        AgentWeights(vec![1.0 / n as f64; n.max(1)])
    }

    pub fn equal(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `B_i / ||B||_1`.
    pub fn shares(&self) -> Vec<f64> {
        let total = self.total();
        self.0.iter().map(|b| b / total).collect()
    }

    pub fn normalized(&self) -> Self {
        AgentWeights(self.shares())
    }
}

impl TryFrom<Vec<f64>> for AgentWeights {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        AgentWeights::new(v)
    }
}

impl From<AgentWeights> for Vec<f64> {
    fn from(w: AgentWeights) -> Self {
        w.0
    }
}

impl std::ops::Index<usize> for AgentWeights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// The `t × n` matrix of item values in arrival order, stored row-major.
/// Entries are nonnegative and finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueSequence {
    t: usize,
    n: usize,
    data: Vec<f64>,
}

impl ValueSequence {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::from_flat(rows.len(), n, data)
    }

    pub fn from_flat(t: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidInstance("no items".into()));
        }
        if n == 0 {
            return Err(Error::InvalidInstance("no agents".into()));
        }
        if data.len() != t * n {
            return Err(Error::InvalidInstance(format!(
                "expected {} entries for a {t}x{n} matrix, got {}",
                t * n,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidInstance(format!(
                "invalid value {} at item {}, agent {}",
                data[k],
                k / n + 1,
                k % n + 1
            )));
        }
        Ok(ValueSequence { t, n, data })
    }

    pub fn horizon(&self) -> usize {
        self.t
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    /// Values of item `tau` (0-based).
    pub fn row(&self, tau: usize) -> &[f64] {
        &self.data[tau * self.n..(tau + 1) * self.n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.n)
    }

    pub fn get(&self, tau: usize, agent: usize) -> f64 {
        self.data[tau * self.n + agent]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// Monopolistic utilities `W_i = Σ_τ v_i^τ`.
    pub fn monopolistic(&self) -> Vec<f64> {
        self.monopolistic_prefix(self.t)
    }

    pub fn monopolistic_prefix(&self, len: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        for row in self.rows().take(len) {
            for (acc, v) in w.iter_mut().zip(row) {
                *acc += v;
            }
        }
        w
    }

    /// `||v||_∞`.
    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn prefix(&self, len: usize) -> Result<ValueSequence> {
        let len = len.min(self.t);
        ValueSequence::from_flat(len, self.n, self.data[..len * self.n].to_vec())
    }

    /// Keeps the listed agents (in the given order) and the listed items.
    pub fn select(&self, agents: &[usize], items: &[usize]) -> Result<ValueSequence> {
        let mut data = Vec::with_capacity(agents.len() * items.len());
        for &tau in items {
            let row = self.row(tau);
            data.extend(agents.iter().map(|&i| row[i]));
        }
        ValueSequence::from_flat(items.len(), agents.len(), data)
    }

    pub fn scaled(&self, factors: &[f64]) -> Result<ValueSequence> {
        if factors.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: factors.len(),
            });
        }
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(k, v)| v * factors[k % self.n])
            .collect();
        ValueSequence::from_flat(self.t, self.n, data)
    }
}

/// An allocation of every item of a sequence, stored compactly by kind.
/// Rows always satisfy `Σ_i x[τ][i] ≤ 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Allocation {
    /// Whole item to one agent per round.
    Integral { agents: usize, winners: Vec<usize> },
    /// The same fractional row every round.
    Uniform { items: usize, shares: Vec<f64> },
    /// `1/(2n)` to everyone plus one half to the auction winner.
    SetAside { agents: usize, winners: Vec<usize> },
    /// Arbitrary fractional rows, row-major `t × n`.
    Dense { agents: usize, data: Vec<f64> },
}

impl Allocation {
    pub fn items(&self) -> usize {
        match self {
            Allocation::Integral { winners, .. } | Allocation::SetAside { winners, .. } => winners.len(),
            Allocation::Uniform { items, .. } => *items,
            Allocation::Dense { agents, data } => data.len() / (*agents).max(1),
        }
    }

    pub fn agents(&self) -> usize {
        match self {
            Allocation::Integral { agents, .. }
            | Allocation::SetAside { agents, .. }
            | Allocation::Dense { agents, .. } => *agents,
            Allocation::Uniform { shares, .. } => shares.len(),
        }
    }

    /// Writes row `tau` into `out` (length `n`).
    pub fn row_into(&self, tau: usize, out: &mut [f64]) {
        match self {
            Allocation::Integral { winners, .. } => {
                out.fill(0.0);
                out[winners[tau]] = 1.0;
            }
            Allocation::Uniform { shares, .. } => out.copy_from_slice(shares),
            Allocation::SetAside { agents, winners } => {
                out.fill(0.5 / *agents as f64);
                out[winners[tau]] += 0.5;
            }
            Allocation::Dense { agents, data } => {
                out.copy_from_slice(&data[tau * agents..(tau + 1) * agents])
            }
        }
    }

    pub fn row(&self, tau: usize) -> Vec<f64> {
        let mut r = vec![0.0; self.agents()];
        self.row_into(tau, &mut r);
        r
    }

    /// `cross[i][k] = ⟨v_i, x_k⟩` (totals, not time-averaged).
    pub fn cross_utilities(&self, v: &ValueSequence) -> Result<Vec<Vec<f64>>> {
        let n = v.agents();
        if self.agents() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.agents() });
        }
        if self.items() != v.horizon() {
            return Err(Error::InvalidInstance(format!(
                "allocation covers {} items, instance has {}",
                self.items(),
                v.horizon()
            )));
        }
        let mut cross = vec![vec![0.0; n]; n];
        let mut x = vec![0.0; n];
        for (tau, row) in v.rows().enumerate() {
            self.row_into(tau, &mut x);
            for (i, vi) in row.iter().enumerate() {
                if *vi == 0.0 {
                    continue;
                }
                for (k, xk) in x.iter().enumerate() {
                    cross[i][k] += vi * xk;
                }
            }
        }
        Ok(cross)
    }

    /// `⟨v_i, x_i⟩` per agent.
    pub fn utilities(&self, v: &ValueSequence) -> Result<Vec<f64>> {
        let cross = self.cross_utilities(v)?;
        Ok((0..cross.len()).map(|i| cross[i][i]).collect())
    }

    /// Nonnegative entries and `Σ_i x[τ][i] ≤ 1 + tol` for every row.
    pub fn is_feasible(&self, tol: f64) -> bool {
        let mut x = vec![0.0; self.agents()];
        (0..self.items()).all(|tau| {
            self.row_into(tau, &mut x);
            x.iter().all(|&a| a >= -tol) && x.iter().sum::<f64>() <= 1.0 + tol
        })
    }
}

/// Extremity parameter `ε ∈ (0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Extremity(pub f64);

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DimensionMismatch { item: usize, expected: usize, got: usize },
    Negative { item: usize, agent: usize },
    NotFinite { item: usize, agent: usize },
    NonpositiveWeight { agent: usize },
    ZeroAgent { agent: usize },
    Empty,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch { item, expected, got } => {
                write!(f, "item {item} has {got} values, expected {expected}")
            }
            Violation::Negative { item, agent } => {
                write!(f, "negative value at item {item}, agent {agent}")
            }
            Violation::NotFinite { item, agent } => {
                write!(f, "non-finite value at item {item}, agent {agent}")
            }
            Violation::NonpositiveWeight { agent } => {
                write!(f, "nonpositive weight at agent {agent}")
            }
            Violation::ZeroAgent { agent } => write!(f, "agent {agent} has no positive value"),
            Violation::Empty => f.write_str("empty instance"),
        }
    }
}

/// Outcome of [`validate_instance`]. Positions are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn first(&self) -> Option<&Violation> {
        self.violations.first()
    }

    pub fn into_result(self) -> Result<()> {
        match self.violations.into_iter().next() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidInstance(v.to_string())),
        }
    }
}

/// Checks raw instance data. The report lists violations in scan order.
pub fn validate_instance(rows: &[Vec<f64>], weights: &[f64]) -> ValidationReport {
    let mut violations = Vec::new();
    if rows.is_empty() || weights.is_empty() {
        violations.push(Violation::Empty);
        return ValidationReport { violations };
    }
    let n = weights.len();
    let mut positive = vec![false; n];
    for (tau, row) in rows.iter().enumerate() {
        if row.len() != n {
            violations.push(Violation::DimensionMismatch {
                item: tau + 1,
                expected: n,
                got: row.len(),
            });
            continue;
        }
        for (i, &x) in row.iter().enumerate() {
            if x.is_nan() || x.is_infinite() {
                violations.push(Violation::NotFinite {
                    item: tau + 1,
                    agent: i + 1,
                });
            } else if x < 0.0 {
                violations.push(Violation::Negative {
                    item: tau + 1,
                    agent: i + 1,
                });
            } else if x > 0.0 {
                positive[i] = true;
            }
        }
    }
    for (i, &b) in weights.iter().enumerate() {
        if !(b.is_finite() && b > 0.0) {
            violations.push(Violation::NonpositiveWeight { agent: i + 1 });
        }
    }
    for (i, p) in positive.iter().enumerate() {
        if !p {
            violations.push(Violation::ZeroAgent { agent: i + 1 });
        }
    }
    ValidationReport { violations }
}

/// Validates an already-typed instance (all-zero agents and weight count).
pub fn check_instance(v: &ValueSequence, b: &AgentWeights) -> Result<()> {
    if v.agents() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: b.len(),
            got: v.agents(),
        });
    }
    let w = v.monopolistic();
    match w.iter().position(|&x| x <= 0.0) {
        Some(i) => Err(Error::ZeroAgent { agent: i + 1 }),
        None => Ok(()),
    }
}

/// Header metadata of a CSV instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvHeader {
    pub agents: Vec<String>,
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<(ValueSequence, CsvHeader)> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file)
}

pub fn read_csv<R: Read>(reader: R) -> Result<(ValueSequence, CsvHeader)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let n = header.len();
    if n == 0 || (n == 1 && header[0].is_empty()) {
        return Err(Error::Csv {
            line: 1,
            message: "no items".into(),
        });
    }
    let mut data = Vec::new();
    let mut t = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != n {
            return Err(Error::Csv {
                line,
                message: format!("ragged row: {} fields, expected {n}", record.len()),
            });
        }
        for field in record.iter() {
            let x: f64 = field.parse().map_err(|_| Error::Csv {
                line,
                message: "malformed number".into(),
            })?;
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::Csv {
                    line,
                    message: format!("value {field} is not a nonnegative finite number"),
                });
            }
            data.push(x);
        }
        t += 1;
    }
    if t == 0 {
        return Err(Error::Csv {
            line: 2,
            message: "no items".into(),
        });
    }
    let v = ValueSequence::from_flat(t, n, data)?;
    Ok((
        v,
        CsvHeader {
            agents: header.iter().map(str::to_owned).collect(),
        },
    ))
}

/// Writes with shortest round-trip float formatting, so reading back is bit-exact.
pub fn write_csv<W: Write>(writer: W, v: &ValueSequence, header: Option<&CsvHeader>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let names: Vec<String> = match header {
        Some(h) if h.agents.len() == v.agents() => h.agents.clone(),
        _ => (1..=v.agents()).map(|i| format!("agent{i}")).collect(),
    };
    w.write_record(&names).map_err(csv_write_err)?;
    let mut buf = Vec::with_capacity(v.agents());
    for row in v.rows() {
        buf.clear();
        buf.extend(row.iter().map(|x| format!("{x:?}")));
        w.write_record(&buf).map_err(csv_write_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, v: &ValueSequence, header: Option<&CsvHeader>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv(std::io::BufWriter::new(file), v, header)
}

fn csv_write_err(e: csv::Error) -> Error {
    Error::Csv {
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    }
}

/// Scales every agent's column so that its values average to one.
pub fn normalize_values(v: &ValueSequence) -> Result<ValueSequence> {
    let w = v.monopolistic();
    if let Some(i) = w.iter().position(|&x| x <= 0.0) {
        return Err(Error::ZeroAgent { agent: i + 1 });
    }
    let t = v.horizon() as f64;
    let factors: Vec<f64> = w.iter().map(|wi| t / wi).collect();
    v.scaled(&factors)
}

/// Minimum over agents of (smallest nonzero value) / (largest value).
pub fn extremity(v: &ValueSequence) -> Result<Extremity> {
    let n = v.agents();
    let mut lo = vec![f64::MAX; n];
    let mut hi = vec![0.0f64; n];
    for row in v.rows() {
        for (i, &x) in row.iter().enumerate() {
            if x > 0.0 {
                lo[i] = lo[i].min(x);
                hi[i] = hi[i].max(x);
            }
        }
    }
    let mut eps = 1.0f64;
    for i in 0..n {
        if hi[i] <= 0.0 {
            return Err(Error::ZeroAgent { agent: i + 1 });
        }
        eps = eps.min(lo[i] / hi[i]);
    }
    Ok(Extremity(eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs(rows: &[&[f64]]) -> ValueSequence {
        ValueSequence::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn validation_examples() {
        let ok = validate_instance(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[1.0, 1.0]);
        assert!(ok.passed());

        let neg = validate_instance(&[vec![1.0, 0.0], vec![-1.0, 1.0]], &[1.0, 1.0]);
        assert_eq!(neg.first(), Some(&Violation::Negative { item: 2, agent: 1 }));

        let w = validate_instance(&[vec![1.0, 1.0]], &[1.0, 0.0]);
        assert_eq!(w.first(), Some(&Violation::NonpositiveWeight { agent: 2 }));
        assert_eq!(w.first().unwrap().to_string(), "nonpositive weight at agent 2");
    }

    #[test]
    fn validation_flags_nan_ragged_and_zero_agents() {
        let r = validate_instance(&[vec![f64::NAN, 1.0], vec![1.0]], &[1.0, 1.0]);
        assert_eq!(r.violations[0], Violation::NotFinite { item: 1, agent: 1 });
        assert!(matches!(r.violations[1], Violation::DimensionMismatch { item: 2, .. }));
        let z = validate_instance(&[vec![1.0, 0.0]], &[1.0, 1.0]);
        assert_eq!(z.first(), Some(&Violation::ZeroAgent { agent: 2 }));
    }

    #[test]
    fn csv_parse() {
        let (v, h) = read_csv("a,b\n1,0\n0,1\n".as_bytes()).unwrap();
        assert_eq!(v.horizon(), 2);
        assert_eq!(v.agents(), 2);
        assert_eq!(v.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(h.agents, vec!["a", "b"]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let e = read_csv("a,b\n1,0\n1,x\n".as_bytes()).unwrap_err();
        assert_eq!(e.to_string(), "line 3: malformed number");
        let e = read_csv("a,b\n".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("no items"));
        let e = read_csv("".as_bytes()).unwrap_err();
        assert!(e.to_string().contains("no items"));
        let e = read_csv("a,b\n1,0\n1\n".as_bytes()).unwrap_err();
        assert!(e.to_string().starts_with("line 3: ragged row"));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_values(&vs(&[&[2.0], &[0.0]])).unwrap().to_rows(), vec![vec![2.0], vec![0.0]]);
        assert_eq!(normalize_values(&vs(&[&[4.0], &[0.0]])).unwrap().to_rows(), vec![vec![2.0], vec![0.0]]);
        let n = normalize_values(&vs(&[&[1.0, 3.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(n.to_rows(), vec![vec![1.0, 1.5], vec![1.0, 0.5]]);
        let e = normalize_values(&vs(&[&[1.0, 0.0]])).unwrap_err();
        assert!(matches!(e, Error::ZeroAgent { agent: 2 }));
    }

    #[test]
    fn extremity_examples() {
        assert_eq!(extremity(&vs(&[&[1.0], &[1.0], &[0.0]])).unwrap(), Extremity(1.0));
        assert_eq!(extremity(&vs(&[&[0.1], &[1.0]])).unwrap(), Extremity(0.1));
        let two = vs(&[&[0.5, 0.2], &[1.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(extremity(&two).unwrap(), Extremity(0.2));
        assert!(extremity(&vs(&[&[0.0, 1.0]])).is_err());
    }

    #[test]
    fn min_argmax_prefers_smallest_index() {
        use ExtReal::*;
        assert_eq!(min_argmax([Finite(1.0), Finite(1.0)]), 0);
        assert_eq!(min_argmax([Finite(0.0), Infinite, Infinite]), 1);
        assert_eq!(min_argmax([Finite(0.0), Finite(0.0)]), 0);
        assert_eq!(min_argmax([Finite(1.0), Finite(2.0)]), 1);
    }

    #[test]
    fn ext_real_json() {
        let s = serde_json::to_string(&vec![ExtReal::Finite(1.5), ExtReal::Infinite]).unwrap();
        assert_eq!(s, "[1.5,\"inf\"]");
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![ExtReal::Finite(1.5), ExtReal::Infinite]);
    }
}
