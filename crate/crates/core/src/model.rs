//! Shared domain types: observations, connection and total-effect matrices,
//! causal orders and signed pairwise hypotheses.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lingam::LingamEstimate;

/// Observations with one row per variable and one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (m, n) = values.shape();
        if m < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 variables, got {m}"
            )));
        }
        if n < m {
            return Err(Error::InvalidData(format!(
                "need at least as many samples as variables ({n} < {m})"
            )));
        }
        if names.len() != m {
            return Err(Error::InvalidData(format!(
                "{} names for {m} variables",
                names.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value for variable {} in sample {}",
                names[pos % m],
                pos / m + 1
            )));
        }
        Ok(Self { values, names })
    }

    /// Names variables `x1..xm`.
    pub fn with_default_names(values: DMatrix<f64>) -> Result<Self> {
        let names = default_names(values.nrows());
        Self::new(values, names)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn nvars(&self) -> usize {
        self.values.nrows()
    }

    pub fn nsamples(&self) -> usize {
        self.values.ncols()
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

pub fn default_names(m: usize) -> Vec<String> {
    (1..=m).map(|i| format!("x{i}")).collect()
}

/// Direct effects: `b[(i, j)]` is the effect of `x_j` on `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionMatrix(DMatrix<f64>);

impl ConnectionMatrix {
    pub fn new(b: DMatrix<f64>) -> Result<Self> {
        if !b.is_square() {
            return Err(Error::InvalidArgument(format!(
                "connection matrix must be square, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if b.nrows() < 2 {
            return Err(Error::InvalidArgument("need at least 2 variables".into()));
        }
        if let Some(i) = (0..b.nrows()).find(|&i| b[(i, i)] != 0.0) {
            return Err(Error::InvalidArgument(format!(
                "diagonal entry {i} is nonzero ({})",
                b[(i, i)]
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "connection matrix has non-finite entries".into(),
            ));
        }
        Ok(Self(b))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument(
                "connection matrix rows must have equal length m".into(),
            ));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    pub fn zeros(m: usize) -> Self {
        Self(DMatrix::zeros(m, m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, effect: usize, cause: usize) -> f64 {
        self.0[(effect, cause)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// True when the nonzero pattern has no directed cycle.
    pub fn is_acyclic(&self) -> bool {
        let m = self.dim();
        let mut remaining: Vec<usize> = (0..m).collect();
        while !remaining.is_empty() {
            // a variable with no incoming edge from the remaining set
            let Some(pos) = remaining
                .iter()
                .position(|&i| remaining.iter().all(|&j| self.0[(i, j)] == 0.0))
            else {
                return false;
            };
            remaining.remove(pos);
        }
        true
    }

    /// Relabels variables: entry `(k, l)` of the result is `b[(order[k], order[l])]`.
    pub fn permuted(&self, order: &[usize]) -> ConnectionMatrix {
        let m = self.dim();
        ConnectionMatrix(DMatrix::from_fn(m, m, |k, l| self.0[(order[k], order[l])]))
    }
}

/// `(I - B)^-1`; entry `(j, i)` is the total effect of `x_i` on `x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalEffectMatrix(DMatrix<f64>);

impl TotalEffectMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

const INVERSE_RESIDUAL_TOL: f64 = 1e-10;

/// Inverts `I - B` by LU decomposition with partial pivoting.
pub fn total_effects(b: &ConnectionMatrix) -> Result<TotalEffectMatrix> {
    let m = b.dim();
    let i_minus_b = DMatrix::<f64>::identity(m, m) - b.matrix();
    let a = i_minus_b
        .clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix("I - B is not invertible".into()))?;
    let residual = (&a * &i_minus_b - DMatrix::<f64>::identity(m, m)).amax();
    if !residual.is_finite() || residual >= INVERSE_RESIDUAL_TOL {
        return Err(Error::SingularMatrix(format!(
            "inverse of I - B has residual {residual:.3e}"
        )));
    }
    Ok(TotalEffectMatrix(a))
}

/// A permutation of the variables; `order()[k]` is the variable at causal position `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CausalOrder {
    order: Vec<usize>,
}

impl CausalOrder {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let m = order.len();
        let mut seen = vec![false; m];
        for &v in &order {
            if v >= m || std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidArgument(format!(
                    "{order:?} is not a permutation"
                )));
            }
        }
        Ok(Self { order })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            order: (0..m).collect(),
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Position of variable `var` in the order, `k(var)`.
    pub fn position(&self, var: usize) -> usize {
        self.order
            .iter()
            .position(|&v| v == var)
            .expect("variable index out of range")
    }

    /// `positions()[v]` is `k(v)`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.order.len()];
        for (k, &v) in self.order.iter().enumerate() {
            pos[v] = k;
        }
        pos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Sign {
    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
        }
    }

    pub fn parse(s: &str) -> Option<Sign> {
        match s.trim() {
            "+" | "pos" | "positive" => Some(Sign::Positive),
            "-" | "neg" | "negative" => Some(Sign::Negative),
            _ => None,
        }
    }

    pub fn matches(self, value: f64) -> bool {
        match self {
            Sign::Positive => value > 0.0,
            Sign::Negative => value < 0.0,
        }
    }
}

/// `x_effect` is directly caused by `x_cause` with the given coefficient sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HypothesisId {
    pub effect: usize,
    pub cause: usize,
    pub sign: Sign,
}

impl HypothesisId {
    pub fn new(effect: usize, cause: usize, sign: Sign) -> Result<Self> {
        if effect == cause {
            return Err(Error::InvalidArgument(format!(
                "hypothesis needs distinct variables, got {effect} twice"
            )));
        }
        Ok(Self {
            effect,
            cause,
            sign,
        })
    }

    /// Label such as `x2<-x1:+`.
    pub fn label(&self, names: &[String]) -> String {
        format!(
            "{}<-{}:{}",
            names[self.effect],
            names[self.cause],
            self.sign.symbol()
        )
    }

    /// Parses a label produced by [`HypothesisId::label`].
    pub fn parse_label(label: &str, names: &[String]) -> Option<Self> {
        let (pair, sign) = label.rsplit_once(':')?;
        let (effect, cause) = pair.split_once("<-")?;
        let idx = |s: &str| names.iter().position(|n| n == s);
        Self::new(idx(effect)?, idx(cause)?, Sign::parse(sign)?).ok()
    }
}

impl fmt::Display for HypothesisId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "H[{},{}]{}",
            self.effect + 1,
            self.cause + 1,
            self.sign.symbol()
        )
    }
}

/// All `2·m·(m-1)` signed pairwise hypotheses, effect-major, positive first.
pub fn all_hypotheses(m: usize) -> Vec<HypothesisId> {
    let mut out = Vec::with_capacity(2 * m * m.saturating_sub(1));
    for effect in 0..m {
        for cause in (0..m).filter(|&c| c != effect) {
            for sign in [Sign::Positive, Sign::Negative] {
                out.push(HypothesisId {
                    effect,
                    cause,
                    sign,
                });
            }
        }
    }
    out
}

/// 1 when the estimate orders `cause` before `effect` and the estimated
/// coefficient has the hypothesised sign. A coefficient of exactly zero
/// matches neither sign.
pub fn hypothesis_indicator(est: &LingamEstimate, h: &HypothesisId) -> bool {
    indicator_from_parts(&est.order.positions(), &est.b_hat, h)
}

pub(crate) fn indicator_from_parts(
    positions: &[usize],
    b_hat: &ConnectionMatrix,
    h: &HypothesisId,
) -> bool {
    positions[h.cause] < positions[h.effect] && h.sign.matches(b_hat.get(h.effect, h.cause))
}
