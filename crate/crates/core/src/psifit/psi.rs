//! Scaling-law models for the normalized bootstrap z-value as a function of
//! the scale `s = sigma^2`, and their derivatives in `s`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiKind {
    /// `sum_j beta_j s^j`, `j < h`.
    Poly,
    /// `beta_0 + sum_{j=1}^{h-2} beta_j s^j / (1 + beta_{h-1} (sqrt(s) - 1))`.
    Sing,
}

impl PsiKind {
    pub fn min_params(self) -> usize {
        match self {
            PsiKind::Poly => 1,
            PsiKind::Sing => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiModel {
    pub kind: PsiKind,
    pub beta: Vec<f64>,
}

impl fmt::Display for PsiModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.kind {
            PsiKind::Poly => "poly",
            PsiKind::Sing => "sing",
        };
        write!(f, "{name}{}", self.beta.len())
    }
}

impl PsiModel {
    pub fn new(kind: PsiKind, beta: Vec<f64>) -> Result<Self> {
        let h = beta.len();
        if h < kind.min_params() {
            return Err(Error::InvalidArgument(format!(
                "{kind:?} model needs at least {} parameters, got {h}",
                kind.min_params()
            )));
        }
        if kind == PsiKind::Sing && !(0.0..=1.0).contains(&beta[h - 1]) {
            return Err(Error::InvalidArgument(format!(
                "singular model curvature {} outside [0, 1]",
                beta[h - 1]
            )));
        }
        Ok(Self { kind, beta })
    }

    pub fn poly(beta: Vec<f64>) -> Result<Self> {
        Self::new(PsiKind::Poly, beta)
    }

    pub fn sing(beta: Vec<f64>) -> Result<Self> {
        Self::new(PsiKind::Sing, beta)
    }

    /// Number of parameters `h`.
    pub fn h(&self) -> usize {
        self.beta.len()
    }

    pub fn eval(&self, sigma_sq: f64) -> f64 {
        psi_value(self.kind, &self.beta, sigma_sq)
    }

    /// `[psi, dpsi/ds, ..., d^j_max psi / ds^j_max]` at `s = sigma_sq`.
    pub fn derivs(&self, sigma_sq: f64, j_max: usize) -> Vec<f64> {
        let mut fact = 1.0;
        self.taylor(sigma_sq, j_max)
            .into_iter()
            .enumerate()
            .map(|(j, c)| {
                if j > 0 {
                    fact *= j as f64;
                }
                c * fact
            })
            .collect()
    }

    /// Taylor coefficients `psi^(j)(s0) / j!` for `j = 0..=order`.
    pub fn taylor(&self, s0: f64, order: usize) -> Vec<f64> {
        let s = Jet::variable(s0, order);
        let one = Jet::constant(1.0, order);
        match self.kind {
            PsiKind::Poly => {
                // Horner in jets
                let mut acc = Jet::constant(0.0, order);
                for &b in self.beta.iter().rev() {
                    acc = acc.mul(&s).add(&Jet::constant(b, order));
                }
                acc.0
            }
            PsiKind::Sing => {
                let h = self.h();
                let c = self.beta[h - 1];
                let mut num = Jet::constant(0.0, order);
                for &b in self.beta[1..h - 1].iter().rev() {
                    num = num.add(&Jet::constant(b, order)).mul(&s);
                }
                let den = one.add(&s.sqrt().add(&Jet::constant(-1.0, order)).scale(c));
                num.div(&den).add(&Jet::constant(self.beta[0], order)).0
            }
        }
    }
}

pub(crate) fn psi_value(kind: PsiKind, beta: &[f64], s: f64) -> f64 {
    match kind {
        PsiKind::Poly => beta.iter().rev().fold(0.0, |acc, b| acc * s + b),
        PsiKind::Sing => {
            let h = beta.len();
            let num = beta[1..h - 1]
                .iter()
                .rev()
                .fold(0.0, |acc, b| (acc + b) * s);
            beta[0] + num / (1.0 + beta[h - 1] * (s.sqrt() - 1.0))
        }
    }
}

/// `psi` and its gradient with respect to `beta` at scale `s`.
pub(crate) fn psi_and_param_grad(kind: PsiKind, beta: &[f64], s: f64, grad: &mut [f64]) -> f64 {
    let h = beta.len();
    match kind {
        PsiKind::Poly => {
            let mut p = 1.0;
            for g in grad.iter_mut() {
                *g = p;
                p *= s;
            }
            psi_value(kind, beta, s)
        }
        PsiKind::Sing => {
            let sigma = s.sqrt();
            let den = 1.0 + beta[h - 1] * (sigma - 1.0);
            let mut num = 0.0;
            let mut p = s;
            grad[0] = 1.0;
            for j in 1..h - 1 {
                num += beta[j] * p;
                grad[j] = p / den;
                p *= s;
            }
            grad[h - 1] = -num * (sigma - 1.0) / (den * den);
            beta[0] + num / den
        }
    }
}

/// Truncated Taylor series `sum_k c_k t^k`.
#[derive(Debug, Clone, PartialEq)]
struct Jet(Vec<f64>);

impl Jet {
    fn constant(c: f64, order: usize) -> Self {
        let mut v = vec![0.0; order + 1];
        v[0] = c;
        Jet(v)
    }

    fn variable(x0: f64, order: usize) -> Self {
        let mut v = Self::constant(x0, order);
        if order > 0 {
            v.0[1] = 1.0;
        }
        v
    }

    fn add(&self, o: &Jet) -> Jet {
        Jet(self.0.iter().zip(&o.0).map(|(a, b)| a + b).collect())
    }

    fn scale(&self, c: f64) -> Jet {
        Jet(self.0.iter().map(|a| a * c).collect())
    }

    fn mul(&self, o: &Jet) -> Jet {
        let n = self.0.len();
        Jet((0..n)
            .map(|k| (0..=k).map(|i| self.0[i] * o.0[k - i]).sum())
            .collect())
    }

    fn div(&self, o: &Jet) -> Jet {
        let n = self.0.len();
        let mut q = vec![0.0; n];
        for k in 0..n {
            let acc: f64 = (1..=k).map(|i| o.0[i] * q[k - i]).sum();
            q[k] = (self.0[k] - acc) / o.0[0];
        }
        Jet(q)
    }

    fn sqrt(&self) -> Jet {
        let n = self.0.len();
        let mut g = vec![0.0; n];
        g[0] = self.0[0].sqrt();
        for k in 1..n {
            let acc: f64 = (1..k).map(|i| g[i] * g[k - i]).sum();
            g[k] = (self.0[k] - acc) / (2.0 * g[0]);
        }
        Jet(g)
    }
}
