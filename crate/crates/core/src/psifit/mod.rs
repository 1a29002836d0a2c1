//! Multiscale-bootstrap p-values from bootstrap count tables.
//!
//! For each hypothesis the candidate scaling laws are fitted to the counts by
//! binomial maximum likelihood, the best one is chosen by AIC and its Taylor
//! expansion at `sigma^2 = 1` is extrapolated to `sigma^2 = -1`.

mod fit;
mod normal;
mod psi;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use fit::{
    extrapolate_pvalue, fit_binomial_ml, nll, nll_and_gradient, select_model, z_value,
    PsiFitResult, Saturation, ScaleObservation, ZDiagnostic, GRADIENT_TOL, MAX_ITERATIONS,
};
pub use normal::{inverse_mills, log_normal_cdf, normal_cdf, normal_pdf, normal_quantile};
pub use psi::{PsiKind, PsiModel};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::{HypothesisId, Sign};
use crate::msboot::{nearest_unit_scale, BpCountTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of Taylor terms in the extrapolated p-value.
    pub h: usize,
    /// Candidate `(family, parameter count)` pairs.
    pub candidates: Vec<(PsiKind, usize)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            h: 3,
            candidates: vec![
                (PsiKind::Poly, 1),
                (PsiKind::Poly, 2),
                (PsiKind::Poly, 3),
                (PsiKind::Sing, 3),
            ],
        }
    }
}

impl FitOptions {
    pub fn with_h(h: usize) -> Self {
        Self {
            h,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisPvalue {
    pub hypothesis: HypothesisId,
    pub label: String,
    /// Bootstrap fraction at the scale nearest `sigma^2 = 1`.
    pub p_bp: f64,
    pub p_mb: f64,
    pub best_model: PsiModel,
    pub best_aic: f64,
    pub saturated: Option<Saturation>,
    pub all_candidate_fits: Vec<PsiFitResult>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PvalueReport {
    pub variables: Vec<String>,
    pub h: usize,
    /// Scale used for the ordinary bootstrap probability.
    pub bp_scale_index: usize,
    pub bp_sigma_sq: f64,
    pub hypotheses: Vec<HypothesisPvalue>,
}

/// Both p-values for one hypothesis together with the fits behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleFit {
    pub p_bp: f64,
    pub p_mb: f64,
    pub best: PsiFitResult,
    pub fits: Vec<PsiFitResult>,
    pub warnings: Vec<String>,
}

/// p-values for one hypothesis from its per-scale observations.
pub fn pvalues_for(obs: &[ScaleObservation], opts: &FitOptions) -> Result<ScaleFit> {
    let usable = obs.iter().filter(|o| o.replicates > 0).count();
    let unit = nearest_unit_scale(obs.iter().map(|o| o.sigma_sq));
    let o = obs
        .get(unit)
        .ok_or_else(|| Error::InvalidArgument("no scales".into()))?;
    let p_bp = if o.replicates > 0 {
        o.count as f64 / o.replicates as f64
    } else {
        f64::NAN
    };

    let mut warnings = Vec::new();
    let fits: Vec<PsiFitResult> = opts
        .candidates
        .iter()
        .filter(|(k, h)| *h >= k.min_params() && *h <= usable)
        .map(|&(k, h)| fit_binomial_ml(obs, k, h))
        .collect::<Result<_>>()?;
    if fits.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no candidate model fits {usable} usable scales"
        )));
    }
    let best = match select_model(&fits) {
        Ok(b) => b.clone(),
        Err(_) => {
            warnings.push("no candidate converged; using the lowest-AIC fit".to_string());
            fits.iter()
                .filter(|f| f.aic.is_finite())
                .min_by(|a, b| a.aic.total_cmp(&b.aic))
                .unwrap_or(&fits[0])
                .clone()
        }
    };
    if let Some(sat) = best.saturated {
        warnings.push(format!(
            "saturated counts ({sat:?}); p-value set without fitting"
        ));
    }
    let p_mb = extrapolate_pvalue(&best, opts.h);
    Ok(ScaleFit {
        p_bp,
        p_mb,
        best,
        fits,
        warnings,
    })
}

/// Fits every hypothesis of `table`.
pub fn analyze_table(table: &BpCountTable, opts: &FitOptions) -> Result<PvalueReport> {
    analyze_table_with(table, opts, Execution::default())
}

pub fn analyze_table_with(
    table: &BpCountTable,
    opts: &FitOptions,
    exec: Execution,
) -> Result<PvalueReport> {
    if opts.h == 0 {
        return Err(Error::InvalidArgument(
            "extrapolation order h must be at least 1".into(),
        ));
    }
    let names = table.names();
    let rows = table.rows();
    let results = exec.map_range(rows.len(), |i| {
        let row = &rows[i];
        let obs: Vec<ScaleObservation> = table
            .observations(row)
            .into_iter()
            .map(Into::into)
            .collect();
        pvalues_for(&obs, opts).map(
            |ScaleFit {
                 p_bp,
                 p_mb,
                 best,
                 fits,
                 warnings,
             }| {
                for w in &warnings {
                    log::warn!("{}: {w}", row.hypothesis.label(names));
                }
                HypothesisPvalue {
                    hypothesis: row.hypothesis,
                    label: row.hypothesis.label(names),
                    p_bp,
                    p_mb,
                    best_aic: best.aic,
                    saturated: best.saturated,
                    best_model: best.model,
                    all_candidate_fits: fits,
                    warnings,
                }
            },
        )
    });
    let hypotheses = results.into_iter().collect::<Result<Vec<_>>>()?;
    let unit = table.plan().unit_scale_index();
    Ok(PvalueReport {
        variables: names.to_vec(),
        h: opts.h,
        bp_scale_index: unit + 1,
        bp_sigma_sq: table.plan().entries()[unit].sigma_sq,
        hypotheses,
    })
}

#[derive(Debug, Serialize)]
struct ReportRecord<'a> {
    effect: &'a str,
    cause: &'a str,
    sign: Sign,
    p_bp: f64,
    p_mb: f64,
    model_kind: String,
    aic: f64,
}

impl PvalueReport {
    pub fn get(&self, h: &HypothesisId) -> Option<&HypothesisPvalue> {
        self.hypotheses.iter().find(|x| x.hypothesis == *h)
    }

    /// CSV with columns `effect,cause,sign,p_bp,p_mb,model_kind,aic`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for hp in &self.hypotheses {
            let model_kind = match hp.saturated {
                Some(_) => "saturated".to_string(),
                None => hp.best_model.to_string(),
            };
            wr.serialize(ReportRecord {
                effect: &self.variables[hp.hypothesis.effect],
                cause: &self.variables[hp.hypothesis.cause],
                sign: hp.hypothesis.sign,
                p_bp: hp.p_bp,
                p_mb: hp.p_mb,
                model_kind,
                aic: hp.best_aic,
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
