use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{generate_dataset, NoiseModel};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lingam::IcaConfig;
use crate::model::{all_hypotheses, default_names, ConnectionMatrix, HypothesisId};
use crate::msboot::{build_scale_plan, count_events_with, ScalePlan};
use crate::psifit::{analyze_table_with, FitOptions};
use crate::seed::{derive_seed, stream};

/// Simulation study: generate datasets from a known model, run the full
/// multiscale bootstrap on each and collect the p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub name: String,
    /// Generator connection matrix, one row per variable.
    pub model: Vec<Vec<f64>>,
    #[serde(default)]
    pub noise: NoiseModel,
    pub n: usize,
    pub datasets: usize,
    pub scales_min: f64,
    pub scales_max: f64,
    pub num_scales: usize,
    pub replicates: usize,
    #[serde(default)]
    pub ica: IcaConfig,
    pub h: usize,
    pub alpha_grid: Vec<f64>,
    #[serde(default)]
    pub master_seed: u64,
    /// Hypothesis label (`effect<-cause:sign`) written to the CSV outputs.
    pub focus: String,
}

impl SimConfig {
    pub fn connection(&self) -> Result<ConnectionMatrix> {
        ConnectionMatrix::from_rows(&self.model)
    }

    pub fn names(&self) -> Vec<String> {
        default_names(self.model.len())
    }

    pub fn plan(&self) -> Result<ScalePlan> {
        build_scale_plan(
            self.n,
            self.scales_min,
            self.scales_max,
            self.num_scales,
            self.replicates,
        )
    }

    pub fn focus_hypothesis(&self) -> Result<HypothesisId> {
        HypothesisId::parse_label(&self.focus, &self.names()).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown focus hypothesis '{}'", self.focus))
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.connection()?;
        self.noise.validate()?;
        self.ica.validate()?;
        self.plan()?;
        self.focus_hypothesis()?;
        if self.datasets == 0 {
            return Err(Error::InvalidArgument("datasets must be at least 1".into()));
        }
        if self.n < self.model.len() {
            return Err(Error::InvalidArgument(
                "sample size below the number of variables".into(),
            ));
        }
        if self.h == 0 {
            return Err(Error::InvalidArgument("h must be at least 1".into()));
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidArgument(
                "alpha values must lie in (0, 1)".into(),
            ));
        }
        if self.alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "alpha grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PvalueRecord {
    pub dataset: usize,
    pub p_bp: f64,
    pub p_mb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RejectionPoint {
    pub alpha: f64,
    pub prob_bp: f64,
    pub prob_mb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCalibration {
    pub hypothesis: HypothesisId,
    pub label: String,
    pub records: Vec<PvalueRecord>,
    pub rejection: Vec<RejectionPoint>,
    pub ks_bp: f64,
    pub ks_mb: f64,
}

impl HypothesisCalibration {
    pub fn p_bp(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.p_bp).collect()
    }

    pub fn p_mb(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.p_mb).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub name: String,
    pub variables: Vec<String>,
    pub datasets: usize,
    pub failed_datasets: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub focus: HypothesisId,
    pub hypotheses: Vec<HypothesisCalibration>,
}

/// Empirical `Prob{p < alpha}`.
pub fn rejection_probability(p: &[f64], alpha: f64) -> f64 {
    if p.is_empty() {
        return f64::NAN;
    }
    p.iter().filter(|&&x| x < alpha).count() as f64 / p.len() as f64
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `p` and U(0, 1).
pub fn ks_distance_uniform(p: &[f64]) -> f64 {
    let mut sorted = p.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

pub fn run_experiment(cfg: &SimConfig) -> Result<CalibrationReport> {
    run_experiment_with(cfg, Execution::default())
}

pub fn run_experiment_with(cfg: &SimConfig, exec: Execution) -> Result<CalibrationReport> {
    cfg.validate()?;
    let b = cfg.connection()?;
    let plan = cfg.plan()?;
    let names = cfg.names();
    let hyps = all_hypotheses(b.dim());
    let opts = FitOptions::with_h(cfg.h);
    let done = AtomicUsize::new(0);

    let per_dataset = exec.map_range(cfg.datasets, |k| -> Result<Vec<(f64, f64)>> {
        let data_seed = derive_seed(cfg.master_seed, &[stream::DATASET, k as u64]);
        let boot_seed = derive_seed(cfg.master_seed, &[stream::BOOTSTRAP, k as u64]);
        let data = generate_dataset(&b, cfg.n, &cfg.noise, data_seed)?;
        let table = count_events_with(&data, &plan, &cfg.ica, boot_seed, exec)?;
        let report = analyze_table_with(&table, &opts, Execution::Sequential)?;
        let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
        log::info!("{}: dataset {finished}/{} finished", cfg.name, cfg.datasets);
        hyps.iter()
            .map(|h| {
                report
                    .get(h)
                    .map(|x| (x.p_bp, x.p_mb))
                    .ok_or_else(|| Error::InvalidArgument(format!("report lacks {h}")))
            })
            .collect()
    });

    let mut failed = Vec::new();
    let mut ok: Vec<(usize, Vec<(f64, f64)>)> = Vec::new();
    for (k, r) in per_dataset.into_iter().enumerate() {
        match r {
            Ok(v) => ok.push((k, v)),
            Err(e) => {
                log::warn!("dataset {k} failed: {e}");
                failed.push(k);
            }
        }
    }
    if failed.len() * 10 > cfg.datasets {
        return Err(Error::ExperimentAborted {
            failed: failed.len(),
            total: cfg.datasets,
        });
    }

    let hypotheses = hyps
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let records: Vec<PvalueRecord> = ok
                .iter()
                .map(|(k, v)| PvalueRecord {
                    dataset: *k,
                    p_bp: v[i].0,
                    p_mb: v[i].1,
                })
                .collect();
            let bp: Vec<f64> = records.iter().map(|r| r.p_bp).collect();
            let mb: Vec<f64> = records.iter().map(|r| r.p_mb).collect();
            HypothesisCalibration {
                hypothesis: h,
                label: h.label(&names),
                rejection: cfg
                    .alpha_grid
                    .iter()
                    .map(|&alpha| RejectionPoint {
                        alpha,
                        prob_bp: rejection_probability(&bp, alpha),
                        prob_mb: rejection_probability(&mb, alpha),
                    })
                    .collect(),
                ks_bp: ks_distance_uniform(&bp),
                ks_mb: ks_distance_uniform(&mb),
                records,
            }
        })
        .collect();

    Ok(CalibrationReport {
        name: cfg.name.clone(),
        variables: names,
        datasets: cfg.datasets,
        failed_datasets: failed,
        alpha_grid: cfg.alpha_grid.clone(),
        focus: cfg.focus_hypothesis()?,
        hypotheses,
    })
}

#[derive(Serialize)]
struct RawRecord<'a> {
    dataset: usize,
    hypothesis: &'a str,
    p_bp: f64,
    p_mb: f64,
}

impl CalibrationReport {
    pub fn get(&self, h: &HypothesisId) -> Option<&HypothesisCalibration> {
        self.hypotheses.iter().find(|x| x.hypothesis == *h)
    }

    pub fn focus_calibration(&self) -> &HypothesisCalibration {
        self.get(&self.focus)
            .expect("focus hypothesis is part of the report")
    }

    /// `dataset,hypothesis,p_bp,p_mb` rows for the focus hypothesis.
    pub fn write_pvalues_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let focus = self.focus_calibration();
        for r in &focus.records {
            wr.serialize(RawRecord {
                dataset: r.dataset,
                hypothesis: &focus.label,
                p_bp: r.p_bp,
                p_mb: r.p_mb,
            })
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `alpha,prob_bp,prob_mb` rows for the focus hypothesis.
    pub fn write_rejection_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.focus_calibration().rejection {
            wr.serialize(p).map_err(|e| Error::Io(e.to_string()))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration report serializes")
    }
}
