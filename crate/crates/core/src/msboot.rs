//! Multiscale bootstrap resampling and event counting.
//!
//! A [`ScalePlan`] lists bootstrap sample sizes `n*_d` and the matching
//! scales `sigma_d^2 = n / n*_d`. [`count_events`] draws `Q` replicates at
//! every scale, fits LiNGAM to each one and counts, per signed hypothesis,
//! how many replicates support it.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lingam::{lingam_fit, IcaConfig};
use crate::model::{all_hypotheses, indicator_from_parts, DataMatrix, HypothesisId, Sign};
use crate::seed::{derive_seed, rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub n_star: usize,
    pub sigma_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalePlan {
    entries: Vec<ScaleEntry>,
    n: usize,
    replicates: usize,
}

impl ScalePlan {
    /// Plan from explicit bootstrap sample sizes; `sigma_sq` is recomputed as
    /// `n / n_star` and entries are sorted by ascending scale.
    pub fn from_sample_sizes(n: usize, n_stars: &[usize], replicates: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidScalePlan(
                "sample size must be positive".into(),
            ));
        }
        let mut sizes = n_stars.to_vec();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes.dedup();
        let entries = sizes
            .into_iter()
            .map(|n_star| ScaleEntry {
                n_star,
                sigma_sq: n as f64 / n_star as f64,
            })
            .collect();
        Self::from_entries(n, entries, replicates)
    }

    /// Plan from entries as given (e.g. read back from a count table).
    pub fn from_entries(n: usize, entries: Vec<ScaleEntry>, replicates: usize) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvalidScalePlan(format!(
                "need at least 2 distinct scales, got {}",
                entries.len()
            )));
        }
        if replicates == 0 {
            return Err(Error::InvalidScalePlan(
                "need at least one replicate per scale".into(),
            ));
        }
        for e in &entries {
            if e.n_star < 2 {
                return Err(Error::InvalidScalePlan(format!(
                    "bootstrap size {} below 2",
                    e.n_star
                )));
            }
            if !(e.sigma_sq > 0.0 && e.sigma_sq.is_finite()) {
                return Err(Error::InvalidScalePlan(format!(
                    "invalid scale {}",
                    e.sigma_sq
                )));
            }
        }
        if entries.windows(2).any(|w| w[0].sigma_sq >= w[1].sigma_sq) {
            return Err(Error::InvalidScalePlan(
                "scales must be strictly ascending".into(),
            ));
        }
        Ok(Self {
            entries,
            n,
            replicates,
        })
    }

    pub fn entries(&self) -> &[ScaleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Original sample size `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Replicates per scale `Q`.
    pub fn replicates(&self) -> usize {
        self.replicates
    }

    /// Index of the scale closest to `sigma^2 = 1` (lowest index on ties).
    pub fn unit_scale_index(&self) -> usize {
        nearest_unit_scale(self.entries.iter().map(|e| e.sigma_sq))
    }
}

pub(crate) fn nearest_unit_scale(sigma_sq: impl Iterator<Item = f64>) -> usize {
    sigma_sq
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, s)| {
            let dist = (s - 1.0).abs();
            if dist < best.1 {
                (i, dist)
            } else {
                best
            }
        })
        .0
}

/// Geometric ladder of `num_scales` scales over `[sigma_sq_min, sigma_sq_max]`
/// rounded to integer bootstrap sizes, with collisions removed.
pub fn build_scale_plan(
    n: usize,
    sigma_sq_min: f64,
    sigma_sq_max: f64,
    num_scales: usize,
    replicates: usize,
) -> Result<ScalePlan> {
    if !(sigma_sq_min > 0.0 && sigma_sq_min < sigma_sq_max && sigma_sq_max.is_finite()) {
        return Err(Error::InvalidScalePlan(format!(
            "need 0 < min < max, got [{sigma_sq_min}, {sigma_sq_max}]"
        )));
    }
    if num_scales < 2 {
        return Err(Error::InvalidScalePlan("need at least 2 scales".into()));
    }
    if (n as f64) / sigma_sq_max < 2.0 {
        return Err(Error::InvalidScalePlan(format!(
            "largest scale {sigma_sq_max} leaves fewer than 2 samples out of {n}"
        )));
    }
    let ratio = sigma_sq_max / sigma_sq_min;
    let last = (num_scales - 1) as f64;
    let sizes: Vec<usize> = (0..num_scales)
        .map(|d| {
            let target = sigma_sq_min * ratio.powf(d as f64 / last);
            ((n as f64 / target).round() as usize).max(2)
        })
        .collect();
    ScalePlan::from_sample_sizes(n, &sizes, replicates)
}

/// Draws `n_star` columns uniformly with replacement.
pub fn resample(data: &DataMatrix, n_star: usize, seed: u64) -> Result<DataMatrix> {
    let src = data.values();
    let (m, n) = src.shape();
    let mut rng = rng_for(seed, &[]);
    let mut out = DMatrix::zeros(m, n_star);
    for mut col in out.column_iter_mut() {
        col.copy_from(&src.column(rng.random_range(0..n)));
    }
    DataMatrix::new(out, data.names().to_vec())
}

/// Bootstrap event counts for every signed pairwise hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct BpCountTable {
    names: Vec<String>,
    plan: ScalePlan,
    effective_q: Vec<usize>,
    rows: Vec<HypothesisCounts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCounts {
    pub hypothesis: HypothesisId,
    /// Supporting replicates per scale, aligned with the plan.
    pub counts: Vec<usize>,
}

impl BpCountTable {
    pub fn new(
        names: Vec<String>,
        plan: ScalePlan,
        effective_q: Vec<usize>,
        rows: Vec<HypothesisCounts>,
    ) -> Result<Self> {
        let d = plan.len();
        if effective_q.len() != d {
            return Err(Error::InvalidArgument(
                "one effective replicate count per scale".into(),
            ));
        }
        for r in &rows {
            if r.counts.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "hypothesis {} has {} counts for {d} scales",
                    r.hypothesis,
                    r.counts.len()
                )));
            }
            if r.hypothesis.effect >= names.len() || r.hypothesis.cause >= names.len() {
                return Err(Error::InvalidArgument(format!(
                    "hypothesis {} out of range",
                    r.hypothesis
                )));
            }
            if let Some((c, q)) = r.counts.iter().zip(&effective_q).find(|(c, q)| c > q) {
                return Err(Error::InvalidArgument(format!(
                    "count {c} exceeds {q} replicates for {}",
                    r.hypothesis
                )));
            }
        }
        Ok(Self {
            names,
            plan,
            effective_q,
            rows,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn plan(&self) -> &ScalePlan {
        &self.plan
    }

    pub fn effective_q(&self) -> &[usize] {
        &self.effective_q
    }

    pub fn rows(&self) -> &[HypothesisCounts] {
        &self.rows
    }

    pub fn counts_for(&self, h: &HypothesisId) -> Option<&[usize]> {
        self.rows
            .iter()
            .find(|r| r.hypothesis == *h)
            .map(|r| r.counts.as_slice())
    }

    /// `(count, Q_effective, sigma^2)` per scale for one row.
    pub fn observations(&self, row: &HypothesisCounts) -> Vec<(usize, usize, f64)> {
        row.counts
            .iter()
            .zip(&self.effective_q)
            .zip(self.plan.entries())
            .map(|((&c, &q), e)| (c, q, e.sigma_sq))
            .collect()
    }

    fn records(&self) -> Vec<CountRecord> {
        let mut out = Vec::with_capacity(self.rows.len() * self.plan.len());
        for row in &self.rows {
            for (d, ((&count, &q), e)) in row
                .counts
                .iter()
                .zip(&self.effective_q)
                .zip(self.plan.entries())
                .enumerate()
            {
                out.push(CountRecord {
                    effect: self.names[row.hypothesis.effect].clone(),
                    cause: self.names[row.hypothesis.cause].clone(),
                    sign: row.hypothesis.sign,
                    scale_index: d + 1,
                    sigma_sq: e.sigma_sq,
                    n_star: e.n_star,
                    count,
                    q_effective: q,
                });
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in self.records() {
            wr.serialize(r).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = CountTableJson {
            variables: self.names.clone(),
            n: self.plan.n,
            replicates: self.plan.replicates,
            records: self.records(),
        };
        serde_json::to_string_pretty(&doc).expect("count table serializes")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(r);
        let mut records = Vec::new();
        let mut lines = Vec::new();
        for rec in rd.deserialize::<CountRecord>() {
            let rec = rec.map_err(csv_err)?;
            lines.push(records.len() + 2);
            records.push(rec);
        }
        Self::from_records(records, &lines, None, None)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: CountTableJson = serde_json::from_str(s).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        let lines: Vec<usize> = (1..=doc.records.len()).collect();
        let mut table = Self::from_records(doc.records, &lines, Some(doc.n), Some(doc.replicates))?;
        if !doc.variables.is_empty() {
            table.remap_names(doc.variables)?;
        }
        Ok(table)
    }

    fn remap_names(&mut self, names: Vec<String>) -> Result<()> {
        let lookup = |old: usize| {
            names
                .iter()
                .position(|n| *n == self.names[old])
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    message: format!(
                        "variable {} missing from the variable list",
                        self.names[old]
                    ),
                })
        };
        let mut rows = self.rows.clone();
        for r in &mut rows {
            r.hypothesis.effect = lookup(r.hypothesis.effect)?;
            r.hypothesis.cause = lookup(r.hypothesis.cause)?;
        }
        self.rows = rows;
        self.names = names;
        Ok(())
    }

    fn from_records(
        records: Vec<CountRecord>,
        lines: &[usize],
        n: Option<usize>,
        replicates: Option<usize>,
    ) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "count table has no rows".into(),
            });
        }
        let mut names: Vec<String> = Vec::new();
        let mut index_of = |name: &str| match names.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                names.push(name.to_string());
                names.len() - 1
            }
        };
        let mut scales: BTreeMap<usize, (f64, usize, usize)> = BTreeMap::new();
        let mut by_hyp: Vec<(HypothesisId, BTreeMap<usize, usize>)> = Vec::new();
        for (rec, &line) in records.iter().zip(lines) {
            let bad = |message: String| Error::Parse { line, message };
            let effect = index_of(&rec.effect);
            let cause = index_of(&rec.cause);
            let h = HypothesisId::new(effect, cause, rec.sign).map_err(|e| bad(e.to_string()))?;
            if rec.scale_index == 0 {
                return Err(bad("scale_index starts at 1".into()));
            }
            if rec.count > rec.q_effective {
                return Err(bad(format!(
                    "count {} exceeds Q_effective {}",
                    rec.count, rec.q_effective
                )));
            }
            let key = (rec.sigma_sq, rec.n_star, rec.q_effective);
            match scales.get(&rec.scale_index) {
                Some(prev) if *prev != key => {
                    return Err(bad(format!(
                        "scale {} described inconsistently across rows",
                        rec.scale_index
                    )))
                }
                Some(_) => {}
                None => {
                    scales.insert(rec.scale_index, key);
                }
            }
            let slot = match by_hyp.iter().position(|(x, _)| *x == h) {
                Some(p) => p,
                None => {
                    by_hyp.push((h, BTreeMap::new()));
                    by_hyp.len() - 1
                }
            };
            if by_hyp[slot].1.insert(rec.scale_index, rec.count).is_some() {
                return Err(bad(format!(
                    "duplicate row for {} at scale {}",
                    h, rec.scale_index
                )));
            }
        }
        let d = scales.len();
        if scales.keys().copied().ne(1..=d) {
            return Err(Error::Parse {
                line: 1,
                message: "scale indices must be 1..D without gaps".into(),
            });
        }
        let mut rows = Vec::with_capacity(by_hyp.len());
        for (h, counts) in by_hyp {
            if counts.len() != d {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("hypothesis {h} lacks some of the {d} scales"),
                });
            }
            rows.push(HypothesisCounts {
                hypothesis: h,
                counts: counts.into_values().collect(),
            });
        }
        let entries: Vec<ScaleEntry> = scales
            .values()
            .map(|&(sigma_sq, n_star, _)| ScaleEntry { n_star, sigma_sq })
            .collect();
        let effective_q: Vec<usize> = scales.values().map(|s| s.2).collect();
        let n =
            n.unwrap_or_else(|| (entries[0].sigma_sq * entries[0].n_star as f64).round() as usize);
        let replicates =
            replicates.unwrap_or_else(|| effective_q.iter().copied().max().unwrap_or(0));
        let plan =
            ScalePlan::from_entries(n, entries, replicates.max(1)).map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?;
        Self::new(names, plan, effective_q, rows).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CountRecord {
    effect: String,
    cause: String,
    sign: Sign,
    scale_index: usize,
    sigma_sq: f64,
    n_star: usize,
    count: usize,
    #[serde(rename = "Q_effective")]
    q_effective: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountTableJson {
    #[serde(default)]
    variables: Vec<String>,
    n: usize,
    replicates: usize,
    records: Vec<CountRecord>,
}

fn is_replicate_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::RankDeficient { .. }
            | Error::DegeneratePermutation
            | Error::SingularMatrix(_)
            | Error::InvalidData(_)
    )
}

/// Replicate seeds depend only on `(master_seed, scale, replicate)`.
pub fn replicate_seeds(master_seed: u64, scale: usize, replicate: usize) -> (u64, u64) {
    let path = |tag| [tag, scale as u64, replicate as u64];
    (
        derive_seed(master_seed, &path(stream::RESAMPLE)),
        derive_seed(master_seed, &path(stream::ICA)),
    )
}

/// Runs the multiscale bootstrap with the default execution mode.
pub fn count_events(
    data: &DataMatrix,
    plan: &ScalePlan,
    cfg: &IcaConfig,
    master_seed: u64,
) -> Result<BpCountTable> {
    count_events_with(data, plan, cfg, master_seed, Execution::default())
}

pub fn count_events_with(
    data: &DataMatrix,
    plan: &ScalePlan,
    cfg: &IcaConfig,
    master_seed: u64,
    exec: Execution,
) -> Result<BpCountTable> {
    cfg.validate()?;
    let m = data.nvars();
    let hyps = all_hypotheses(m);
    let q = plan.replicates();
    let d_count = plan.len();
    let outcomes = exec.map_range(d_count * q, |t| -> Result<Option<Vec<bool>>> {
        let (d, r) = (t / q, t % q);
        let (resample_seed, ica_seed) = replicate_seeds(master_seed, d, r);
        let fit = resample(data, plan.entries()[d].n_star, resample_seed)
            .and_then(|rep| lingam_fit(&rep, &cfg.with_seed(ica_seed)));
        match fit {
            Ok(est) => {
                let pos = est.order.positions();
                Ok(Some(
                    hyps.iter()
                        .map(|h| indicator_from_parts(&pos, &est.b_hat, h))
                        .collect(),
                ))
            }
            Err(e) if is_replicate_failure(&e) => Ok(None),
            Err(e) => Err(e),
        }
    });

    let mut counts = vec![vec![0usize; d_count]; hyps.len()];
    let mut effective_q = vec![0usize; d_count];
    for (t, outcome) in outcomes.into_iter().enumerate() {
        let d = t / q;
        if let Some(ind) = outcome? {
            effective_q[d] += 1;
            for (row, hit) in counts.iter_mut().zip(ind) {
                row[d] += hit as usize;
            }
        }
    }
    for (d, &eq) in effective_q.iter().enumerate() {
        if eq < q {
            log::warn!(
                "scale {}: {} of {q} replicates failed and were excluded",
                d + 1,
                q - eq
            );
        }
        if 2 * eq < q {
            return Err(Error::TooManyFailures {
                scale_index: d + 1,
                effective: eq,
                requested: q,
            });
        }
    }
    let rows = hyps
        .into_iter()
        .zip(counts)
        .map(|(hypothesis, counts)| HypothesisCounts { hypothesis, counts })
        .collect();
    BpCountTable::new(data.names().to_vec(), plan.clone(), effective_q, rows)
}
