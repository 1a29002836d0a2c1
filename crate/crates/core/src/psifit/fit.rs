//! Binomial maximum-likelihood fits of the scaling laws, model selection and
//! extrapolation to `sigma^2 = -1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::normal::{inverse_mills, log_normal_cdf, normal_cdf, normal_pdf, normal_quantile};
use super::psi::{psi_and_param_grad, psi_value, PsiKind, PsiModel};
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 500;
pub const GRADIENT_TOL: f64 = 1e-8;

/// Bootstrap outcome at one scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleObservation {
    pub count: usize,
    pub replicates: usize,
    pub sigma_sq: f64,
}

impl ScaleObservation {
    pub fn new(count: usize, replicates: usize, sigma_sq: f64) -> Self {
        Self {
            count,
            replicates,
            sigma_sq,
        }
    }
}

impl From<(usize, usize, f64)> for ScaleObservation {
    fn from((count, replicates, sigma_sq): (usize, usize, f64)) -> Self {
        Self {
            count,
            replicates,
            sigma_sq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// No replicate supported the hypothesis at any scale.
    AllZero,
    /// Every replicate supported the hypothesis at every scale.
    AllFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZDiagnostic {
    pub sigma: f64,
    /// `sigma * z_{sigma^2}` from the clipped bootstrap fraction.
    pub normalized_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiFitResult {
    pub model: PsiModel,
    pub nll: f64,
    pub aic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub saturated: Option<Saturation>,
    pub z_values: Vec<ZDiagnostic>,
}

/// `-Phi^-1(C / Q)` with the fraction clipped to `[1/(2Q), 1 - 1/(2Q)]`.
pub fn z_value(count: usize, replicates: usize) -> f64 {
    let q = replicates.max(1) as f64;
    let lo = 0.5 / q;
    let p = (count as f64 / q).clamp(lo, 1.0 - lo);
    let p = if p <= 0.0 || p >= 1.0 { 0.5 } else { p };
    -normal_quantile(p).expect("clipped fraction is inside (0, 1)")
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
}

/// Negative binomial log-likelihood of `counts` under
/// `p_d = Phi(-psi(sigma_d^2) / sigma_d)`.
pub fn nll(kind: PsiKind, beta: &[f64], obs: &[ScaleObservation]) -> f64 {
    obs.iter()
        .filter(|o| o.replicates > 0)
        .map(|o| {
            let u = psi_value(kind, beta, o.sigma_sq) / o.sigma_sq.sqrt();
            let c = o.count as f64;
            let rest = (o.replicates - o.count) as f64;
            let mut ll = ln_binomial(o.replicates, o.count);
            if c > 0.0 {
                ll += c * log_normal_cdf(-u);
            }
            if rest > 0.0 {
                ll += rest * log_normal_cdf(u);
            }
            -ll
        })
        .sum()
}

/// NLL and its analytic gradient in `beta`.
pub fn nll_and_gradient(kind: PsiKind, beta: &[f64], obs: &[ScaleObservation]) -> (f64, Vec<f64>) {
    let h = beta.len();
    let mut grad = vec![0.0; h];
    let mut dpsi = vec![0.0; h];
    let mut total = 0.0;
    for o in obs.iter().filter(|o| o.replicates > 0) {
        let sigma = o.sigma_sq.sqrt();
        let u = psi_and_param_grad(kind, beta, o.sigma_sq, &mut dpsi) / sigma;
        let c = o.count as f64;
        let rest = (o.replicates - o.count) as f64;
        let mut ll = ln_binomial(o.replicates, o.count);
        // d ll / du
        let mut dll = 0.0;
        if c > 0.0 {
            ll += c * log_normal_cdf(-u);
            dll -= c * inverse_mills(-u);
        }
        if rest > 0.0 {
            ll += rest * log_normal_cdf(u);
            dll += rest * inverse_mills(u);
        }
        total -= ll;
        for (g, d) in grad.iter_mut().zip(&dpsi) {
            *g -= dll * d / sigma;
        }
    }
    (total, grad)
}

fn bounds(kind: PsiKind, h: usize) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::NEG_INFINITY; h];
    let mut hi = vec![f64::INFINITY; h];
    if kind == PsiKind::Sing {
        lo[h - 1] = 0.0;
        hi[h - 1] = 1.0;
    }
    (lo, hi)
}

/// Weighted least squares on clipped normalized z-values with the singular
/// curvature held at `curvature`; weights are inverse delta-method variances.
fn least_squares_start(
    kind: PsiKind,
    h: usize,
    obs: &[ScaleObservation],
    curvature: f64,
) -> Option<Vec<f64>> {
    let used: Vec<&ScaleObservation> = obs.iter().filter(|o| o.replicates > 0).collect();
    let linear = match kind {
        PsiKind::Poly => h,
        PsiKind::Sing => h - 1,
    };
    let rows = used.len();
    let mut design = DMatrix::zeros(rows, linear);
    let mut target = DVector::zeros(rows);
    for (r, o) in used.iter().enumerate() {
        let sigma = o.sigma_sq.sqrt();
        let q = o.replicates as f64;
        let z = z_value(o.count, o.replicates);
        let p = normal_cdf(-z);
        let var = o.sigma_sq * p * (1.0 - p) / (q * normal_pdf(z).powi(2));
        let w = 1.0 / var.max(1e-300).sqrt();
        let den = match kind {
            PsiKind::Poly => 1.0,
            PsiKind::Sing => 1.0 + curvature * (sigma - 1.0),
        };
        let mut pw = 1.0;
        for j in 0..linear {
            design[(r, j)] = w * if j == 0 { 1.0 } else { pw / den };
            pw *= o.sigma_sq;
        }
        target[r] = w * sigma * z;
    }
    let svd = design.svd(true, true);
    let sol = svd.solve(&target, 1e-12).ok()?;
    let mut beta: Vec<f64> = sol.iter().copied().collect();
    if kind == PsiKind::Sing {
        beta.push(curvature);
    }
    beta.iter().all(|b| b.is_finite()).then_some(beta)
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn projected_gradient(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| {
            if (xi <= l && gi > 0.0) || (xi >= h && gi < 0.0) {
                0.0
            } else {
                gi
            }
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Quasi-Newton (BFGS) minimisation with bound constraints handled by
/// projection and an active set.
fn minimize<F>(fg: F, x0: Vec<f64>, lo: &[f64], hi: &[f64], stall_tol: f64) -> Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0;
    project(&mut x, lo, hi);
    let (mut f, mut g) = fg(&x);
    let mut hinv = DMatrix::<f64>::identity(n, n);
    let mut first = true;
    for it in 0..MAX_ITERATIONS {
        let pg = projected_gradient(&x, &g, lo, hi);
        let pg_norm = norm(&pg);
        if pg_norm < GRADIENT_TOL {
            return Minimum {
                x,
                f,
                iterations: it,
                converged: true,
            };
        }
        let free: Vec<usize> = (0..n)
            .filter(|&i| pg[i] != 0.0 || (x[i] > lo[i] && x[i] < hi[i]))
            .collect();
        let mut d = vec![0.0; n];
        for &i in &free {
            d[i] = -free.iter().map(|&j| hinv[(i, j)] * g[j]).sum::<f64>();
        }
        let slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        // not a descent direction (or NaN): restart from steepest descent
        if slope.is_nan() || slope >= 0.0 {
            hinv = DMatrix::identity(n, n);
            first = true;
            for &i in &free {
                d[i] = -g[i];
            }
        }
        if first {
            // unit-length first step until curvature information exists
            let scale = 1.0 / norm(&d).max(1.0);
            d.iter_mut().for_each(|v| *v *= scale);
        }
        let mut t = 1.0;
        let accepted = loop {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project(&mut xn, lo, hi);
            let (fnew, gnew) = fg(&xn);
            let decrease: f64 = g
                .iter()
                .zip(xn.iter().zip(&x))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            if fnew.is_finite() && fnew <= f + 1e-4 * decrease && decrease <= 0.0 {
                break Some((xn, fnew, gnew));
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((xn, fnew, gnew)) = accepted else {
            let converged = pg_norm < stall_tol;
            return Minimum {
                x,
                f,
                iterations: it + 1,
                converged,
            };
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if first {
                let yy: f64 = y.iter().map(|v| v * v).sum();
                hinv = DMatrix::identity(n, n) * (sy / yy);
                first = false;
            }
            let rho = 1.0 / sy;
            let sv = DVector::from_vec(s);
            let yv = DVector::from_vec(y);
            let ident = DMatrix::<f64>::identity(n, n);
            let left = &ident - &sv * yv.transpose() * rho;
            let right = &ident - &yv * sv.transpose() * rho;
            hinv = &left * &hinv * &right + &sv * sv.transpose() * rho;
        }
        let small_change = (f - fnew).abs() <= 1e-15 * (1.0 + f.abs());
        x = xn;
        f = fnew;
        g = gnew;
        if small_change {
            let pg = projected_gradient(&x, &g, lo, hi);
            if norm(&pg) < stall_tol {
                return Minimum {
                    x,
                    f,
                    iterations: it + 1,
                    converged: true,
                };
            }
        }
    }
    let pg = projected_gradient(&x, &g, lo, hi);
    let converged = norm(&pg) < GRADIENT_TOL;
    Minimum {
        x,
        f,
        iterations: MAX_ITERATIONS,
        converged,
    }
}

fn diagnostics(obs: &[ScaleObservation]) -> Vec<ZDiagnostic> {
    obs.iter()
        .filter(|o| o.replicates > 0)
        .map(|o| {
            let sigma = o.sigma_sq.sqrt();
            ZDiagnostic {
                sigma,
                normalized_z: sigma * z_value(o.count, o.replicates),
            }
        })
        .collect()
}

/// Maximum-likelihood fit of a `kind` model with `h` parameters.
pub fn fit_binomial_ml(obs: &[ScaleObservation], kind: PsiKind, h: usize) -> Result<PsiFitResult> {
    if h < kind.min_params() {
        return Err(Error::InvalidArgument(format!(
            "{kind:?} model needs h >= {}",
            kind.min_params()
        )));
    }
    let used: Vec<ScaleObservation> = obs.iter().copied().filter(|o| o.replicates > 0).collect();
    if used.len() < h {
        return Err(Error::InvalidArgument(format!(
            "{h} parameters cannot be fitted to {} usable scales",
            used.len()
        )));
    }
    if let Some(o) = used
        .iter()
        .find(|o| o.count > o.replicates || o.sigma_sq.is_nan() || o.sigma_sq <= 0.0)
    {
        return Err(Error::InvalidArgument(format!("invalid observation {o:?}")));
    }
    let z_values = diagnostics(&used);
    let saturated = if used.iter().all(|o| o.count == 0) {
        Some(Saturation::AllZero)
    } else if used.iter().all(|o| o.count == o.replicates) {
        Some(Saturation::AllFull)
    } else {
        None
    };
    if let Some(sat) = saturated {
        let mut beta = vec![0.0; h];
        if kind == PsiKind::Sing {
            beta[h - 1] = 0.0;
        }
        return Ok(PsiFitResult {
            model: PsiModel::new(kind, beta)?,
            nll: 0.0,
            aic: 2.0 * h as f64,
            converged: true,
            iterations: 0,
            saturated: Some(sat),
            z_values,
        });
    }

    let (lo, hi) = bounds(kind, h);
    let starts: Vec<Vec<f64>> = match kind {
        PsiKind::Poly => least_squares_start(kind, h, &used, 0.0)
            .into_iter()
            .collect(),
        PsiKind::Sing => [0.0, 0.25, 0.5, 0.75, 1.0]
            .iter()
            .filter_map(|&c| least_squares_start(kind, h, &used, c))
            .collect(),
    };
    let start = starts
        .into_iter()
        .map(|b| (nll(kind, &b, &used), b))
        .filter(|(f, _)| f.is_finite())
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, b)| b)
        .unwrap_or_else(|| {
            let mut b = vec![0.0; h];
            if kind == PsiKind::Sing {
                b[h - 1] = 0.5;
            }
            b
        });
    let total_q: f64 = used.iter().map(|o| o.replicates as f64).sum();
    let stall_tol = 1e-6 * (1.0 + total_q);
    let min = minimize(
        |b| nll_and_gradient(kind, b, &used),
        start,
        &lo,
        &hi,
        stall_tol,
    );
    let mut beta = min.x;
    if kind == PsiKind::Sing {
        let c = &mut beta[h - 1];
        *c = c.clamp(0.0, 1.0);
    }
    Ok(PsiFitResult {
        model: PsiModel::new(kind, beta)?,
        nll: min.f,
        aic: 2.0 * min.f + 2.0 * h as f64,
        converged: min.converged,
        iterations: min.iterations,
        saturated: None,
        z_values,
    })
}

fn kind_rank(k: PsiKind) -> u8 {
    match k {
        PsiKind::Poly => 0,
        PsiKind::Sing => 1,
    }
}

/// Converged fit with the smallest AIC; ties go to fewer parameters, then to
/// the polynomial family.
pub fn select_model(fits: &[PsiFitResult]) -> Result<&PsiFitResult> {
    fits.iter()
        .filter(|f| f.converged && f.aic.is_finite())
        .min_by(|a, b| {
            a.aic
                .total_cmp(&b.aic)
                .then(a.model.h().cmp(&b.model.h()))
                .then(kind_rank(a.model.kind).cmp(&kind_rank(b.model.kind)))
        })
        .ok_or(Error::NoConvergedFit)
}

/// `Phi(-sum_{j<h} (-2)^j / j! * psi^(j)(1))`, the `h`-term extrapolation of
/// the fitted law from `sigma^2 = 1` to `sigma^2 = -1`.
pub fn extrapolate_pvalue(best: &PsiFitResult, h: usize) -> f64 {
    match best.saturated {
        Some(Saturation::AllZero) => return 0.0,
        Some(Saturation::AllFull) => return 1.0,
        None => {}
    }
    let h = h.max(1);
    let coeffs = best.model.taylor(1.0, h - 1);
    let mut weight = 1.0;
    let mut arg = 0.0;
    for c in coeffs {
        arg += weight * c;
        weight *= -2.0;
    }
    normal_cdf(-arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(obs: &[(usize, usize, f64)], kind: PsiKind, h: usize) -> PsiFitResult {
        let obs: Vec<ScaleObservation> = obs.iter().copied().map(Into::into).collect();
        fit_binomial_ml(&obs, kind, h).unwrap()
    }

    #[test]
    fn z_values() {
        assert_eq!(z_value(500, 1000), 0.0);
        assert!((z_value(0, 1000) - 3.290_526_731_491_89).abs() < 1e-9);
        assert!((z_value(8413, 10_000) + 1.0).abs() < 1e-3);
        assert!((z_value(1000, 1000) + 3.290_526_731_491_89).abs() < 1e-9);
    }

    #[test]
    fn single_scale_reproduces_fraction() {
        let r = fit(&[(230, 1000, 1.0)], PsiKind::Poly, 1);
        assert!(r.converged);
        assert!((r.model.beta[0] + normal_quantile(0.23).unwrap()).abs() < 1e-8);
        assert!((extrapolate_pvalue(&r, 3) - 0.23).abs() < 1e-10);
        let r = fit(&[(70, 500, 4.0)], PsiKind::Poly, 1);
        assert!((r.model.beta[0] + 2.0 * normal_quantile(0.14).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn self_consistent_at_large_q() {
        let truth = PsiModel::poly(vec![1.2, 0.4]).unwrap();
        let q = 1_000_000;
        let obs: Vec<(usize, usize, f64)> = (0..13)
            .map(|d| {
                let s = 81f64.powf(d as f64 / 12.0) / 9.0;
                let p = normal_cdf(-truth.eval(s) / s.sqrt());
                ((p * q as f64).round() as usize, q, s)
            })
            .collect();
        let r = fit(&obs, PsiKind::Poly, 2);
        assert!(r.converged);
        assert!((r.model.beta[0] - 1.2).abs() < 0.01, "{:?}", r.model);
        assert!((r.model.beta[1] - 0.4).abs() < 0.01, "{:?}", r.model);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let obs: Vec<ScaleObservation> = [
            (12, 100, 0.25),
            (30, 100, 1.0),
            (41, 90, 2.0),
            (44, 100, 5.0),
        ]
        .into_iter()
        .map(Into::into)
        .collect();
        for (kind, beta) in [
            (PsiKind::Poly, vec![0.3, 0.2, -0.05]),
            (PsiKind::Sing, vec![0.1, 0.5, 0.4]),
        ] {
            let (_, g) = nll_and_gradient(kind, &beta, &obs);
            for k in 0..beta.len() {
                let at = |x: f64| {
                    let mut b = beta.clone();
                    b[k] = x;
                    nll(kind, &b, &obs)
                };
                let e = 1e-6;
                let fd = (at(beta[k] + e) - at(beta[k] - e)) / (2.0 * e);
                assert!(
                    (fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0),
                    "{kind:?} {k}: {fd} {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn saturated_tables_short_circuit() {
        let r = fit(
            &[(0, 100, 0.5), (0, 100, 1.0), (0, 100, 2.0)],
            PsiKind::Poly,
            2,
        );
        assert_eq!(r.saturated, Some(Saturation::AllZero));
        assert_eq!(extrapolate_pvalue(&r, 3), 0.0);
        let r = fit(&[(100, 100, 0.5), (80, 80, 1.0)], PsiKind::Poly, 1);
        assert_eq!(r.saturated, Some(Saturation::AllFull));
        assert_eq!(extrapolate_pvalue(&r, 3), 1.0);
    }

    #[test]
    fn zero_replicate_scales_are_dropped() {
        let a = fit(
            &[(30, 100, 0.5), (0, 0, 1.0), (45, 100, 2.0)],
            PsiKind::Poly,
            2,
        );
        let b = fit(&[(30, 100, 0.5), (45, 100, 2.0)], PsiKind::Poly, 2);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn too_few_scales() {
        let obs = [
            ScaleObservation::new(3, 10, 1.0),
            ScaleObservation::new(4, 10, 2.0),
        ];
        assert!(fit_binomial_ml(&obs, PsiKind::Poly, 3).is_err());
        assert!(fit_binomial_ml(&obs, PsiKind::Sing, 2).is_err());
    }

    fn fake(kind: PsiKind, beta: Vec<f64>, nll: f64, converged: bool) -> PsiFitResult {
        let h = beta.len();
        PsiFitResult {
            model: PsiModel::new(kind, beta).unwrap(),
            nll,
            aic: 2.0 * nll + 2.0 * h as f64,
            converged,
            iterations: 1,
            saturated: None,
            z_values: Vec::new(),
        }
    }

    #[test]
    fn aic_selection_and_ties() {
        let p1 = fake(PsiKind::Poly, vec![0.0], 50.0, true);
        let p2 = fake(PsiKind::Poly, vec![0.0, 0.0], 49.5, true);
        assert_eq!(p1.aic, 102.0);
        assert_eq!(p2.aic, 103.0);
        assert_eq!(select_model(&[p1.clone(), p2.clone()]).unwrap(), &p1);

        let p2 = fake(PsiKind::Poly, vec![0.0, 0.0], 40.0, true);
        let s3 = fake(PsiKind::Sing, vec![0.0, 0.0, 0.0], 40.0, true);
        assert_eq!(select_model(&[s3.clone(), p2.clone()]).unwrap(), &p2);

        // exact AIC tie between equal-size models goes to poly
        let p3 = fake(PsiKind::Poly, vec![0.0, 0.0, 0.0], 40.0, true);
        assert_eq!(select_model(&[s3.clone(), p3.clone()]).unwrap(), &p3);

        let bad = fake(PsiKind::Poly, vec![0.0], 1.0, false);
        assert_eq!(select_model(&[bad.clone(), p2.clone()]).unwrap(), &p2);
        assert_eq!(select_model(&[bad]).unwrap_err(), Error::NoConvergedFit);
    }

    #[test]
    fn extrapolation_examples() {
        let r = fake(PsiKind::Poly, vec![1.0, 0.3], 0.0, true);
        assert!((extrapolate_pvalue(&r, 2) - normal_cdf(-0.7)).abs() < 1e-15);
        assert!((extrapolate_pvalue(&r, 2) - 0.2420).abs() < 1e-4);
        let c = fake(PsiKind::Poly, vec![1.645], 0.0, true);
        for h in 1..5 {
            assert!((extrapolate_pvalue(&c, h) - 0.05).abs() < 1e-4);
        }
        // h = 1 is the model-smoothed bootstrap probability at unit scale
        let s = fake(PsiKind::Sing, vec![0.2, 0.8, 0.6], 0.0, true);
        assert!((extrapolate_pvalue(&s, 1) - normal_cdf(-s.model.eval(1.0))).abs() < 1e-15);
    }

    #[test]
    fn curved_law_prefers_curved_model() {
        let truth = PsiModel::poly(vec![0.5, 0.6, -0.08]).unwrap();
        let q = 200_000;
        let obs: Vec<(usize, usize, f64)> = (0..13)
            .map(|d| {
                let s = 81f64.powf(d as f64 / 12.0) / 9.0;
                let p = normal_cdf(-truth.eval(s) / s.sqrt());
                ((p * q as f64).round() as usize, q, s)
            })
            .collect();
        let fits: Vec<PsiFitResult> = [
            (PsiKind::Poly, 1),
            (PsiKind::Poly, 2),
            (PsiKind::Poly, 3),
            (PsiKind::Sing, 3),
        ]
        .into_iter()
        .map(|(k, h)| fit(&obs, k, h))
        .collect();
        let best = select_model(&fits).unwrap();
        assert!(best.model.h() == 3, "{}", best.model);
    }
}
