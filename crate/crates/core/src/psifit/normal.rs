//! Standard normal distribution function, density and quantile.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `Phi(x)`, accurate in both tails through `erfc`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `ln Phi(x)` without underflow in the lower tail.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > -35.0 {
        normal_cdf(x).ln()
    } else {
        // asymptotic expansion of the Mills ratio
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// `phi(x) / Phi(x)`, stable for large negative `x`.
pub fn inverse_mills(x: f64) -> f64 {
    if x > -35.0 {
        normal_pdf(x) / normal_cdf(x)
    } else {
        (-0.5 * x * x - LN_SQRT_2PI - log_normal_cdf(x)).exp()
    }
}

/// `Phi^-1(p)` by Wichura's AS 241 (PPND16).
// The coefficients are quoted exactly as published.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "quantile needs 0 < p < 1, got {p}"
        )));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2_509.080_928_730_122_7 * r + 33_430.575_583_588_13) * r
            + 67_265.770_927_008_7)
            * r
            + 45_921.953_931_549_87)
            * r
            + 13_731.693_765_509_461)
            * r
            + 1_971.590_950_306_551_3)
            * r
            + 133.141_667_891_784_38)
            * r)
            + 3.387_132_872_796_366_5;
        let den = (((((((5_226.495_278_852_545 * r + 28_729.085_735_721_943) * r
            + 39_307.895_800_092_71)
            * r
            + 21_213.794_301_586_596)
            * r
            + 5_394.196_021_424_751)
            * r
            + 687.187_007_492_057_9)
            * r
            + 42.313_330_701_600_91)
            * r)
            + 1.0;
        return Ok(q * num / den);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 0.015_198_666_563_616_457)
            * r
            + 0.148_103_976_427_480_08)
            * r
            + 0.689_767_334_985_100_1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 0.014_875_361_290_850_615)
            * r
            + 0.136_929_880_922_735_8)
            * r
            + 0.599_832_206_555_888)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -val } else { val })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `Phi` from the everywhere-positive series
    /// `erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!`.
    fn cdf_series(x: f64) -> f64 {
        let t = x.abs() * FRAC_1_SQRT_2;
        let mut term = t;
        let mut sum = t;
        let mut n = 0.0;
        while term > 1e-18 * sum {
            n += 1.0;
            term *= 2.0 * t * t / (2.0 * n + 1.0);
            sum += term;
        }
        let erf = 2.0 / PI.sqrt() * (-t * t).exp() * sum;
        0.5 * (1.0 + x.signum() * erf)
    }

    #[test]
    fn symmetry_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
    }

    #[test]
    fn cdf_matches_series() {
        for i in -700..=700 {
            let x = i as f64 / 100.0;
            assert!((normal_cdf(x) - cdf_series(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn quantile_inverts_series_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = normal_quantile(p).unwrap();
            assert!((cdf_series(x) - p).abs() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn round_trip_in_tails() {
        for k in 0..=160 {
            let p = 10f64.powf(-8.0 + k as f64 * 7.7 / 160.0);
            for p in [p, 1.0 - p] {
                let back = normal_cdf(normal_quantile(p).unwrap());
                assert!((back - p).abs() < 1e-9, "p = {p}");
            }
            // lower tail holds in relative terms as well
            assert!((normal_cdf(normal_quantile(p).unwrap()) / p - 1.0).abs() < 1e-12);
        }
        let deep = normal_quantile(1e-300).unwrap();
        assert!((normal_cdf(deep) / 1e-300 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quantile_domain() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn log_cdf_is_continuous_across_switch() {
        let a = log_normal_cdf(-35.0 + 1e-9);
        let b = log_normal_cdf(-35.0 - 1e-9);
        assert!((a - b).abs() < 1e-6);
        assert!((inverse_mills(-40.0) - 40.025).abs() < 0.01);
        assert!((log_normal_cdf(3.0) - normal_cdf(3.0).ln()).abs() < 1e-15);
    }
}
