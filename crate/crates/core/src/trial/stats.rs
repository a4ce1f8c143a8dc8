//! Descriptive statistics and the two-sided paired t-test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("a paired t-test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("samples contain a non-finite value")]
    NonFinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1).
    pub sd: f64,
    /// Standard error of the mean, sd / √n.
    pub sem: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = if n == 0 { f64::NAN } else { xs.iter().sum::<f64>() / n as f64 };
        let sd =
            if n < 2 { f64::NAN } else { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
        Self { n, mean, sd, sem: sd / (n as f64).sqrt() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub n: usize,
    /// Mean of a − b.
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p_value: f64,
    /// All differences equal: t is 0 or ±∞ and p is 1 or 0.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a` against `b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFewPairs(a.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let s = Summary::of(&d);
    let df = (s.n - 1) as f64;
    let degenerate = d.iter().all(|&x| x == d[0]);
    let (t, p_value) = if degenerate {
        if s.mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(s.mean), 0.0)
        }
    } else {
        let t = s.mean / s.sem;
        (t, student_t_two_sided(t, df))
    };
    Ok(TTest { n: s.n, mean_diff: s.mean, sd_diff: s.sd, t, df, p_value, degenerate })
}

/// P(|T| ≥ |t|) for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// I_x(a, b) via the continued fraction (modified Lentz).
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Closed-form two-sided p for df = 1 (Cauchy) and df = 3.
    fn p_df1(t: f64) -> f64 {
        1.0 - 2.0 / PI * t.abs().atan()
    }

    fn p_df3(t: f64) -> f64 {
        let t = t.abs();
        let s3 = 3f64.sqrt();
        let cdf = 0.5 + (t / (s3 * (1.0 + t * t / 3.0)) + (t / s3).atan()) / PI;
        2.0 * (1.0 - cdf)
    }

    /// df = 2: P(|T| ≥ t) = 1 − t / √(2 + t²).
    fn p_df2(t: f64) -> f64 {
        1.0 - t.abs() / (2.0 + t * t).sqrt()
    }

    #[test]
    fn closed_form_oracles() {
        for &t in &[0.0, 0.1, 0.5, 1.0, 2.0, 3.0, 7.5, 40.0] {
            assert!((student_t_two_sided(t, 1.0) - p_df1(t)).abs() < 1e-12, "df1 t={t}");
            assert!((student_t_two_sided(t, 2.0) - p_df2(t)).abs() < 1e-12, "df2 t={t}");
            assert!((student_t_two_sided(t, 3.0) - p_df3(t)).abs() < 1e-12, "df3 t={t}");
        }
        assert!((student_t_two_sided(3.0, 3.0) - 0.057_668_885_622_437).abs() < 1e-12);
    }

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut f = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - f.ln()).abs() < 1e-12 * f.ln().max(1.0), "n={n}");
            f *= n as f64;
        }
        assert!((ln_gamma(0.5) - PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn degenerate_samples() {
        let r = paired_t_test(&[2.0, 3.0, 4.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(r.degenerate && r.t == f64::INFINITY && r.p_value == 0.0);
        let r = paired_t_test(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!(r.degenerate && r.t == 0.0 && r.p_value == 1.0);
        assert_eq!(paired_t_test(&[1.0], &[2.0]), Err(StatsError::TooFewPairs(1)));
        assert_eq!(paired_t_test(&[1.0, 2.0], &[2.0]), Err(StatsError::LengthMismatch(2, 1)));
    }

    #[test]
    fn summary_sd_and_sem() {
        let s = Summary::of(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(s.mean, 5.0);
        assert!((s.sd - (32.0f64 / 7.0).sqrt()).abs() < 1e-14);
        assert!((s.sem - s.sd / 8f64.sqrt()).abs() < 1e-15);
    }
}
