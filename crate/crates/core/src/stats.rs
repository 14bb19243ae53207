//! Reliability and inference statistics: Cronbach's alpha, one-way
//! repeated-measures ANOVA with Greenhouse-Geisser correction, and t tests.
//!
//! Distribution tails go through the regularized incomplete beta function.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance (n - 1 denominator). NaN for fewer than two values.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
}

/// Upper tail `P(F > f)` of the F distribution.
pub fn f_upper_tail(f: f64, df1: f64, df2: f64) -> f64 {
    if !(f > 0.0) {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    let x = df2 / (df2 + df1 * f);
    beta_reg(df2 / 2.0, df1 / 2.0, x).clamp(0.0, 1.0)
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// Subjects by conditions, complete cases only.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedMeasures {
    n: usize,
    k: usize,
    data: Vec<f64>,
}

impl RepeatedMeasures {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if n < 2 || k < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 subjects and 2 conditions, got {n}x{k}"
            )));
        }
        let mut data = Vec::with_capacity(n * k);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(Error::InsufficientData(format!(
                    "row {i} has {} conditions, expected {k}",
                    r.len()
                )));
            }
            if let Some(v) = r.iter().find(|v| !v.is_finite()) {
                return Err(Error::invalid("cell", "is not finite", v));
            }
            data.extend_from_slice(r);
        }
        Ok(RepeatedMeasures { n, k, data })
    }

    /// Listwise deletion: rows with any missing or non-finite cell are dropped.
    pub fn from_incomplete(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let complete: Vec<Vec<f64>> = rows
            .iter()
            .filter_map(|r| r.iter().map(|c| c.filter(|v| v.is_finite())).collect())
            .collect();
        Self::new(&complete)
    }

    pub fn subjects(&self) -> usize {
        self.n
    }

    pub fn conditions(&self) -> usize {
        self.k
    }

    pub fn get(&self, subject: usize, condition: usize) -> f64 {
        self.data[subject * self.k + condition]
    }

    pub fn row(&self, subject: usize) -> &[f64] {
        &self.data[subject * self.k..(subject + 1) * self.k]
    }

    pub fn column(&self, condition: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, condition)).collect()
    }

    /// Sample covariance matrix of the conditions, row-major k x k.
    pub fn covariance(&self) -> Vec<f64> {
        let (n, k) = (self.n, self.k);
        let means: Vec<f64> = (0..k).map(|j| mean(&self.column(j))).collect();
        let mut cov = vec![0.0; k * k];
        for a in 0..k {
            for b in a..k {
                let s: f64 = (0..n)
                    .map(|i| (self.get(i, a) - means[a]) * (self.get(i, b) - means[b]))
                    .sum::<f64>()
                    / (n - 1) as f64;
                cov[a * k + b] = s;
                cov[b * k + a] = s;
            }
        }
        cov
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CronbachAlpha {
    pub alpha: f64,
    /// Feldt interval at the requested level.
    pub ci: Option<(f64, f64)>,
}

/// Feldt confidence interval for alpha from `n` subjects and `k` items.
pub fn feldt_interval(alpha: f64, n: usize, k: usize, level: f64) -> (f64, f64) {
    let df1 = (n - 1) as f64;
    let df2 = ((n - 1) * (k - 1)) as f64;
    let f = FisherSnedecor::new(df1, df2).expect("positive degrees of freedom");
    let tail = (1.0 - level) / 2.0;
    let lower = 1.0 - (1.0 - alpha) * f.inverse_cdf(1.0 - tail);
    let upper = 1.0 - (1.0 - alpha) * f.inverse_cdf(tail);
    (lower, upper)
}

/// Internal consistency across conditions. `ci_level` e.g. 0.95.
pub fn cronbach_alpha(m: &RepeatedMeasures, ci_level: Option<f64>) -> Result<CronbachAlpha> {
    let k = m.k as f64;
    let item_var: f64 = (0..m.k).map(|j| variance(&m.column(j))).sum();
    let totals: Vec<f64> = (0..m.n).map(|i| m.row(i).iter().sum()).collect();
    let total_var = variance(&totals);
    if !(total_var > 0.0) {
        return Err(Error::Degenerate("total score variance is zero".into()));
    }
    let alpha = k / (k - 1.0) * (1.0 - item_var / total_var);
    let ci = ci_level.map(|level| feldt_interval(alpha, m.n, m.k, level));
    Ok(CronbachAlpha { alpha, ci })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SphericityCorrection {
    None,
    #[default]
    GreenhouseGeisser,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmAnova {
    pub f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p: f64,
    /// Greenhouse-Geisser epsilon; always reported, applied only when requested.
    pub epsilon: f64,
    pub ss_conditions: f64,
    pub ss_subjects: f64,
    pub ss_error: f64,
}

/// Greenhouse-Geisser epsilon from the double-centered covariance matrix,
/// clamped to its analytic range `[1/(k-1), 1]`.
pub fn greenhouse_geisser_epsilon(m: &RepeatedMeasures) -> f64 {
    let k = m.k;
    let cov = m.covariance();
    let row_means: Vec<f64> = (0..k).map(|i| cov[i * k..(i + 1) * k].iter().sum::<f64>() / k as f64).collect();
    let grand = row_means.iter().sum::<f64>() / k as f64;
    let mut trace = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..k {
        for j in 0..k {
            // Covariance is symmetric, so column means equal row means.
            let c = cov[i * k + j] - row_means[i] - row_means[j] + grand;
            sum_sq += c * c;
            if i == j {
                trace += c;
            }
        }
    }
    let lower = 1.0 / (k - 1) as f64;
    if !(sum_sq > 0.0) {
        return 1.0;
    }
    (trace * trace / ((k - 1) as f64 * sum_sq)).clamp(lower, 1.0)
}

/// One-way within-subjects ANOVA.
pub fn rm_anova(m: &RepeatedMeasures, correction: SphericityCorrection) -> Result<RmAnova> {
    let (n, k) = (m.n, m.k);
    let grand = mean(&m.data);
    let ss_total: f64 = m.data.iter().map(|v| (v - grand).powi(2)).sum();
    let ss_subjects: f64 = (0..n)
        .map(|i| k as f64 * (mean(m.row(i)) - grand).powi(2))
        .sum();
    let ss_conditions: f64 = (0..k)
        .map(|j| n as f64 * (mean(&m.column(j)) - grand).powi(2))
        .sum();
    let ss_error = (ss_total - ss_subjects - ss_conditions).max(0.0);

    let epsilon = greenhouse_geisser_epsilon(m);
    let scale = match correction {
        SphericityCorrection::None => 1.0,
        SphericityCorrection::GreenhouseGeisser => epsilon,
    };
    let df1 = (k - 1) as f64 * scale;
    let df2 = ((k - 1) * (n - 1)) as f64 * scale;

    let tiny = 1e-12 * ss_total.max(f64::MIN_POSITIVE);
    if ss_conditions <= tiny {
        return Ok(RmAnova {
            f: 0.0,
            df1,
            df2,
            p: 1.0,
            epsilon,
            ss_conditions,
            ss_subjects,
            ss_error,
        });
    }
    if ss_error <= tiny {
        return Err(Error::Degenerate("error mean square is zero".into()));
    }
    let ms_cond = ss_conditions / (k - 1) as f64;
    let ms_err = ss_error / ((k - 1) * (n - 1)) as f64;
    let f = ms_cond / ms_err;
    Ok(RmAnova {
        f,
        df1,
        df2,
        p: f_upper_tail(f, df1, df2),
        epsilon,
        ss_conditions,
        ss_subjects,
        ss_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedT {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// Paired-samples t test on `x - y`.
pub fn paired_t(x: &[f64], y: &[f64]) -> Result<PairedT> {
    if x.len() != y.len() {
        return Err(Error::InsufficientData(format!(
            "paired samples differ in length ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientData("paired t needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let df = (n - 1) as f64;
    if d.iter().all(|v| *v == 0.0) {
        return Ok(PairedT { t: 0.0, df, p: 1.0 });
    }
    let sd = variance(&d).sqrt();
    if !(sd > 0.0) {
        return Err(Error::Degenerate("differences have zero variance".into()));
    }
    let t = mean(&d) / (sd / (n as f64).sqrt());
    Ok(PairedT {
        t,
        df,
        p: t_two_sided_p(t, df),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoSampleT {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    /// Cohen's d with the pooled standard deviation.
    pub cohens_d: f64,
    pub welch: bool,
}

/// Independent-samples t test, Student (pooled) or Welch.
pub fn two_sample_t(x: &[f64], y: &[f64], welch: bool) -> Result<TwoSampleT> {
    let (n1, n2) = (x.len(), y.len());
    if n1 < 2 || n2 < 2 {
        return Err(Error::InsufficientData("each sample needs at least 2 values".into()));
    }
    let (m1, m2) = (mean(x), mean(y));
    let (v1, v2) = (variance(x), variance(y));
    let (f1, f2) = (n1 as f64, n2 as f64);
    let pooled_var = ((f1 - 1.0) * v1 + (f2 - 1.0) * v2) / (f1 + f2 - 2.0);
    if !(pooled_var > 0.0) {
        return Err(Error::Degenerate("pooled variance is zero".into()));
    }
    let sp = pooled_var.sqrt();
    let diff = m1 - m2;
    let (t, df) = if welch {
        let (a, b) = (v1 / f1, v2 / f2);
        let se = (a + b).sqrt();
        let df = (a + b).powi(2) / (a * a / (f1 - 1.0) + b * b / (f2 - 1.0));
        (diff / se, df)
    } else {
        (diff / (sp * (1.0 / f1 + 1.0 / f2).sqrt()), f1 + f2 - 2.0)
    };
    Ok(TwoSampleT {
        t,
        df,
        p: t_two_sided_p(t, df),
        cohens_d: diff / sp,
        welch,
    })
}
