//! Moment statistics and the histogram entropy / KL estimator.

use libm::erfc;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;

use super::silverman::{silverman_test, SilvermanConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinRule {
    /// Width `2·IQR·n^(-1/3)`.
    FreedmanDiaconis,
    Fixed(usize),
}

/// Which distribution sits in the numerator of the KL log-ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(empirical ‖ matched normal)`.
    #[default]
    EmpiricalFirst,
    /// `KL(matched normal ‖ empirical)`; infinite when a bin with normal mass is empty.
    NormalFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub bins: BinRule,
    /// Bin count used when the IQR is zero.
    pub fallback_bins: usize,
    /// Upper bound on the Freedman–Diaconis bin count (heavy tails).
    pub max_bins: usize,
    pub kl_direction: KlDirection,
    pub min_samples: usize,
    pub silverman: SilvermanConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            bins: BinRule::FreedmanDiaconis,
            fallback_bins: 64,
            max_bins: 10_000,
            kl_direction: KlDirection::EmpiricalFirst,
            min_samples: 200,
            silverman: SilvermanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation (divisor `n`).
    pub sd: f64,
    /// `m₃ / m₂^{3/2}`.
    pub skewness: f64,
}

pub fn moments(x: &[f64]) -> Result<Moments> {
    if x.is_empty() {
        return Err(Error::TooFewSamples { n: 0, min: 1 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("samples".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &v in x {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    if m2 <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(Moments {
        n: x.len(),
        mean,
        sd: m2.sqrt(),
        skewness: m3 / m2.powf(1.5),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub width: f64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Probability mass per bin.
    pub fn masses(&self) -> Vec<f64> {
        let n = self.total() as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-width histogram over `[min, min + k·w]`, with `w` from the configured rule.
pub fn histogram(x: &[f64], cfg: &EstimatorConfig) -> Result<Histogram> {
    if x.len() < 2 {
        return Err(Error::TooFewSamples { n: x.len(), min: 2 });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("samples".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = sorted[0];
    let span = sorted[sorted.len() - 1] - lo;
    if span <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let (bins, width) = match cfg.bins {
        BinRule::Fixed(k) => {
            let k = k.max(1);
            (k, span / k as f64)
        }
        BinRule::FreedmanDiaconis => {
            let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
            if iqr <= 0.0 {
                let k = cfg.fallback_bins.max(1);
                (k, span / k as f64)
            } else {
                let w = 2.0 * iqr / (x.len() as f64).cbrt();
                let k = (span / w).ceil().max(1.0) as usize;
                if k > cfg.max_bins {
                    (cfg.max_bins, span / cfg.max_bins as f64)
                } else {
                    (k, w)
                }
            }
        }
    };
    let mut counts = vec![0u64; bins];
    for &v in x {
        let i = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    Ok(Histogram {
        edges,
        counts,
        width,
    })
}

/// Mass of `N(mu, sd²)` on `[a, b)`.
pub fn normal_mass(a: f64, b: f64, mu: f64, sd: f64) -> f64 {
    let za = (a - mu) / (sd * SQRT_2);
    let zb = (b - mu) / (sd * SQRT_2);
    // Difference of upper tails in the right half, of lower tails in the left half.
    let m = if za >= 0.0 {
        0.5 * (erfc(za) - erfc(zb))
    } else if zb <= 0.0 {
        0.5 * (erfc(-zb) - erfc(-za))
    } else {
        1.0 - 0.5 * erfc(-za) - 0.5 * erfc(zb)
    };
    m.max(0.0)
}

/// Differential entropy `−Σ p_i·ln(p_i / w_i)` in nats.
pub(crate) fn histogram_entropy(h: &Histogram) -> f64 {
    h.masses()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * (p / h.width).ln())
        .sum()
}

/// KL divergence between the histogram masses and the exact `N(μ, σ²)` bin masses.
pub(crate) fn histogram_kl(h: &Histogram, mu: f64, sd: f64, dir: KlDirection) -> f64 {
    let p = h.masses();
    let q: Vec<f64> = h
        .edges
        .windows(2)
        .map(|e| normal_mass(e[0], e[1], mu, sd))
        .collect();
    match dir {
        KlDirection::EmpiricalFirst => p
            .iter()
            .zip(&q)
            .filter(|(&pi, _)| pi > 0.0)
            .map(|(&pi, &qi)| pi * (pi / qi.max(f64::MIN_POSITIVE)).ln())
            .sum(),
        KlDirection::NormalFirst => q
            .iter()
            .zip(&p)
            .filter(|(&qi, _)| qi > 0.0)
            .map(|(&qi, &pi)| {
                if pi > 0.0 {
                    qi * (qi / pi).ln()
                } else {
                    f64::INFINITY
                }
            })
            .sum(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdvantageSummary {
    pub n: usize,
    pub mu: f64,
    pub sd: f64,
    pub skewness: f64,
    pub entropy_nats: f64,
    pub kl_vs_matched_normal: f64,
    pub silverman_p: f64,
    pub critical_bandwidth: f64,
    pub bins: usize,
    pub bin_width: f64,
    pub estimator_config: EstimatorConfig,
}

/// Summary statistics of an advantage sample.
pub fn summarize(samples: &[f64], cfg: &EstimatorConfig) -> Result<AdvantageSummary> {
    if samples.len() < cfg.min_samples {
        return Err(Error::TooFewSamples {
            n: samples.len(),
            min: cfg.min_samples,
        });
    }
    let m = moments(samples)?;
    let hist = histogram(samples, cfg)?;
    let entropy_nats = histogram_entropy(&hist);
    let kl = histogram_kl(&hist, m.mean, m.sd, cfg.kl_direction);
    if kl < crate::tolerances::KL_FLOOR {
        return Err(Error::InvalidArgument(format!(
            "negative KL estimate {kl:e}"
        )));
    }
    let sil = silverman_test(samples, &cfg.silverman)?;
    Ok(AdvantageSummary {
        n: m.n,
        mu: m.mean,
        sd: m.sd,
        skewness: m.skewness,
        entropy_nats,
        kl_vs_matched_normal: kl.max(0.0),
        silverman_p: sil.p_value,
        critical_bandwidth: sil.h_crit,
        bins: hist.counts.len(),
        bin_width: hist.width,
        estimator_config: cfg.clone(),
    })
}
