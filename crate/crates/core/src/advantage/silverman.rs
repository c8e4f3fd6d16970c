//! Silverman's critical-bandwidth test for multimodality.
//!
//! Kernel density estimates are evaluated on a fixed grid by linear binning followed by a
//! discrete convolution with the Gaussian kernel, so each mode count costs
//! `O(grid · kernel width)` independent of the sample size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_SAMPLES: usize = 50;
const MIN_BOOTSTRAP: usize = 100;
/// Kernel support in bandwidths; `exp(-32)` is far below anything that moves a mode.
const KERNEL_REACH: f64 = 8.0;
const BISECTION_REL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilvermanConfig {
    /// Null hypothesis: at most this many modes.
    pub modes: usize,
    pub bootstrap: usize,
    pub seed: u64,
    pub grid: usize,
}

impl Default for SilvermanConfig {
    fn default() -> Self {
        Self {
            modes: 1,
            bootstrap: 500,
            seed: 7,
            grid: 512,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SilvermanResult {
    pub p_value: f64,
    pub h_crit: f64,
    /// Bootstrap replicates showing more than `modes` modes at `h_crit`.
    pub exceedances: usize,
    pub bootstrap: usize,
}

/// SplitMix64 finalizer; replicate `i` of a run seeded with `seed` uses
/// `mix(seed ^ mix(i + 1))`, so replicates are independent of scheduling order.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    mix(seed ^ mix(replicate.wrapping_add(1)))
}

/// Number of local maxima of the Gaussian KDE of `x` with bandwidth `h`, evaluated on `grid`
/// points spanning `[min − 3h, max + 3h]`.
pub fn count_modes(x: &[f64], h: f64, grid: usize) -> usize {
    let density = binned_kde(x, h, grid);
    modes_of(&density)
}

fn binned_kde(x: &[f64], h: f64, grid: usize) -> Vec<f64> {
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in x {
        min = min.min(v);
        max = max.max(v);
    }
    let lo = min - 3.0 * h;
    let step = (max + 3.0 * h - lo) / (grid - 1) as f64;

    let mut weights = vec![0.0; grid];
    for &v in x {
        let pos = (v - lo) / step;
        let j = (pos.floor() as usize).min(grid - 2);
        let frac = pos - j as f64;
        weights[j] += 1.0 - frac;
        weights[j + 1] += frac;
    }

    let reach = ((KERNEL_REACH * h / step).ceil() as usize).min(grid - 1);
    let kernel: Vec<f64> = (0..=reach)
        .map(|d| {
            let z = d as f64 * step / h;
            (-0.5 * z * z).exp()
        })
        .collect();

    (0..grid)
        .map(|i| {
            let a = i.saturating_sub(reach);
            let b = (i + reach).min(grid - 1);
            (a..=b).map(|j| weights[j] * kernel[i.abs_diff(j)]).sum()
        })
        .collect()
}

/// Counts rises followed by falls; flat runs (differences below a relative floor) are skipped
/// so a plateau at the top counts once.
fn modes_of(f: &[f64]) -> usize {
    let peak = f.iter().cloned().fold(0.0, f64::max);
    let floor = peak * 1e-12;
    let mut last = 0i8;
    let mut modes = 0;
    for w in f.windows(2) {
        let d = w[1] - w[0];
        let s = if d > floor {
            1
        } else if d < -floor {
            -1
        } else {
            0
        };
        if s == 0 {
            continue;
        }
        if s < 0 && last > 0 {
            modes += 1;
        }
        last = s;
    }
    if last > 0 {
        // Still rising at the right edge.
        modes += 1;
    }
    modes
}

/// Smallest bandwidth whose KDE has at most `modes` modes, by geometric bisection to a
/// relative width of `1e-3`.
pub(crate) fn critical_bandwidth(x: &[f64], modes: usize, grid: usize) -> f64 {
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in x {
        min = min.min(v);
        max = max.max(v);
    }
    let mut hi = max - min;
    for _ in 0..64 {
        if count_modes(x, hi, grid) <= modes {
            break;
        }
        hi *= 2.0;
    }
    let mut lo = hi * 1e-6;
    if count_modes(x, lo, grid) <= modes {
        return lo;
    }
    while hi - lo > BISECTION_REL * hi {
        let mid = (lo * hi).sqrt();
        if count_modes(x, mid, grid) <= modes {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Silverman (1981) bootstrap test of `H0: at most cfg.modes modes`.
///
/// Resamples are drawn from the KDE at `h_crit` and shrunk by `(1 + h_crit²/s²)^{-1/2}` about
/// the sample mean so they keep the sample variance. The p-value is the fraction of
/// replicates whose KDE at `h_crit` has more than `cfg.modes` modes.
pub fn silverman_test(x: &[f64], cfg: &SilvermanConfig) -> Result<SilvermanResult> {
    if x.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            n: x.len(),
            min: MIN_SAMPLES,
        });
    }
    if cfg.bootstrap < MIN_BOOTSTRAP {
        return Err(Error::InvalidArgument(format!(
            "bootstrap count {} below minimum {MIN_BOOTSTRAP}",
            cfg.bootstrap
        )));
    }
    if cfg.grid < 3 || cfg.modes == 0 {
        return Err(Error::InvalidArgument(
            "Silverman test needs grid ≥ 3 and a mode budget ≥ 1".into(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("samples".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }

    let h = critical_bandwidth(x, cfg.modes, cfg.grid);
    let shrink = (1.0 + h * h / var).sqrt().recip();
    let exceedances = (0..cfg.bootstrap as u64)
        .into_par_iter()
        .filter(|&b| {
            let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(cfg.seed, b));
            let y: Vec<f64> = (0..x.len())
                .map(|_| {
                    let pick = x[rng.random_range(0..x.len())];
                    let eps: f64 = rng.sample(StandardNormal);
                    mean + (pick - mean + h * eps) * shrink
                })
                .collect();
            count_modes(&y, h, cfg.grid) > cfg.modes
        })
        .count();
    Ok(SilvermanResult {
        p_value: exceedances as f64 / cfg.bootstrap as f64,
        h_crit: h,
        exceedances,
        bootstrap: cfg.bootstrap,
    })
}
