//! Percentile bootstrap for thresholds and threshold differences.

use rand_distr::{Binomial, Distribution};

use super::fit::{fit_logistic, threshold, FitOptions};
use super::{PsychError, PsychometricData};
use crate::exec::{map_indexed, ExecMode};
use crate::rng::{derive_seed, rng_from_seed, stream, SimRng};

pub const MIN_RESAMPLES: usize = 100;
/// Largest tolerated share of degenerate resamples.
pub const MAX_FAILED_SHARE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdEstimate {
    pub level_at_criterion: f64,
    pub criterion: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DifferenceEstimate {
    /// `variant - baseline`.
    pub difference: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl DifferenceEstimate {
    pub fn excludes_zero(&self) -> bool {
        self.ci_high < 0.0 || self.ci_low > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapOptions {
    pub n_boot: usize,
    pub seed: u64,
    pub mode: ExecMode,
}

/// Draws each level's count from Binomial(trials, observed rate).
pub fn resample(data: &PsychometricData, rng: &mut SimRng) -> PsychometricData {
    let n = data.trials_per_level as u64;
    let counts = data
        .detect_counts
        .iter()
        .map(|&k| {
            let p = k as f64 / n as f64;
            Binomial::new(n, p).expect("rate in [0, 1]").sample(rng) as u32
        })
        .collect();
    PsychometricData {
        detect_counts: counts,
        ..data.clone()
    }
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn percentile_ci(mut values: Vec<f64>, total: usize) -> Result<(f64, f64), PsychError> {
    let failed = total - values.len();
    if failed as f64 > MAX_FAILED_SHARE * total as f64 {
        return Err(PsychError::Unstable { failed, total });
    }
    values.sort_by(f64::total_cmp);
    Ok((quantile(&values, 0.025), quantile(&values, 0.975)))
}

fn check_n_boot(n_boot: usize) -> Result<(), PsychError> {
    if n_boot < MIN_RESAMPLES {
        return Err(PsychError::TooFewResamples(n_boot));
    }
    Ok(())
}

fn resampled_threshold(
    data: &PsychometricData,
    criterion: f64,
    fit_opts: &FitOptions,
    rng: &mut SimRng,
) -> Option<f64> {
    let r = resample(data, rng);
    let fit = fit_logistic(&r, fit_opts).ok()?;
    threshold(&fit, criterion).ok()
}

/// Point threshold from the original fit with a 95% percentile interval.
pub fn bootstrap_threshold(
    data: &PsychometricData,
    criterion: f64,
    fit_opts: &FitOptions,
    boot: &BootstrapOptions,
) -> Result<ThresholdEstimate, PsychError> {
    check_n_boot(boot.n_boot)?;
    let fit = fit_logistic(data, fit_opts)?;
    let point = threshold(&fit, criterion)?;
    let values: Vec<f64> = map_indexed(boot.n_boot, boot.mode, |i| {
        let mut rng = rng_from_seed(derive_seed(boot.seed, &[stream::BOOTSTRAP, i as u64]));
        resampled_threshold(data, criterion, fit_opts, &mut rng)
    })
    .into_iter()
    .flatten()
    .collect();
    let (lo, hi) = percentile_ci(values, boot.n_boot)?;
    Ok(ThresholdEstimate {
        level_at_criterion: point,
        criterion,
        ci_low: lo.min(point),
        ci_high: hi.max(point),
    })
}

/// Bootstrap interval for `threshold(variant) - threshold(baseline)`, both
/// datasets resampled independently in each replicate.
pub fn bootstrap_difference(
    baseline: &PsychometricData,
    variant: &PsychometricData,
    criterion: f64,
    fit_opts: &FitOptions,
    boot: &BootstrapOptions,
) -> Result<DifferenceEstimate, PsychError> {
    check_n_boot(boot.n_boot)?;
    let point = threshold(&fit_logistic(variant, fit_opts)?, criterion)?
        - threshold(&fit_logistic(baseline, fit_opts)?, criterion)?;
    let values: Vec<f64> = map_indexed(boot.n_boot, boot.mode, |i| {
        let mut rng = rng_from_seed(derive_seed(boot.seed, &[stream::BOOTSTRAP, 0xd1ff, i as u64]));
        let b = resampled_threshold(baseline, criterion, fit_opts, &mut rng)?;
        let v = resampled_threshold(variant, criterion, fit_opts, &mut rng)?;
        Some(v - b)
    })
    .into_iter()
    .flatten()
    .collect();
    let (lo, hi) = percentile_ci(values, boot.n_boot)?;
    Ok(DifferenceEstimate {
        difference: point,
        ci_low: lo.min(point),
        ci_high: hi.max(point),
    })
}
