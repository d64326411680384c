//! Maximum-likelihood logistic psychometric fit and its analytic inverse.

use super::{PsychError, PsychometricData};

/// `p(x) = guess + (1 - guess - lapse) / (1 + exp(-slope * (x - midpoint)))`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogisticFit {
    pub midpoint: f64,
    pub slope: f64,
    pub lapse: f64,
    pub guess: f64,
    pub log_likelihood: f64,
}

pub const MAX_GUESS_LAPSE: f64 = 0.1;
pub const MIN_SLOPE: f64 = 1e-4;
/// Default upper slope bound is this factor over the level range.
pub const SLOPE_RANGE_FACTOR: f64 = 10.0;

pub fn logistic_p(x: f64, midpoint: f64, slope: f64, guess: f64, lapse: f64) -> f64 {
    let core = 1.0 / (1.0 + (-slope * (x - midpoint)).exp());
    guess + (1.0 - guess - lapse) * core
}

impl LogisticFit {
    pub fn p(&self, x: f64) -> f64 {
        logistic_p(x, self.midpoint, self.slope, self.guess, self.lapse)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub estimate_guess_lapse: bool,
    pub grid_midpoints: usize,
    pub grid_slopes: usize,
    pub rel_tol: f64,
    /// Upper slope bound as a multiple of one over the level range.
    pub max_slope_factor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            estimate_guess_lapse: false,
            grid_midpoints: 41,
            grid_slopes: 41,
            rel_tol: 1e-6,
            max_slope_factor: SLOPE_RANGE_FACTOR,
        }
    }
}

/// Binomial log-likelihood without the constant combinatorial term.
pub fn log_likelihood(data: &PsychometricData, midpoint: f64, slope: f64, guess: f64, lapse: f64) -> f64 {
    const EPS: f64 = 1e-12;
    data.levels
        .iter()
        .zip(&data.detect_counts)
        .map(|(&x, &k)| {
            let p = logistic_p(x, midpoint, slope, guess, lapse).clamp(EPS, 1.0 - EPS);
            let k = k as f64;
            let n = data.trials_per_level as f64;
            k * p.ln() + (n - k) * (1.0 - p).ln()
        })
        .sum()
}

/// Search bounds derived from the level range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitBounds {
    pub midpoint: (f64, f64),
    pub slope: (f64, f64),
}

impl FitBounds {
    pub fn for_data(data: &PsychometricData, opts: &FitOptions) -> Self {
        let lo = data.levels[0];
        let hi = data.levels[data.levels.len() - 1];
        let range = hi - lo;
        Self {
            midpoint: (lo, hi),
            slope: (MIN_SLOPE, (opts.max_slope_factor / range).max(MIN_SLOPE * 10.0)),
        }
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

/// Best `(midpoint, slope, log-likelihood)` over the coarse grid with guess = lapse = 0.
pub fn grid_search(data: &PsychometricData, opts: &FitOptions) -> (f64, f64, f64) {
    let b = FitBounds::for_data(data, opts);
    let (ls_lo, ls_hi) = (b.slope.0.ln(), b.slope.1.ln());
    let mut best = (b.midpoint.0, b.slope.0, f64::NEG_INFINITY);
    for m in linspace(b.midpoint.0, b.midpoint.1, opts.grid_midpoints) {
        for ls in linspace(ls_lo, ls_hi, opts.grid_slopes) {
            let s = ls.exp();
            let ll = log_likelihood(data, m, s, 0.0, 0.0);
            if ll > best.2 {
                best = (m, s, ll);
            }
        }
    }
    best
}

/// Grid search over (midpoint, slope) followed by coordinate descent.
pub fn fit_logistic(data: &PsychometricData, opts: &FitOptions) -> Result<LogisticFit, PsychError> {
    data.validate()?;
    data.check_not_saturated()?;
    let b = FitBounds::for_data(data, opts);
    let (m0, s0, _) = grid_search(data, opts);

    // coordinates: midpoint, ln(slope), guess, lapse
    let lower = [b.midpoint.0, b.slope.0.ln(), 0.0, 0.0];
    let upper = [b.midpoint.1, b.slope.1.ln(), MAX_GUESS_LAPSE, MAX_GUESS_LAPSE];
    let n_coords = if opts.estimate_guess_lapse { 4 } else { 2 };
    let mut theta = [m0, s0.ln(), 0.0, 0.0];
    let mut step = [
        (upper[0] - lower[0]) / (opts.grid_midpoints.max(2) - 1) as f64,
        (upper[1] - lower[1]) / (opts.grid_slopes.max(2) - 1) as f64,
        0.01,
        0.01,
    ];
    let tol: Vec<f64> = (0..4).map(|i| opts.rel_tol * (upper[i] - lower[i]).max(1e-12)).collect();
    let ll = |t: &[f64; 4]| log_likelihood(data, t[0], t[1].exp(), t[2], t[3]);
    let mut current = ll(&theta);

    for _ in 0..100_000 {
        if (0..n_coords).all(|i| step[i] <= tol[i]) {
            break;
        }
        for i in 0..n_coords {
            if step[i] <= tol[i] {
                continue;
            }
            let mut best_move = None;
            for dir in [1.0, -1.0] {
                let mut cand = theta;
                cand[i] = (theta[i] + dir * step[i]).clamp(lower[i], upper[i]);
                if cand[i] == theta[i] {
                    continue;
                }
                let v = ll(&cand);
                if v > current && best_move.is_none_or(|(_, bv)| v > bv) {
                    best_move = Some((cand, v));
                }
            }
            match best_move {
                Some((cand, v)) => {
                    theta = cand;
                    current = v;
                }
                None => step[i] *= 0.5,
            }
        }
    }
    Ok(LogisticFit {
        midpoint: theta[0],
        slope: theta[1].exp(),
        guess: theta[2],
        lapse: theta[3],
        log_likelihood: current,
    })
}

/// Stimulus level at which the fitted curve reaches `criterion`.
pub fn threshold(fit: &LogisticFit, criterion: f64) -> Result<f64, PsychError> {
    if !(criterion > fit.guess && criterion < 1.0 - fit.lapse) {
        return Err(PsychError::Criterion {
            criterion,
            low: fit.guess,
            high: 1.0 - fit.lapse,
        });
    }
    let q = (criterion - fit.guess) / (1.0 - fit.guess - fit.lapse);
    Ok(fit.midpoint + (q / (1.0 - q)).ln() / fit.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psychophysics::Axis;

    fn fit_at(m: f64, s: f64) -> LogisticFit {
        LogisticFit {
            midpoint: m,
            slope: s,
            lapse: 0.0,
            guess: 0.0,
            log_likelihood: 0.0,
        }
    }

    #[test]
    fn inversion_closed_forms() {
        let f = fit_at(120.0, 0.05);
        assert_eq!(threshold(&f, 0.5).unwrap(), 120.0);
        let t = threshold(&f, 0.75).unwrap();
        assert!((t - (120.0 + 3f64.ln() / 0.05)).abs() < 1e-9);
        assert!((f.p(t) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn criterion_outside_range() {
        let f = LogisticFit {
            guess: 0.05,
            ..fit_at(1.0, 1.0)
        };
        assert!(matches!(threshold(&f, 0.05), Err(PsychError::Criterion { .. })));
        assert!(matches!(threshold(&f, 1.0), Err(PsychError::Criterion { .. })));
    }

    #[test]
    fn symmetric_data_centres_on_middle_level() {
        let data = PsychometricData::new(
            Axis::Duration,
            vec![10.0, 20.0, 30.0, 40.0, 50.0],
            100,
            vec![5, 25, 50, 75, 95],
        )
        .unwrap();
        let f = fit_logistic(&data, &FitOptions::default()).unwrap();
        assert!((f.midpoint - 30.0).abs() < 1e-3, "{}", f.midpoint);
    }

    #[test]
    fn saturated_data_is_degenerate() {
        let all = PsychometricData::new(Axis::Duration, vec![1.0, 2.0], 10, vec![10, 10]).unwrap();
        assert!(matches!(
            fit_logistic(&all, &FitOptions::default()),
            Err(PsychError::Degenerate { .. })
        ));
    }

    #[test]
    fn refinement_never_loses_to_grid() {
        let data = PsychometricData::new(
            Axis::Amplitude,
            vec![0.2, 0.4, 0.8, 1.0, 1.6],
            40,
            vec![1, 4, 17, 30, 39],
        )
        .unwrap();
        let opts = FitOptions::default();
        let (_, _, grid_best) = grid_search(&data, &opts);
        let f = fit_logistic(&data, &opts).unwrap();
        assert!(f.log_likelihood >= grid_best);
    }

    #[test]
    fn guess_lapse_stay_in_bounds() {
        let data = PsychometricData::new(
            Axis::Duration,
            vec![10.0, 20.0, 30.0, 40.0, 50.0, 60.0],
            200,
            vec![30, 32, 60, 120, 170, 175],
        )
        .unwrap();
        let f = fit_logistic(
            &data,
            &FitOptions {
                estimate_guess_lapse: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((0.0..=MAX_GUESS_LAPSE).contains(&f.guess));
        assert!((0.0..=MAX_GUESS_LAPSE).contains(&f.lapse));
        for x in [-1e6, 0.0, 35.0, 1e6] {
            assert!((0.0..=1.0).contains(&f.p(x)));
        }
    }
}
