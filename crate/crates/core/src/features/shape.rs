//! Descriptive statistics, strikes, peaks, corridor changes and linear trend.
//! `None` stands for a value that is undefined on the given window.

use crate::stats;

pub fn mean(w: &[f64]) -> f64 {
    stats::mean(w)
}

pub fn variance(w: &[f64]) -> f64 {
    stats::variance(w)
}

pub fn standard_deviation(w: &[f64]) -> f64 {
    stats::std_dev(w)
}

pub fn quantile(w: &[f64], q: f64) -> f64 {
    stats::quantile(w, q)
}

pub fn root_mean_square(w: &[f64]) -> f64 {
    (w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt()
}

fn diffs(w: &[f64]) -> impl Iterator<Item = f64> + '_ {
    w.windows(2).map(|p| p[1] - p[0])
}

pub fn mean_change(w: &[f64]) -> Option<f64> {
    (w.len() >= 2).then(|| diffs(w).sum::<f64>() / (w.len() - 1) as f64)
}

pub fn mean_abs_change(w: &[f64]) -> Option<f64> {
    (w.len() >= 2).then(|| diffs(w).map(f64::abs).sum::<f64>() / (w.len() - 1) as f64)
}

fn longest_run(w: &[f64], pred: impl Fn(f64) -> bool) -> usize {
    let mut best = 0;
    let mut cur = 0;
    for &x in w {
        if pred(x) {
            cur += 1;
            best = best.max(cur);
        } else {
            cur = 0;
        }
    }
    best
}

/// Longest run of values strictly below the window mean.
pub fn longest_strike_below_mean(w: &[f64]) -> usize {
    let mu = stats::mean(w);
    longest_run(w, |x| x < mu)
}

pub fn longest_strike_above_mean(w: &[f64]) -> usize {
    let mu = stats::mean(w);
    longest_run(w, |x| x > mu)
}

/// Count of indices whose value strictly exceeds its `support` neighbours on
/// each side.
pub fn number_peaks(w: &[f64], support: usize) -> Option<usize> {
    if support == 0 || w.len() < 2 * support + 1 {
        return None;
    }
    let count = (support..w.len() - support)
        .filter(|&i| (1..=support).all(|k| w[i] > w[i - k] && w[i] > w[i + k]))
        .count();
    Some(count)
}

/// Fraction of values further than `r` standard deviations from the mean.
pub fn ratio_beyond_r_sigma(w: &[f64], r: f64) -> f64 {
    let sd = stats::std_dev(w);
    if sd == 0.0 {
        return 0.0;
    }
    let mu = stats::mean(w);
    w.iter().filter(|&&x| (x - mu).abs() > r * sd).count() as f64 / w.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChangeAgg {
    Mean,
    Var,
}

/// Aggregated successive differences restricted to the quantile corridor
/// `[Q(ql), Q(qh)]`; both endpoints of a difference must lie inside.
pub fn change_quantiles(w: &[f64], ql: f64, qh: f64, isabs: bool, agg: ChangeAgg) -> Option<f64> {
    if !(0.0..=1.0).contains(&ql) || !(0.0..=1.0).contains(&qh) || ql >= qh {
        return None;
    }
    let sorted = stats::sorted(w);
    let lo = stats::quantile_sorted(&sorted, ql);
    let hi = stats::quantile_sorted(&sorted, qh);
    let inside = |x: f64| lo <= x && x <= hi;
    let changes: Vec<f64> = w
        .windows(2)
        .filter(|p| inside(p[0]) && inside(p[1]))
        .map(|p| if isabs { (p[1] - p[0]).abs() } else { p[1] - p[0] })
        .collect();
    if changes.is_empty() {
        return None;
    }
    Some(match agg {
        ChangeAgg::Mean => stats::mean(&changes),
        ChangeAgg::Var => stats::variance(&changes),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTrend {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// OLS of value against sample index.
pub fn linear_trend(w: &[f64]) -> Option<LinearTrend> {
    if w.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = (0..w.len()).map(|i| i as f64).collect();
    let (slope, intercept) = stats::ols(&xs, w);
    let var_y = stats::variance(w);
    let r_squared = if var_y == 0.0 {
        0.0
    } else {
        let mx = stats::mean(&xs);
        let my = stats::mean(w);
        let cov: f64 = xs.iter().zip(w).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / w.len() as f64;
        let var_x = stats::variance(&xs);
        (cov * cov / (var_x * var_y)).clamp(0.0, 1.0)
    };
    let slope = if var_y == 0.0 { 0.0 } else { slope };
    Some(LinearTrend {
        slope,
        intercept,
        r_squared,
    })
}
