//! Entropy and complexity measures, plus lagged autocorrelation.

use crate::stats;

/// Index of the equal-width bin (over `[min, max]`) that `x` falls into.
/// The top edge belongs to the last bin; constant data land in bin 0.
fn bin_index(x: f64, min: f64, max: f64, bins: usize) -> usize {
    if max <= min {
        return 0;
    }
    let idx = ((x - min) / (max - min) * bins as f64).floor() as usize;
    idx.min(bins - 1)
}

fn min_max(w: &[f64]) -> (f64, f64) {
    w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}

/// Quantizes a window into `bins` equal-width symbols.
pub fn quantize(w: &[f64], bins: usize) -> Vec<usize> {
    let (lo, hi) = min_max(w);
    w.iter().map(|&x| bin_index(x, lo, hi, bins)).collect()
}

/// Shannon entropy (nats) of the equal-width histogram of the window.
pub fn binned_entropy(w: &[f64], max_bins: usize) -> Option<f64> {
    if max_bins == 0 || w.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; max_bins];
    for b in quantize(w, max_bins) {
        counts[b] += 1;
    }
    let n = w.len() as f64;
    Some(
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum(),
    )
}

fn count_matches(w: &[f64], len: usize, templates: usize, tol: f64) -> usize {
    let mut count = 0;
    for i in 0..templates {
        for j in i + 1..templates {
            let close = (0..len).all(|k| (w[i + k] - w[j + k]).abs() <= tol);
            if close {
                count += 1;
            }
        }
    }
    count
}

/// Sample entropy with embedding `m` and tolerance `r_frac * std`.
/// Both template lengths use the same `n - m` starting points.
pub fn sample_entropy(w: &[f64], m: usize, r_frac: f64) -> Option<f64> {
    if m == 0 || w.len() < m + 2 {
        return None;
    }
    let tol = r_frac * stats::std_dev(w);
    let templates = w.len() - m;
    let b = count_matches(w, m, templates, tol);
    let a = count_matches(w, m + 1, templates, tol);
    if a == 0 || b == 0 {
        return None;
    }
    Some(-(a as f64 / b as f64).ln())
}

/// Number of phrases in the LZ76 (Kaspar–Schuster) parse of `s`. A trailing
/// phrase that is still a copy of earlier history is counted.
pub fn lz76_phrases<T: PartialEq>(s: &[T]) -> usize {
    let n = s.len();
    if n <= 1 {
        return n;
    }
    let (mut i, mut c, mut l, mut k, mut k_max) = (0usize, 1usize, 1usize, 1usize, 1usize);
    loop {
        if s[i + k - 1] == s[l + k - 1] {
            k += 1;
            if l + k > n {
                c += 1;
                break;
            }
        } else {
            k_max = k_max.max(k);
            i += 1;
            if i == l {
                c += 1;
                l += k_max;
                if l + 1 > n {
                    break;
                }
                i = 0;
                k = 1;
                k_max = 1;
            } else {
                k = 1;
            }
        }
    }
    c
}

/// LZ76 phrase count of the `bins`-level quantized window, divided by its length.
pub fn lempel_ziv_complexity(w: &[f64], bins: usize) -> Option<f64> {
    if bins == 0 || w.is_empty() {
        return None;
    }
    let symbols = quantize(w, bins);
    Some(lz76_phrases(&symbols) as f64 / w.len() as f64)
}

/// Complexity-invariant distance estimate: length of the line through the
/// (optionally z-normalized) window.
pub fn cid_ce(w: &[f64], normalize: bool) -> f64 {
    let z: Vec<f64> = if normalize {
        let sd = stats::std_dev(w);
        if sd == 0.0 {
            return 0.0;
        }
        let mu = stats::mean(w);
        w.iter().map(|x| (x - mu) / sd).collect()
    } else {
        w.to_vec()
    };
    z.windows(2).map(|p| (p[1] - p[0]).powi(2)).sum::<f64>().sqrt()
}

pub fn autocorrelation(w: &[f64], lag: usize) -> Option<f64> {
    let n = w.len();
    if lag == 0 || lag >= n {
        return None;
    }
    let var = stats::variance(w);
    if var == 0.0 {
        return None;
    }
    let mu = stats::mean(w);
    let s: f64 = (0..n - lag).map(|t| (w[t] - mu) * (w[t + lag] - mu)).sum();
    Some(s / ((n - lag) as f64 * var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Literal LZ76 parse: each phrase is the shortest extension that does
    /// not occur in the history ending one symbol before the phrase ends.
    fn naive_lz76(s: &[usize]) -> usize {
        let contains = |hay: &[usize], needle: &[usize]| {
            needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
        };
        let n = s.len();
        let (mut i, mut phrases) = (0, 0);
        while i < n {
            let mut len = 1;
            while i + len <= n && contains(&s[..i + len - 1], &s[i..i + len]) {
                len += 1;
            }
            phrases += 1;
            i += len;
        }
        phrases
    }

    #[test]
    fn lz76_matches_literal_parse() {
        let s: Vec<usize> = "01010101".bytes().map(|b| (b - b'0') as usize).collect();
        assert_eq!(naive_lz76(&s), 3);
        assert_eq!(lz76_phrases(&s), 3);

        // Kaspar & Schuster's worked example: 0·001·10·100·1000·101
        let ks: Vec<usize> = "0001101001000101".bytes().map(|b| (b - b'0') as usize).collect();
        assert_eq!(naive_lz76(&ks), 6);
        assert_eq!(lz76_phrases(&ks), 6);

        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.gen_range(1..40);
            let k = rng.gen_range(1..4);
            let s: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            assert_eq!(lz76_phrases(&s), naive_lz76(&s), "{s:?}");
        }
    }

    #[test]
    fn lempel_ziv_alternating() {
        let w = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
        assert_eq!(lempel_ziv_complexity(&w, 2), Some(3.0 / 8.0));
    }

    #[test]
    fn binned_entropy_two_bins() {
        assert_relative_eq!(binned_entropy(&[0.0, 0.0, 1.0, 1.0], 2).unwrap(), 2f64.ln());
        assert_eq!(binned_entropy(&[5.0; 4], 10), Some(0.0));
    }

    #[test]
    fn cid_ce_cases() {
        assert_eq!(cid_ce(&[3.0; 6], false), 0.0);
        assert_eq!(cid_ce(&[3.0; 6], true), 0.0);
        assert_relative_eq!(cid_ce(&[0.0, 3.0, 7.0], false), 5.0);
    }

    #[test]
    fn autocorrelation_alternating() {
        let w = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        assert_relative_eq!(autocorrelation(&w, 1).unwrap(), -1.0);
        assert_relative_eq!(autocorrelation(&w, 2).unwrap(), 1.0);
        assert_eq!(autocorrelation(&[2.0; 6], 1), None);
        assert_eq!(autocorrelation(&w, 6), None);
    }

    #[test]
    fn sample_entropy_cases() {
        // a strictly periodic signal repeats every template: A/B = (matches of
        // length 3) / (matches of length 2) on period 2 is close to 1
        let periodic: Vec<f64> = (0..20).map(|i| (i % 2) as f64).collect();
        let se = sample_entropy(&periodic, 2, 0.2).unwrap();
        assert!((0.0..0.2).contains(&se), "{se}");
        // strictly increasing with tiny tolerance: no template matches
        let ramp: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(sample_entropy(&ramp, 2, 0.01), None);
        assert_eq!(sample_entropy(&[1.0, 2.0, 3.0], 2, 0.2), None);
    }
}
