//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tslex_core::discretize::{Label, NominalTable};
use tslex_core::features::RowKey;
use tslex_core::sd::{Direction, Pattern, SearchConfig, Selector, SubgroupResult};

/// Fluctuation written out term by term with 1-based indices. Points of
/// return are found from the signs of the forward differences.
pub fn literal_fluctuation(x: &[f64], lo: f64, hi: f64) -> f64 {
    let m = x.len();
    let x: Vec<f64> = x.iter().map(|v| v.clamp(lo, hi)).collect();
    let sgn = |d: f64| {
        if d > 0.0 {
            1
        } else if d < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut p = vec![1usize];
    for i in 2..m {
        if sgn(x[i] - x[i - 1]) != sgn(x[i - 1] - x[i - 2]) {
            p.push(i);
        }
    }
    p.push(m);
    let mut sum = 0.0;
    for k in 0..p.len() - 1 {
        sum += (x[p[k + 1] - 1] - x[p[k] - 1]).abs() / (p[k + 1] - p[k]) as f64;
    }
    sum / ((hi - lo) * (m - 1) as f64)
}

/// Distribution as the full sum over every `c <= a < b <= e`, divided by the
/// number of enumerated terms.
pub fn quadruple_sum_distribution(x: &[f64], lo: f64, hi: f64) -> f64 {
    let m = x.len();
    let mut s: Vec<f64> = x.iter().map(|v| v.clamp(lo, hi)).collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let y: Vec<f64> = (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect();
    let mut sum = 0.0;
    let mut terms = 0usize;
    for c in 0..m {
        for e in c..m {
            for a in c..=e {
                for b in a + 1..=e {
                    terms += 1;
                    let dy = y[b] - y[a];
                    let delta = dy - (s[b] - s[a]);
                    if delta > 0.0 {
                        sum += delta / dy;
                    }
                }
            }
        }
    }
    1.0 - sum / terms as f64
}

pub fn random_table(rng: &mut ChaCha8Rng, n_rows: usize, n_attrs: usize) -> NominalTable {
    let rows = (0..n_rows).map(|i| RowKey::new("r", i)).collect();
    let attrs = (0..n_attrs).map(|a| format!("a{a:02}")).collect();
    // skewed label frequencies so that supports differ between selectors
    let columns = (0..n_attrs)
        .map(|_| {
            let w: [f64; 3] = [
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.1..1.0),
                rng.gen_range(0.1..1.0),
            ];
            let total: f64 = w.iter().sum();
            (0..n_rows)
                .map(|_| {
                    let u = rng.gen_range(0.0..total);
                    if u < w[0] {
                        Label::Low
                    } else if u < w[0] + w[1] {
                        Label::Medium
                    } else {
                        Label::High
                    }
                })
                .collect()
        })
        .collect();
    NominalTable::new(rows, attrs, columns)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for first in 0..n {
        for rest in combinations(n, k - 1) {
            if rest.first().is_none_or(|&r| r > first) {
                let mut c = vec![first];
                c.extend(rest);
                out.push(c);
            }
        }
    }
    out
}

/// Scores every pattern of depth `1..=max_depth` by a row scan and keeps the
/// best `top_k` under quality desc, size desc, canonical pattern asc.
pub fn brute_force(table: &NominalTable, targets: &[f64], cfg: &SearchConfig) -> Vec<SubgroupResult> {
    let n = table.n_rows();
    let t0 = targets.iter().sum::<f64>() / n as f64;
    let a = cfg.quality.exponent();
    let mut all = Vec::new();
    for depth in 1..=cfg.max_depth.min(table.n_attributes()) {
        for attrs in combinations(table.n_attributes(), depth) {
            for code in 0..3usize.pow(depth as u32) {
                let labels: Vec<Label> = (0..depth)
                    .map(|i| Label::ALL[code / 3usize.pow(i as u32) % 3])
                    .collect();
                let rows: Vec<usize> = (0..n)
                    .filter(|&r| attrs.iter().zip(&labels).all(|(&at, &l)| table.label(r, at) == l))
                    .collect();
                if rows.len() < cfg.min_size {
                    continue;
                }
                let mut sum = 0.0;
                for &r in &rows {
                    sum += targets[r];
                }
                let mean = sum / rows.len() as f64;
                let dev = match cfg.direction {
                    Direction::High => mean - t0,
                    Direction::Low => t0 - mean,
                };
                let selectors = attrs
                    .iter()
                    .zip(&labels)
                    .map(|(&at, &l)| Selector {
                        attribute: table.attributes()[at].clone(),
                        label: l,
                    })
                    .collect();
                all.push(SubgroupResult {
                    pattern: Pattern::new(selectors).unwrap(),
                    size: rows.len(),
                    subgroup_mean: mean,
                    population_mean: t0,
                    quality: (rows.len() as f64).powf(a) * dev,
                    coverage: rows,
                });
            }
        }
    }
    let key = |s: &SubgroupResult| -> Vec<String> { s.pattern.selectors().iter().map(|x| x.to_string()).collect() };
    all.sort_by(|x, y| {
        y.quality
            .partial_cmp(&x.quality)
            .unwrap_or(Ordering::Equal)
            .then(y.size.cmp(&x.size))
            .then_with(|| key(x).cmp(&key(y)))
    });
    all.truncate(cfg.top_k);
    all
}

pub const PLANTED_RECORDINGS: usize = 6;
pub const PLANTED_SLICES: usize = 54;
pub const PLANTED_SLICE_SECONDS: usize = 60;
pub const PLANTED_PATTERN: &str = "mean__longest_strike_below_mean=high AND mean__variance=low";

/// Base-level mask of one movement slice: `true` samples sit at the base,
/// the rest are raised by the amplitude.
fn strike_mask(shape: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let n = PLANTED_SLICE_SECONDS;
    let mut mask = Vec::with_capacity(n);
    match shape {
        // one long run at the base
        0 => {
            let k = rng.gen_range(40..=50);
            let start = rng.gen_range(0..=n - k);
            mask.extend((0..n).map(|i| i >= start && i < start + k));
        }
        // medium runs
        1 => {
            while mask.len() < n {
                mask.extend(std::iter::repeat_n(true, rng.gen_range(15..=22)));
                mask.extend(std::iter::repeat_n(false, rng.gen_range(6..=10)));
            }
        }
        // short alternation
        _ => {
            while mask.len() < n {
                mask.extend(std::iter::repeat_n(true, rng.gen_range(2..=4)));
                mask.extend(std::iter::repeat_n(false, rng.gen_range(2..=4)));
            }
        }
    }
    mask.truncate(n);
    mask
}

pub struct PlantedCorpus {
    pub csv: String,
    /// `(recording, slice)` of every slice carrying the planted movement.
    pub planted: Vec<(String, usize)>,
}

/// Six recordings of 54 one-minute slices. Every slice gets one of nine
/// (amplitude, strike shape) combinations on three 1 Hz movement channels;
/// each combination occurs six times per recording. The 4 Hz speech channel
/// has irregular energy in the slice after a low-amplitude, long-strike slice
/// and near-constant energy elsewhere.
pub fn planted_corpus(seed: u64) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("recording_id,channel_id,role,sample_rate,t_index,value\n");
    let mut planted = Vec::new();
    let amplitudes = [0.2, 1.0, 3.0];
    for r in 0..PLANTED_RECORDINGS {
        let rec = format!("rec{r:02}");
        let mut combos: Vec<usize> = (0..PLANTED_SLICES).map(|i| i % 9).collect();
        combos.shuffle(&mut rng);
        for (s, &c) in combos.iter().enumerate() {
            if c == 0 {
                planted.push((rec.clone(), s));
            }
        }
        for ch in 0..3 {
            let mut t = 0usize;
            for &c in &combos {
                let amp = amplitudes[c / 3] * rng.gen_range(0.85..1.15);
                let base = rng.gen_range(-5.0..5.0);
                for below in strike_mask(c % 3, &mut rng) {
                    let v = base + if below { 0.0 } else { amp } + amp * rng.gen_range(-0.02..0.02);
                    writeln!(csv, "{rec},move{ch},movement,1,{t},{v}").unwrap();
                    t += 1;
                }
            }
        }
        let mut t = 0usize;
        for s in 0..PLANTED_SLICES {
            let irregular = s > 0 && combos[s - 1] == 0;
            for _ in 0..PLANTED_SLICE_SECONDS {
                let energy: f64 = if irregular {
                    rng.gen_range(0.0..1.0)
                } else {
                    0.5 + rng.gen_range(-0.005..0.005)
                };
                // four equal samples whose squares sum to the block energy
                let v = (energy / 4.0).sqrt();
                for _ in 0..4 {
                    writeln!(csv, "{rec},voice,speech,4,{t},{v}").unwrap();
                    t += 1;
                }
            }
        }
    }
    PlantedCorpus { csv, planted }
}
