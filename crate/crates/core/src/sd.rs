//! Top-k subgroup discovery over nominal attributes.
//!
//! Patterns are conjunctions of `attribute=label` selectors with at most one
//! selector per attribute. The search is a canonical-order depth-first
//! enumeration over coverage bitsets; refinements only add selectors on
//! attributes with a larger index, so each pattern is visited once. With
//! pruning enabled a subtree is skipped when its optimistic estimate falls
//! strictly below the current k-th best quality, which leaves the result
//! unchanged.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::discretize::{Label, NominalTable};
use crate::dyncomp::TargetVector;
use crate::error::SearchError;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Selector {
    pub attribute: String,
    pub label: Label,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.attribute, self.label)
    }
}

/// A conjunction of selectors, kept in canonical order (sorted by rendered
/// form).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Selector>", into = "Vec<Selector>")]
pub struct Pattern {
    selectors: Vec<Selector>,
}

impl Pattern {
    pub fn empty() -> Self {
        Pattern { selectors: Vec::new() }
    }

    /// Fails when two selectors constrain the same attribute.
    pub fn new(mut selectors: Vec<Selector>) -> Result<Self, String> {
        selectors.sort_by_cached_key(ToString::to_string);
        for (i, s) in selectors.iter().enumerate() {
            if selectors[..i].iter().any(|o| o.attribute == s.attribute) {
                return Err(format!("attribute `{}` constrained twice", s.attribute));
            }
        }
        Ok(Pattern { selectors })
    }

    pub fn selectors(&self) -> &[Selector] {
        &self.selectors
    }

    pub fn depth(&self) -> usize {
        self.selectors.len()
    }

    fn sort_key(&self) -> Vec<String> {
        self.selectors.iter().map(ToString::to_string).collect()
    }
}

impl TryFrom<Vec<Selector>> for Pattern {
    type Error = String;

    fn try_from(v: Vec<Selector>) -> Result<Self, Self::Error> {
        Pattern::new(v)
    }
}

impl From<Pattern> for Vec<Selector> {
    fn from(p: Pattern) -> Self {
        p.selectors
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.selectors.iter().enumerate() {
            if i > 0 {
                f.write_str(" AND ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Exponent `a` of `q_a = n^a (t_P - t_0)`; 0.5 is the simplified binomial
/// function, 1 is Piatetsky-Shapiro.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualitySpec {
    a: f64,
}

impl QualitySpec {
    pub const BINOMIAL: QualitySpec = QualitySpec { a: 0.5 };
    pub const PIATETSKY_SHAPIRO: QualitySpec = QualitySpec { a: 1.0 };

    pub fn new(a: f64) -> Result<Self, SearchError> {
        if !(0.0..=1.0).contains(&a) {
            return Err(SearchError::BadExponent(a));
        }
        Ok(QualitySpec { a })
    }

    pub fn exponent(&self) -> f64 {
        self.a
    }
}

impl Default for QualitySpec {
    fn default() -> Self {
        QualitySpec::BINOMIAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    High,
    Low,
}

pub fn quality(n: usize, subgroup_mean: f64, population_mean: f64, spec: QualitySpec) -> f64 {
    (n as f64).powf(spec.a) * (subgroup_mean - population_mean)
}

fn directed_quality(n: usize, tp: f64, t0: f64, spec: QualitySpec, dir: Direction) -> f64 {
    match dir {
        Direction::High => quality(n, tp, t0, spec),
        Direction::Low => quality(n, t0, tp, spec),
    }
}

/// Upper bound on the quality of every refinement of a coverage: no
/// refinement is larger than `n` and no refinement mean exceeds the largest
/// covered target. Negative deviations are bounded at size 1.
pub fn optimistic_estimate(
    coverage_targets: &[f64],
    population_mean: f64,
    spec: QualitySpec,
    direction: Direction,
) -> f64 {
    let best = match direction {
        Direction::High => coverage_targets.iter().copied().fold(f64::NEG_INFINITY, f64::max) - population_mean,
        Direction::Low => population_mean - coverage_targets.iter().copied().fold(f64::INFINITY, f64::min),
    };
    if best >= 0.0 {
        (coverage_targets.len() as f64).powf(spec.a) * best
    } else {
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub min_size: usize,
    pub max_depth: usize,
    pub top_k: usize,
    pub quality: QualitySpec,
    pub pruning: bool,
    pub direction: Direction,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            min_size: 20,
            max_depth: 3,
            top_k: 20,
            quality: QualitySpec::BINOMIAL,
            pruning: true,
            direction: Direction::High,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        if self.min_size == 0 {
            return Err(SearchError::BadConfig("min_size must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(SearchError::BadConfig("max_depth must be at least 1"));
        }
        if self.top_k == 0 {
            return Err(SearchError::BadConfig("top_k must be at least 1"));
        }
        QualitySpec::new(self.quality.a).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupResult {
    pub pattern: Pattern,
    pub size: usize,
    pub subgroup_mean: f64,
    pub population_mean: f64,
    pub quality: f64,
    /// Row indices (into the mined table) covered by the pattern.
    pub coverage: Vec<usize>,
}

/// Ranking order: quality descending, then size descending, then the
/// canonical pattern ascending.
pub fn rank_order(a: &SubgroupResult, b: &SubgroupResult) -> Ordering {
    b.quality
        .total_cmp(&a.quality)
        .then(b.size.cmp(&a.size))
        .then_with(|| a.pattern.sort_key().cmp(&b.pattern.sort_key()))
}

/// Fixed-size bitset over table rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitset {
    words: Vec<u64>,
    len: usize,
}

impl Bitset {
    pub fn full(len: usize) -> Self {
        let mut words = vec![u64::MAX; len.div_ceil(64)];
        if !len.is_multiple_of(64) {
            if let Some(last) = words.last_mut() {
                *last = (1u64 << (len % 64)) - 1;
            }
        }
        Bitset { words, len }
    }

    pub fn empty(len: usize) -> Self {
        Bitset {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1u64 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        i < self.len && self.words[i / 64] & (1u64 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn and(&self, other: &Bitset) -> Bitset {
        Bitset {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
            len: self.len,
        }
    }

    pub fn is_subset(&self, other: &Bitset) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Set positions in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }
}

pub fn coverage_bits(pattern: &Pattern, table: &NominalTable) -> Result<Bitset, SearchError> {
    let mut bits = Bitset::full(table.n_rows());
    for sel in pattern.selectors() {
        let attr = table
            .attribute_index(&sel.attribute)
            .ok_or_else(|| SearchError::UnknownAttribute(sel.attribute.clone()))?;
        let mut s = Bitset::empty(table.n_rows());
        for (r, &l) in table.column(attr).iter().enumerate() {
            if l == sel.label {
                s.set(r);
            }
        }
        bits = bits.and(&s);
    }
    Ok(bits)
}

/// Rows (in increasing order) on which every selector of `pattern` holds.
pub fn coverage(pattern: &Pattern, table: &NominalTable) -> Result<Vec<usize>, SearchError> {
    Ok(coverage_bits(pattern, table)?.iter().collect())
}

struct Vocabulary {
    attribute: Vec<usize>,
    label: Vec<Label>,
    rendered: Vec<String>,
    bits: Vec<Bitset>,
}

#[derive(Clone)]
struct Candidate {
    selectors: Vec<usize>,
    key: Vec<String>,
    size: usize,
    mean: f64,
    quality: f64,
    coverage: Bitset,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.quality
        .total_cmp(&a.quality)
        .then(b.size.cmp(&a.size))
        .then_with(|| a.key.cmp(&b.key))
}

struct TopK {
    k: usize,
    items: Vec<Candidate>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    fn threshold(&self) -> Option<f64> {
        (self.items.len() == self.k).then(|| self.items[self.k - 1].quality)
    }

    /// Whether a candidate of this quality could still enter the list.
    fn admits(&self, quality: f64) -> bool {
        self.threshold().is_none_or(|t| quality >= t)
    }

    fn offer(&mut self, c: Candidate) {
        let pos = self
            .items
            .binary_search_by(|probe| candidate_order(probe, &c))
            .unwrap_or_else(|p| p);
        if pos < self.k {
            self.items.insert(pos, c);
            self.items.truncate(self.k);
        }
    }
}

struct Search<'a> {
    vocab: &'a Vocabulary,
    targets: &'a [f64],
    t0: f64,
    cfg: &'a SearchConfig,
    #[cfg(feature = "parallel")]
    shared_floor: &'a std::sync::atomic::AtomicU64,
}

const PRUNE_SLACK: f64 = 1e-9;

impl Search<'_> {
    fn floor(&self, local: &TopK) -> Option<f64> {
        let local = local.threshold();
        #[cfg(feature = "parallel")]
        {
            let shared = f64::from_bits(self.shared_floor.load(std::sync::atomic::Ordering::Relaxed));
            match local {
                Some(l) => Some(l.max(shared)),
                None if shared > f64::NEG_INFINITY => Some(shared),
                None => None,
            }
        }
        #[cfg(not(feature = "parallel"))]
        local
    }

    fn publish(&self, local: &TopK) {
        #[cfg(feature = "parallel")]
        if let Some(t) = local.threshold() {
            use std::sync::atomic::Ordering::Relaxed;
            let mut cur = self.shared_floor.load(Relaxed);
            while f64::from_bits(cur) < t {
                match self
                    .shared_floor
                    .compare_exchange_weak(cur, t.to_bits(), Relaxed, Relaxed)
                {
                    Ok(_) => break,
                    Err(actual) => cur = actual,
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        let _ = local;
    }

    /// Tries every selector in `from..to` as the next refinement of
    /// `selectors` (coverage `cov`) and recurses into the admissible ones.
    fn expand(&self, selectors: &mut Vec<usize>, cov: &Bitset, from: usize, to: usize, top: &mut TopK) {
        let last_attr = selectors.last().map(|&s| self.vocab.attribute[s]);
        for s in from..to {
            if last_attr.is_some_and(|a| self.vocab.attribute[s] <= a) {
                continue;
            }
            let sub = cov.and(&self.vocab.bits[s]);
            let n = sub.count();
            if n < self.cfg.min_size {
                continue;
            }
            let (mut sum, mut hi, mut lo) = (0.0, f64::NEG_INFINITY, f64::INFINITY);
            for r in sub.iter() {
                let t = self.targets[r];
                sum += t;
                hi = hi.max(t);
                lo = lo.min(t);
            }
            let mean = sum / n as f64;
            let q = directed_quality(n, mean, self.t0, self.cfg.quality, self.cfg.direction);
            selectors.push(s);
            if top.admits(q) {
                let key = {
                    let mut k: Vec<String> = selectors.iter().map(|&i| self.vocab.rendered[i].clone()).collect();
                    k.sort();
                    k
                };
                top.offer(Candidate {
                    selectors: selectors.clone(),
                    key,
                    size: n,
                    mean,
                    quality: q,
                    coverage: sub.clone(),
                });
                self.publish(top);
            }
            if selectors.len() < self.cfg.max_depth {
                let estimate = match self.cfg.direction {
                    Direction::High => hi - self.t0,
                    Direction::Low => self.t0 - lo,
                };
                let estimate = if estimate >= 0.0 {
                    (n as f64).powf(self.cfg.quality.a) * estimate
                } else {
                    estimate
                };
                let pruned = self.cfg.pruning
                    && self
                        .floor(top)
                        .is_some_and(|f| estimate < f - PRUNE_SLACK * (1.0 + f.abs()));
                if !pruned {
                    self.expand(selectors, &sub, s + 1, self.vocab.bits.len(), top);
                }
            }
            selectors.pop();
        }
    }
}

fn build_vocabulary(table: &NominalTable, min_size: usize) -> Vocabulary {
    let mut vocab = Vocabulary {
        attribute: Vec::new(),
        label: Vec::new(),
        rendered: Vec::new(),
        bits: Vec::new(),
    };
    for a in 0..table.n_attributes() {
        for label in Label::ALL {
            let mut bits = Bitset::empty(table.n_rows());
            for (r, &l) in table.column(a).iter().enumerate() {
                if l == label {
                    bits.set(r);
                }
            }
            if bits.count() >= min_size {
                vocab.attribute.push(a);
                vocab.label.push(label);
                vocab.rendered.push(format!("{}={}", table.attributes()[a], label));
                vocab.bits.push(bits);
            }
        }
    }
    vocab
}

/// Top-k subgroups of depth `1..=max_depth` with at least `min_size` covered
/// rows. `target` must be keyed by exactly the table's rows.
pub fn discover(
    table: &NominalTable,
    target: &TargetVector,
    cfg: &SearchConfig,
) -> Result<Vec<SubgroupResult>, SearchError> {
    if target.rows != table.rows() {
        return Err(SearchError::MismatchedRows);
    }
    discover_values(table, &target.values, cfg)
}

/// As [`discover`], with targets given positionally.
pub fn discover_values(
    table: &NominalTable,
    targets: &[f64],
    cfg: &SearchConfig,
) -> Result<Vec<SubgroupResult>, SearchError> {
    cfg.validate()?;
    if targets.len() != table.n_rows() {
        return Err(SearchError::MismatchedRows);
    }
    if table.n_attributes() == 0 {
        return Err(SearchError::EmptyVocabulary);
    }
    if table.n_rows() == 0 {
        return Ok(Vec::new());
    }
    let t0 = targets.iter().sum::<f64>() / targets.len() as f64;
    let vocab = build_vocabulary(table, cfg.min_size);
    let root = Bitset::full(table.n_rows());

    #[cfg(feature = "parallel")]
    let floor = std::sync::atomic::AtomicU64::new(f64::NEG_INFINITY.to_bits());
    let search = Search {
        vocab: &vocab,
        targets,
        t0,
        cfg,
        #[cfg(feature = "parallel")]
        shared_floor: &floor,
    };

    // One subtree per first selector; each keeps its own top-k and the
    // lists are merged afterwards.
    let subtree = |first: usize| -> Vec<Candidate> {
        let mut top = TopK::new(cfg.top_k);
        let mut selectors = Vec::with_capacity(cfg.max_depth);
        search.expand(&mut selectors, &root, first, first + 1, &mut top);
        top.items
    };

    #[cfg(feature = "parallel")]
    let lists: Vec<Vec<Candidate>> = {
        use rayon::prelude::*;
        (0..vocab.bits.len()).into_par_iter().map(subtree).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let lists: Vec<Vec<Candidate>> = (0..vocab.bits.len()).map(subtree).collect();

    let mut all: Vec<Candidate> = lists.into_iter().flatten().collect();
    all.sort_by(candidate_order);
    all.truncate(cfg.top_k);

    Ok(all
        .into_iter()
        .map(|c| {
            let selectors = c
                .selectors
                .iter()
                .map(|&s| Selector {
                    attribute: table.attributes()[vocab.attribute[s]].clone(),
                    label: vocab.label[s],
                })
                .collect();
            SubgroupResult {
                pattern: Pattern::new(selectors).expect("one selector per attribute"),
                size: c.size,
                subgroup_mean: c.mean,
                population_mean: t0,
                quality: c.quality,
                coverage: c.coverage.iter().collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_examples() {
        for a in [0.0, 0.5, 1.0] {
            let spec = QualitySpec::new(a).unwrap();
            assert_eq!(quality(327, 0.3, 0.3, spec), 0.0);
        }
        let q = quality(21, 1.137, 0.0, QualitySpec::BINOMIAL);
        assert!((q - 21f64.sqrt() * 1.137).abs() < 1e-12);
        assert!((q - 5.2103).abs() < 1e-3);
        assert_eq!(quality(4, 1.5, 1.0, QualitySpec::PIATETSKY_SHAPIRO), 2.0);
        assert!(QualitySpec::new(1.5).is_err());
    }

    #[test]
    fn estimate_examples() {
        let spec = QualitySpec::BINOMIAL;
        assert_eq!(optimistic_estimate(&[0.2; 5], 0.2, spec, Direction::High), 0.0);
        assert_eq!(
            optimistic_estimate(&[0.7], 0.2, spec, Direction::High),
            quality(1, 0.7, 0.2, spec)
        );
        assert_eq!(
            optimistic_estimate(&[-0.7], 0.2, spec, Direction::Low),
            quality(1, 0.2, -0.7, spec)
        );
    }

    #[test]
    fn pattern_canonical_order_and_rendering() {
        let p = Pattern::new(vec![
            Selector {
                attribute: "b".into(),
                label: Label::High,
            },
            Selector {
                attribute: "a".into(),
                label: Label::Low,
            },
        ])
        .unwrap();
        assert_eq!(p.to_string(), "a=low AND b=high");
        assert!(Pattern::new(vec![
            Selector {
                attribute: "a".into(),
                label: Label::Low,
            },
            Selector {
                attribute: "a".into(),
                label: Label::High,
            },
        ])
        .is_err());
    }

    #[test]
    fn bitset_ops() {
        let mut a = Bitset::empty(130);
        a.set(0);
        a.set(64);
        a.set(129);
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![0, 64, 129]);
        assert_eq!(Bitset::full(130).count(), 130);
        assert!(a.is_subset(&Bitset::full(130)));
        let mut b = Bitset::empty(130);
        b.set(64);
        b.set(100);
        assert_eq!(a.and(&b).iter().collect::<Vec<_>>(), vec![64]);
        assert!(!a.is_subset(&b));
    }
}
