//! Datasets: LIBSVM text parsing, seeded permutation and subsampling, and
//! synthetic two-cluster streams.
//!
//! LIBSVM lines look like `<label> <idx>:<val> <idx>:<val> ...`. Anything
//! after `#` is a comment and blank lines are skipped. Indices are kept as
//! written (files are usually 1-based) and must be strictly increasing on
//! each line. Labels are normalized to `{-1, +1}`: if every raw label is
//! already `-1` or `+1` they are kept, otherwise the smaller of the two raw
//! values becomes `-1` and the larger `+1`.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::kernel::{Label, LabeledExample, SparseVector};
use crate::rng::SplitMix64;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub examples: Vec<LabeledExample>,
    /// One more than the largest feature index present.
    pub feature_count: usize,
}

impl Dataset {
    pub fn new(name: impl Into<String>, examples: Vec<LabeledExample>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let feature_count = examples
            .iter()
            .filter_map(|e| e.x.max_index())
            .max()
            .map_or(0, |m| m as usize + 1);
        Ok(Self {
            name: name.into(),
            examples,
            feature_count,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Largest `|x|^2` over the instances.
    pub fn max_sq_norm(&self) -> f64 {
        self.examples.iter().map(|e| e.x.sq_norm()).fold(0.0, f64::max)
    }

    /// A copy with every instance multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let examples = self
            .examples
            .iter()
            .map(|e| Ok(LabeledExample::new(e.x.scaled(factor)?, e.y)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            name: self.name.clone(),
            examples,
            feature_count: self.feature_count,
        })
    }

    pub fn with_examples(&self, examples: Vec<LabeledExample>) -> Self {
        Self {
            name: self.name.clone(),
            examples,
            feature_count: self.feature_count,
        }
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn parse_line(line_no: usize, body: &str) -> Result<(f64, SparseVector)> {
    let mut tokens = body.split_whitespace();
    let label_tok = tokens.next().ok_or_else(|| malformed(line_no, "missing label"))?;
    let raw: f64 = label_tok
        .parse()
        .map_err(|_| malformed(line_no, format!("bad label '{label_tok}'")))?;
    if !raw.is_finite() {
        return Err(malformed(line_no, format!("bad label '{label_tok}'")));
    }
    let mut pairs = Vec::new();
    for tok in tokens {
        let (i, v) = tok
            .split_once(':')
            .ok_or_else(|| malformed(line_no, format!("expected idx:val, got '{tok}'")))?;
        let index: u32 = i
            .parse()
            .map_err(|_| malformed(line_no, format!("bad index '{i}'")))?;
        let value: f64 = v
            .parse()
            .map_err(|_| malformed(line_no, format!("bad value '{v}'")))?;
        pairs.push((index, value));
    }
    let x = SparseVector::from_pairs(pairs).map_err(|e| malformed(line_no, e.to_string()))?;
    Ok((raw, x))
}

/// Parses LIBSVM text one line at a time.
pub fn parse_libsvm<R: BufRead>(reader: R, name: &str) -> Result<Dataset> {
    let mut raw_examples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        raw_examples.push(parse_line(line_no, body)?);
    }
    if raw_examples.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let distinct: BTreeSet<u64> = raw_examples
        .iter()
        .map(|(y, _)| canonical_bits(*y))
        .collect();
    let values: Vec<f64> = distinct.iter().map(|&b| f64::from_bits(b)).collect();
    if values.len() > 2 {
        let mut shown: Vec<f64> = values.clone();
        shown.sort_by(f64::total_cmp);
        return Err(Error::NonBinaryLabels(
            shown.iter().map(|v| v.to_string()).collect(),
        ));
    }
    let already_signed = values.iter().all(|&v| v == 1.0 || v == -1.0);
    let low = values.iter().copied().fold(f64::INFINITY, f64::min);
    let map = |raw: f64| -> Label {
        if already_signed {
            if raw > 0.0 {
                Label::Positive
            } else {
                Label::Negative
            }
        } else if values.len() == 2 {
            if raw == low {
                Label::Negative
            } else {
                Label::Positive
            }
        } else if raw > 0.0 {
            Label::Positive
        } else {
            Label::Negative
        }
    };
    let examples = raw_examples
        .into_iter()
        .map(|(raw, x)| LabeledExample::new(x, map(raw)))
        .collect();
    Dataset::new(name, examples)
}

fn canonical_bits(v: f64) -> u64 {
    // -0.0 and 0.0 are the same label.
    if v == 0.0 {
        0.0f64.to_bits()
    } else {
        v.to_bits()
    }
}

/// Reads a LIBSVM file; the dataset is named after the file stem.
pub fn load_libsvm(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_libsvm(BufReader::new(file), &name)
}

/// Writes `ds` in LIBSVM format with labels `+1` / `-1`.
pub fn write_libsvm<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    for ex in &ds.examples {
        write!(w, "{}", ex.y)?;
        for (i, v) in ex.x.iter() {
            write!(w, " {i}:{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Reorders the examples with a Fisher-Yates shuffle driven by
/// `SplitMix64::new(seed)`.
pub fn permute(ds: &Dataset, seed: u64) -> Dataset {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    ds.with_examples(order.into_iter().map(|i| ds.examples[i].clone()).collect())
}

/// The first `n` examples of `permute(ds, seed)`.
pub fn subsample(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > ds.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: ds.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut p = permute(ds, seed);
    p.examples.truncate(n);
    Ok(p)
}

/// Per-coordinate standard deviation of the synthetic clusters.
const CLUSTER_SPREAD: f64 = 0.3;

/// A synthetic stream and the linear comparator that separates it.
#[derive(Clone, Debug)]
pub struct SyntheticStream {
    pub dataset: Dataset,
    /// Dense weights `w` with `y <w, x> >= 1` on every separable example.
    pub comparator: Vec<f64>,
    /// Indices of examples whose label was flipped.
    pub flipped: Vec<usize>,
}

impl SyntheticStream {
    /// `<w, x>`, where `w[j]` weighs feature index `j + 1`.
    pub fn comparator_score(&self, x: &SparseVector) -> f64 {
        x.iter().map(|(i, v)| self.comparator[i as usize - 1] * v).sum()
    }

    pub fn comparator_sq_norm(&self) -> f64 {
        self.comparator.iter().map(|w| w * w).sum()
    }

    /// Rescales every instance into the unit ball (so the linear kernel
    /// satisfies `k(x, x) <= 1`) and the comparator inversely, preserving
    /// all scores.
    pub fn into_unit_ball(self) -> Result<Self> {
        let r = self.dataset.max_sq_norm().sqrt();
        if r <= 1.0 {
            return Ok(self);
        }
        Ok(Self {
            dataset: self.dataset.scaled(1.0 / r)?,
            comparator: self.comparator.iter().map(|w| w * r).collect(),
            flipped: self.flipped,
        })
    }
}

/// Two Gaussian clusters at `+-mu` along a random unit direction `u`.
///
/// Each example draws `y` uniformly, then `x = y c u + z` with
/// `z ~ N(0, 0.3^2 I)` and `c = margin + 0.6`; draws with `y <u, x> < margin`
/// are rejected and resampled. The comparator is `w = u / margin`, so
/// `y <w, x> >= 1` on every emitted example.
pub fn synth_separable(t: usize, d: usize, margin: f64, seed: u64) -> Result<SyntheticStream> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "margin must be positive, got {margin}"
        )));
    }
    if t == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = SplitMix64::new(seed);
    let mut u: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    u.iter_mut().for_each(|v| *v /= un);

    let center = margin + 2.0 * CLUSTER_SPREAD;
    let mut examples = Vec::with_capacity(t);
    while examples.len() < t {
        let y = if rng.next() >> 63 == 1 {
            Label::Positive
        } else {
            Label::Negative
        };
        let x: Vec<f64> = u
            .iter()
            .map(|&ui| {
                let z: f64 = StandardNormal.sample(&mut rng);
                y.value() * center * ui + CLUSTER_SPREAD * z
            })
            .collect();
        let proj: f64 = x.iter().zip(&u).map(|(a, b)| a * b).sum();
        if y.value() * proj < margin {
            continue;
        }
        // Feature j is stored at index j + 1, as LIBSVM files are 1-based.
        let x = SparseVector::from_pairs(x.iter().enumerate().map(|(j, &v)| (j as u32 + 1, v)))?;
        examples.push(LabeledExample::new(x, y));
    }
    Ok(SyntheticStream {
        dataset: Dataset::new(format!("synth-sep-{seed}"), examples)?,
        comparator: u.iter().map(|v| v / margin).collect(),
        flipped: Vec::new(),
    })
}

/// [`synth_separable`] with every label flipped independently with
/// probability `flip_prob`. Flips come from a separate substream, so
/// `flip_prob = 0` reproduces the separable stream exactly.
pub fn synth_noisy(
    t: usize,
    d: usize,
    margin: f64,
    flip_prob: f64,
    seed: u64,
) -> Result<SyntheticStream> {
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(Error::InvalidConfig(format!(
            "flip probability must lie in [0, 0.5), got {flip_prob}"
        )));
    }
    let mut s = synth_separable(t, d, margin, seed)?;
    let mut rng = SplitMix64::substream(seed, 2);
    for (i, ex) in s.dataset.examples.iter_mut().enumerate() {
        if rng.next_f64() < flip_prob {
            ex.y = ex.y.flipped();
            s.flipped.push(i);
        }
    }
    if flip_prob > 0.0 {
        s.dataset.name = format!("synth-noisy-{seed}");
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        parse_libsvm(text.as_bytes(), "t")
    }

    #[test]
    fn parses_basic_line() {
        let ds = parse("+1 1:0.5 3:2\n").unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.examples[0].y, Label::Positive);
        assert_eq!(ds.examples[0].x.indices(), &[1, 3]);
        assert_eq!(ds.examples[0].x.values(), &[0.5, 2.0]);
        assert_eq!(ds.feature_count, 4);
    }

    #[test]
    fn zero_one_labels() {
        let ds = parse("0 2:1\n1 2:1\n").unwrap();
        let ys: Vec<_> = ds.examples.iter().map(|e| e.y).collect();
        assert_eq!(ys, vec![Label::Negative, Label::Positive]);
    }

    #[test]
    fn one_two_labels_follow_order_rule() {
        let ds = parse("2 1:1\n1 1:1\n").unwrap();
        let ys: Vec<_> = ds.examples.iter().map(|e| e.y).collect();
        assert_eq!(ys, vec![Label::Positive, Label::Negative]);
    }

    #[test]
    fn signed_labels_kept_even_if_single_class() {
        let ds = parse("-1 1:1\n-1 2:1\n").unwrap();
        assert!(ds.examples.iter().all(|e| e.y == Label::Negative));
    }

    #[test]
    fn comments_and_blank_lines() {
        let ds = parse("# header\n\n+1 1:1 # trailing\n   \n-1 2:1\n").unwrap();
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn unsorted_indices_rejected() {
        assert!(matches!(
            parse("1 3:1 2:1\n"),
            Err(Error::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn bad_tokens_report_line() {
        assert!(matches!(
            parse("+1 1:1\n-1 x:1\n"),
            Err(Error::MalformedLine { line: 2, .. })
        ));
        assert!(matches!(parse("+1 1-1\n"), Err(Error::MalformedLine { .. })));
        assert!(matches!(parse("abc 1:1\n"), Err(Error::MalformedLine { .. })));
        assert!(matches!(parse("+1 1:nan\n"), Err(Error::MalformedLine { .. })));
    }

    #[test]
    fn three_labels_rejected() {
        assert!(matches!(
            parse("0 1:1\n1 1:1\n2 1:1\n"),
            Err(Error::NonBinaryLabels(_))
        ));
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse("# nothing\n\n"), Err(Error::EmptyDataset));
    }

    fn numbered(n: usize) -> Dataset {
        let ex = (0..n)
            .map(|i| {
                LabeledExample::new(
                    SparseVector::from_pairs([(0, i as f64 + 1.0)]).unwrap(),
                    if i % 2 == 0 { Label::Positive } else { Label::Negative },
                )
            })
            .collect();
        Dataset::new("n", ex).unwrap()
    }

    #[test]
    fn permutation_is_deterministic_and_seed_dependent() {
        let ds = numbered(100);
        let a = permute(&ds, 11);
        assert_eq!(a, permute(&ds, 11));
        let b = permute(&ds, 12);
        let c = if a == b { permute(&ds, 13) } else { b };
        assert_ne!(a.examples, c.examples);
        let key = |d: &Dataset| {
            let mut v: Vec<u64> = d.examples.iter().map(|e| e.x.values()[0].to_bits()).collect();
            v.sort();
            v
        };
        assert_eq!(key(&a), key(&ds));
    }

    #[test]
    fn subsample_cases() {
        let ds = numbered(20);
        let all = subsample(&ds, 20, 5).unwrap();
        assert_eq!(all, permute(&ds, 5));
        let one = subsample(&ds, 1, 5).unwrap();
        assert_eq!(one.len(), 1);
        assert!(ds.examples.contains(&one.examples[0]));
        assert!(matches!(
            subsample(&ds, 21, 5),
            Err(Error::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn separable_stream_has_margin() {
        let s = synth_separable(10, 5, 1.0, 3).unwrap();
        assert_eq!(s.dataset.len(), 10);
        for e in &s.dataset.examples {
            assert!(e.y.value() * s.comparator_score(&e.x) >= 1.0);
        }
        assert_eq!(s.dataset.examples, synth_separable(10, 5, 1.0, 3).unwrap().dataset.examples);
    }

    #[test]
    fn label_balance() {
        let s = synth_separable(1000, 4, 0.5, 8).unwrap();
        let pos = s.dataset.examples.iter().filter(|e| e.y == Label::Positive).count();
        assert!((400..=600).contains(&pos), "{pos}");
    }

    #[test]
    fn noisy_stream() {
        let base = synth_separable(2000, 4, 0.5, 21).unwrap();
        let zero = synth_noisy(2000, 4, 0.5, 0.0, 21).unwrap();
        assert_eq!(base.dataset.examples, zero.dataset.examples);
        let p = 0.1;
        let noisy = synth_noisy(2000, 4, 0.5, p, 21).unwrap();
        let flips = base
            .dataset
            .examples
            .iter()
            .zip(&noisy.dataset.examples)
            .filter(|(a, b)| a.y != b.y)
            .count();
        assert_eq!(flips, noisy.flipped.len());
        let mean = p * 2000.0;
        let sd = (2000.0 * p * (1.0 - p)).sqrt();
        assert!((flips as f64 - mean).abs() <= 3.0 * sd, "{flips}");
        assert!(synth_noisy(10, 2, 0.5, 0.5, 1).is_err());
    }

    #[test]
    fn unit_ball_rescaling_preserves_scores() {
        let s = synth_separable(50, 3, 0.5, 4).unwrap();
        let before: Vec<f64> = s.dataset.examples.iter().map(|e| s.comparator_score(&e.x)).collect();
        let n = s.into_unit_ball().unwrap();
        assert!(n.dataset.max_sq_norm() <= 1.0 + 1e-12);
        for (e, b) in n.dataset.examples.iter().zip(before) {
            assert!((n.comparator_score(&e.x) - b).abs() < 1e-9);
        }
    }
}
