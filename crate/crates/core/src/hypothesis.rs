//! Kernel expansions `f = sum_i alpha_i k(x_i, .)`.
//!
//! An [`Expansion`] owns its support examples, their coefficients, the Gram
//! matrix over the support and a cached value of `|f|^2 = alpha' K alpha`.
//! The Gram matrix grows by one row per insertion and shrinks by row/column
//! deletion; the cached squared norm is updated in O(1) on insert and scale
//! and is recomputed from scratch whenever terms are removed.

use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, LabeledExample, SparseVector};

/// Quadratic forms in `[-NEGATIVE_SLACK, 0)` are treated as rounding noise.
const NEGATIVE_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub example: LabeledExample,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct Expansion {
    spec: KernelSpec,
    terms: Vec<Term>,
    /// `gram[i][j] = k(x_i, x_j)`, kept square and in term order.
    gram: Vec<Vec<f64>>,
    sq_norm: f64,
}

impl Expansion {
    /// The zero hypothesis.
    pub fn new(spec: KernelSpec) -> Self {
        Self {
            spec,
            terms: Vec::new(),
            gram: Vec::new(),
            sq_norm: 0.0,
        }
    }

    /// Builds an expansion from `(example, coefficient)` pairs; zero
    /// coefficients are skipped.
    pub fn from_terms<I>(spec: KernelSpec, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (LabeledExample, f64)>,
    {
        let mut f = Self::new(spec);
        for (ex, alpha) in terms {
            if alpha != 0.0 {
                f.insert(ex, alpha)?;
            }
        }
        f.resync_norm()?;
        Ok(f)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.alpha).collect()
    }

    #[inline]
    pub fn gram(&self, i: usize, j: usize) -> f64 {
        self.gram[i][j]
    }

    /// Cached `|f|^2`.
    pub fn sq_norm(&self) -> f64 {
        self.sq_norm
    }

    /// Cached `|f|`.
    pub fn norm(&self) -> f64 {
        self.sq_norm.sqrt()
    }

    /// `[k(x_i, x)]_i` over the support, in term order.
    pub fn kernel_row(&self, x: &SparseVector) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| self.spec.eval(&t.example.x, x))
            .collect()
    }

    /// `f(x)`, given the kernel row of `x` against the support.
    pub fn evaluate_row(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.terms.len());
        self.terms.iter().zip(row).map(|(t, k)| t.alpha * k).sum()
    }

    /// `f(x) = sum_i alpha_i k(x_i, x)`.
    pub fn evaluate(&self, x: &SparseVector) -> f64 {
        self.terms
            .iter()
            .map(|t| t.alpha * self.spec.eval(&t.example.x, x))
            .sum()
    }

    /// `f(x_i)` for the `i`-th support instance, read off the cached Gram.
    pub fn evaluate_at_support(&self, i: usize) -> f64 {
        self.evaluate_row(&self.gram[i])
    }

    /// Appends `coeff * k(ex.x, .)`. Duplicate instances are kept as
    /// separate terms.
    pub fn insert(&mut self, ex: LabeledExample, coeff: f64) -> Result<()> {
        let row = self.kernel_row(&ex.x);
        let fx = self.evaluate_row(&row);
        self.insert_with_row(ex, coeff, row, fx)
    }

    /// Insert using a precomputed kernel row and `f(x)` for the new instance.
    pub(crate) fn insert_with_row(
        &mut self,
        ex: LabeledExample,
        coeff: f64,
        row: Vec<f64>,
        fx: f64,
    ) -> Result<()> {
        if coeff == 0.0 || !coeff.is_finite() {
            return Err(Error::InvalidCoefficient(coeff));
        }
        if row.len() != self.terms.len() {
            return Err(Error::DimensionMismatch(format!(
                "kernel row has {} entries for {} terms",
                row.len(),
                self.terms.len()
            )));
        }
        let kxx = self.spec.self_eval(&ex.x);
        for (g, &k) in self.gram.iter_mut().zip(&row) {
            g.push(k);
        }
        let mut new_row = row;
        new_row.push(kxx);
        self.gram.push(new_row);
        self.terms.push(Term { example: ex, alpha: coeff });
        // |f + c k(x,.)|^2 = |f|^2 + 2 c f(x) + c^2 k(x,x)
        self.sq_norm = (self.sq_norm + 2.0 * coeff * fx + coeff * coeff * kxx).max(0.0);
        Ok(())
    }

    /// Multiplies every coefficient by `c`; `c == 0` empties the expansion.
    pub fn scale(&mut self, c: f64) {
        if c == 0.0 {
            self.clear();
            return;
        }
        for t in &mut self.terms {
            t.alpha *= c;
        }
        self.sq_norm *= c * c;
    }

    pub fn clear(&mut self) {
        self.terms.clear();
        self.gram.clear();
        self.sq_norm = 0.0;
    }

    /// Projects onto the ball `{|f| <= radius}`. Returns the factor applied.
    pub fn project_ball(&mut self, radius: f64) -> f64 {
        debug_assert!(radius > 0.0);
        let norm = self.norm();
        if radius.is_infinite() || norm <= radius || norm == 0.0 {
            return 1.0;
        }
        let c = radius / norm;
        self.scale(c);
        // The cached value is the target; rescaling by c can miss it by an ulp.
        self.sq_norm = radius * radius;
        c
    }

    /// Rescales onto the sphere `{|f| = radius}`.
    ///
    /// Fails with [`Error::DegenerateProjection`] when `f == 0` and
    /// `radius > 0`.
    pub fn project_sphere(&mut self, radius: f64) -> Result<f64> {
        debug_assert!(radius >= 0.0);
        let norm = self.norm();
        if norm == 0.0 {
            if radius == 0.0 {
                return Ok(1.0);
            }
            return Err(Error::DegenerateProjection(radius));
        }
        let c = radius / norm;
        self.scale(c);
        if c != 0.0 {
            self.sq_norm = radius * radius;
        }
        Ok(c)
    }

    /// `sqrt(alpha' K alpha)` computed from the Gram matrix, ignoring the cache.
    pub fn recompute_norm(&self) -> Result<f64> {
        let q = self.quadratic_form();
        if q < -NEGATIVE_SLACK {
            return Err(Error::GramCorruption(q));
        }
        Ok(q.max(0.0).sqrt())
    }

    /// Recomputes the norm from scratch and resets the cache to it.
    pub fn resync_norm(&mut self) -> Result<f64> {
        let norm = self.recompute_norm()?;
        self.sq_norm = norm * norm;
        Ok(norm)
    }

    fn quadratic_form(&self) -> f64 {
        let n = self.terms.len();
        let mut q = 0.0;
        for i in 0..n {
            let row = &self.gram[i];
            let ai = self.terms[i].alpha;
            let mut s = 0.5 * row[i] * ai;
            for j in 0..i {
                s += row[j] * self.terms[j].alpha;
            }
            q += 2.0 * ai * s;
        }
        q
    }

    /// Keeps only the terms at `keep` (ascending positions) and replaces their
    /// coefficients with `alphas`. Terms whose new coefficient is zero are
    /// dropped. The norm cache is recomputed from scratch.
    pub fn retain_with_coefficients(&mut self, keep: &[usize], alphas: &[f64]) -> Result<()> {
        if keep.len() != alphas.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} positions but {} coefficients",
                keep.len(),
                alphas.len()
            )));
        }
        if keep.windows(2).any(|w| w[0] >= w[1]) || keep.last().is_some_and(|&k| k >= self.len())
        {
            return Err(Error::DimensionMismatch(
                "retained positions must be strictly increasing and in range".into(),
            ));
        }
        if let Some(&bad) = alphas.iter().find(|a| !a.is_finite()) {
            return Err(Error::InvalidCoefficient(bad));
        }
        let selected: Vec<usize> = keep
            .iter()
            .zip(alphas)
            .filter(|(_, &a)| a != 0.0)
            .map(|(&k, _)| k)
            .collect();
        let new_alphas: Vec<f64> = alphas.iter().copied().filter(|&a| a != 0.0).collect();

        let gram: Vec<Vec<f64>> = selected
            .iter()
            .map(|&i| selected.iter().map(|&j| self.gram[i][j]).collect())
            .collect();
        let mut old: Vec<Option<Term>> = std::mem::take(&mut self.terms)
            .into_iter()
            .map(Some)
            .collect();
        self.terms = selected
            .iter()
            .zip(new_alphas)
            .map(|(&i, alpha)| {
                let mut t = old[i].take().expect("positions are unique");
                t.alpha = alpha;
                t
            })
            .collect();
        self.gram = gram;
        self.resync_norm()?;
        Ok(())
    }

    /// Removes the term at `pos`, keeping the others' coefficients.
    pub fn remove(&mut self, pos: usize) -> Result<Term> {
        if pos >= self.len() {
            return Err(Error::DimensionMismatch(format!(
                "position {pos} out of range for {} terms",
                self.len()
            )));
        }
        let term = self.terms.remove(pos);
        self.gram.remove(pos);
        for row in &mut self.gram {
            row.remove(pos);
        }
        self.resync_norm()?;
        Ok(term)
    }

    /// `<self, other>` in the RKHS. Both expansions must share a kernel.
    pub fn inner(&self, other: &Expansion) -> f64 {
        debug_assert_eq!(self.spec, other.spec);
        other
            .terms
            .iter()
            .map(|t| t.alpha * self.evaluate(&t.example.x))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Label;

    fn ex(pairs: &[(u32, f64)], y: Label) -> LabeledExample {
        LabeledExample::new(SparseVector::from_pairs(pairs.iter().copied()).unwrap(), y)
    }

    fn gauss() -> KernelSpec {
        KernelSpec::gaussian(1.0).unwrap()
    }

    fn sample() -> Expansion {
        let mut f = Expansion::new(gauss());
        f.insert(ex(&[(0, 1.0)], Label::Positive), 0.7).unwrap();
        f.insert(ex(&[(1, 1.0)], Label::Negative), -0.4).unwrap();
        f.insert(ex(&[(0, 0.5), (1, 0.5)], Label::Positive), 1.3).unwrap();
        f
    }

    #[test]
    fn empty_expansion() {
        let f = Expansion::new(gauss());
        assert_eq!(f.evaluate(&SparseVector::empty()), 0.0);
        assert_eq!(f.recompute_norm().unwrap(), 0.0);
    }

    #[test]
    fn single_term() {
        let mut f = Expansion::new(gauss());
        let e = ex(&[(2, 0.3)], Label::Positive);
        f.insert(e.clone(), 2.0).unwrap();
        assert_eq!(f.evaluate(&e.x), 2.0);
        assert_eq!(f.sq_norm(), 4.0);
        let mut g = Expansion::new(gauss());
        g.insert(e, -3.0).unwrap();
        assert_eq!(g.recompute_norm().unwrap(), 3.0);
    }

    #[test]
    fn duplicate_terms_cancel_but_stay() {
        let mut f = Expansion::new(gauss());
        let e = ex(&[(0, 1.0)], Label::Positive);
        f.insert(e.clone(), 1.0).unwrap();
        f.insert(e, -1.0).unwrap();
        assert_eq!(f.len(), 2);
        assert!(f.sq_norm().abs() < 1e-12);
    }

    #[test]
    fn zero_coefficient_rejected() {
        let mut f = Expansion::new(gauss());
        assert_eq!(
            f.insert(ex(&[(0, 1.0)], Label::Positive), 0.0),
            Err(Error::InvalidCoefficient(0.0))
        );
    }

    #[test]
    fn scale_cases() {
        let f0 = sample();
        let mut f = f0.clone();
        f.scale(1.0);
        assert_eq!(f.alphas(), f0.alphas());
        assert_eq!(f.sq_norm(), f0.sq_norm());
        f.scale(-2.0);
        assert!((f.sq_norm() - 4.0 * f0.sq_norm()).abs() < 1e-12);
        f.scale(0.0);
        assert!(f.is_empty());
        assert_eq!(f.sq_norm(), 0.0);
    }

    #[test]
    fn ball_projection_cases() {
        let mut f = sample();
        let n = f.norm();
        let before = f.alphas();
        f.project_ball(2.0 * n);
        assert_eq!(f.alphas(), before);

        let mut f = sample();
        f.project_ball(n / 2.0);
        for (a, b) in f.alphas().iter().zip(&before) {
            assert!((a - b / 2.0).abs() < 1e-12);
        }
        assert!((f.recompute_norm().unwrap() - n / 2.0).abs() <= 1e-10 * n);

        let mut z = Expansion::new(gauss());
        z.project_ball(1.0);
        assert!(z.is_empty());
    }

    #[test]
    fn sphere_projection_cases() {
        let mut f = sample();
        let n = f.norm();
        let before = f.alphas();
        f.project_sphere(n).unwrap();
        for (a, b) in f.alphas().iter().zip(&before) {
            assert!((a - b).abs() < 1e-12);
        }
        f.project_sphere(n / 2.0).unwrap();
        for (a, b) in f.alphas().iter().zip(&before) {
            assert!((a - b / 2.0).abs() < 1e-12);
        }
        let mut z = Expansion::new(gauss());
        assert!(z.project_sphere(0.0).is_ok());
        assert_eq!(z.project_sphere(1.0), Err(Error::DegenerateProjection(1.0)));
    }

    #[test]
    fn retain_drops_zero_coefficients() {
        let mut f = sample();
        f.retain_with_coefficients(&[0, 2], &[0.0, 0.5]).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f.alphas(), vec![0.5]);
        assert!((f.sq_norm() - 0.25).abs() < 1e-15);
        assert!(f.retain_with_coefficients(&[1, 0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn remove_keeps_gram_consistent() {
        let mut f = sample();
        let t = f.remove(1).unwrap();
        assert_eq!(t.alpha, -0.4);
        assert_eq!(f.len(), 2);
        let k = gauss();
        let g01 = k.eval(&f.terms()[0].example.x, &f.terms()[1].example.x);
        assert_eq!(f.gram(0, 1), g01);
        assert_eq!(f.gram(1, 0), g01);
    }

    #[test]
    fn corrupted_gram_detected() {
        let mut f = sample();
        f.gram[0][2] = -5.0;
        f.gram[2][0] = -5.0;
        assert!(matches!(f.recompute_norm(), Err(Error::GramCorruption(_))));
    }

    #[test]
    fn inner_product_matches_norm() {
        let f = sample();
        assert!((f.inner(&f) - f.sq_norm()).abs() < 1e-12);
    }
}
