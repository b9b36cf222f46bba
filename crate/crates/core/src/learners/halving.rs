//! Budget maintenance by halving and projection.

use crate::error::{Error, Result};
use crate::hypothesis::Expansion;
use crate::solver::{solve_theta_with_retry, Matrix, ProjectionProblem};

/// Positions of the removal half and of the surviving half, each ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub removed: Vec<usize>,
    pub survivors: Vec<usize>,
}

/// Splits `alphas` into two equal halves so that every survivor has
/// `|alpha|` at least as large as every removed term. Ties go to the removal
/// half in insertion order (older first).
pub fn split_active_set(alphas: &[f64]) -> Result<Split> {
    let n = alphas.len();
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "cannot halve an active set of size {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps insertion order among equal magnitudes.
    order.sort_by(|&a, &b| alphas[a].abs().total_cmp(&alphas[b].abs()));
    let mut removed = order[..n / 2].to_vec();
    let mut survivors = order[n / 2..].to_vec();
    removed.sort_unstable();
    survivors.sort_unstable();
    Ok(Split { removed, survivors })
}

/// Summary of one halving event.
#[derive(Clone, Debug, PartialEq)]
pub struct Halving {
    pub split: Split,
    /// `|f_t - fbar_t|` in the RKHS.
    pub distance: f64,
    /// Regularizer that the projection solve finally used.
    pub eta_used: f64,
    /// The survivors plus projected mass had zero norm, so `fbar_t = 0`.
    pub degenerate: bool,
    pub survivor_min_abs: f64,
    pub removed_max_abs: f64,
}

/// Replaces `f` by `fbar`: the survivors' half plus (optionally) the
/// projection of the removed half onto their span, rescaled to norm
/// `target_radius`.
pub fn halve(f: &mut Expansion, eta: f64, project: bool, target_radius: f64) -> Result<Halving> {
    let alphas = f.alphas();
    let split = split_active_set(&alphas)?;
    let s1 = &split.removed;
    let s2 = &split.survivors;
    let alpha1: Vec<f64> = s1.iter().map(|&i| alphas[i]).collect();
    let alpha2: Vec<f64> = s2.iter().map(|&i| alphas[i]).collect();

    let (theta, eta_used) = if project {
        let k2 = Matrix::from_fn(s2.len(), s2.len(), |i, j| f.gram(s2[i], s2[j]));
        let k21 = Matrix::from_fn(s2.len(), s1.len(), |i, k| f.gram(s2[i], s1[k]));
        let problem = ProjectionProblem::new(k2, k21, alpha1.clone(), eta)?;
        solve_theta_with_retry(&problem)?
    } else {
        (vec![0.0; s2.len()], eta)
    };

    let mut beta: Vec<f64> = alpha2.iter().zip(&theta).map(|(a, t)| a + t).collect();
    let mut sq = 0.0;
    for (i, &bi) in beta.iter().enumerate() {
        let mut s = 0.0;
        for (j, &bj) in beta.iter().enumerate() {
            s += f.gram(s2[i], s2[j]) * bj;
        }
        sq += bi * s;
    }
    let norm = sq.max(0.0).sqrt();
    let degenerate = norm == 0.0;
    if degenerate {
        beta.iter_mut().for_each(|b| *b = 0.0);
    } else {
        let c = target_radius / norm;
        beta.iter_mut().for_each(|b| *b *= c);
    }

    // |f - fbar|^2 = |f|^2 - 2 <f, fbar> + |fbar|^2, with <f, fbar> read off
    // the full Gram before the removed half is discarded.
    let f_sq = f.sq_norm();
    let cross: f64 = s2
        .iter()
        .zip(&beta)
        .map(|(&i, &b)| b * f.evaluate_at_support(i))
        .sum();
    let fbar_sq = if degenerate { 0.0 } else { target_radius * target_radius };
    let distance = (f_sq - 2.0 * cross + fbar_sq).max(0.0).sqrt();

    let survivor_min_abs = alpha2.iter().fold(f64::INFINITY, |m, a| m.min(a.abs()));
    let removed_max_abs = alpha1.iter().fold(0.0f64, |m, a| m.max(a.abs()));

    f.retain_with_coefficients(s2, &beta)?;
    if !degenerate && target_radius > 0.0 {
        // The scratch norm after retain should already match the target.
        f.project_sphere(target_radius)?;
    }

    Ok(Halving {
        split,
        distance,
        eta_used,
        degenerate,
        survivor_min_abs,
        removed_max_abs,
    })
}
