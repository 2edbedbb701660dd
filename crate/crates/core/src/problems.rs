//! Problem builders: sparse synthetic instances, orthogonal least squares
//! regression and graph-based clustering embeddings.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::driver::QmpoProblem;
use crate::error::{QmpoError, Result};
use crate::linalg::{CsrMatrix, Mat, SymmetricOperator};
use crate::mtx::{read_labels, read_matrix_market};

/// `H = B + Bᵀ` with `B` holding `round(density·n²)` uniform(0,1) values at
/// uniformly random positions (duplicates summed), and `G` standard normal.
pub fn gen_synthetic(n: usize, l: usize, density: f64, seed: u64) -> Result<QmpoProblem> {
    if !(0.0..=1.0).contains(&density) {
        return Err(QmpoError::Config(format!(
            "density must lie in [0, 1], got {density}"
        )));
    }
    if l == 0 || n <= l {
        return Err(QmpoError::Dimension(format!(
            "need n > l >= 1, got n = {n}, l = {l}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nnz = (density * (n as f64) * (n as f64)).round() as usize;
    let mut triplets = Vec::with_capacity(2 * nnz);
    for _ in 0..nnz {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        let v: f64 = rng.random();
        triplets.push((i, j, v));
        triplets.push((j, i, v));
    }
    let h = CsrMatrix::from_triplets(n, n, &triplets)?;
    let g = Mat::from_fn(n, l, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(QmpoProblem::new(SymmetricOperator::sparse(h)?, g)?
        .with_name(format!("synthetic-n{n}-l{l}-d{density}-s{seed}")))
}

/// Samples as columns of `x` (features × samples) with labels in `1..=classes`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub x: Mat,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl LabeledDataset {
    pub fn new(x: Mat, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.ncols() {
            return Err(QmpoError::Dimension(format!(
                "{} labels for {} samples",
                labels.len(),
                x.ncols()
            )));
        }
        let classes = labels.iter().copied().max().unwrap_or(0);
        if labels.contains(&0) {
            return Err(QmpoError::Config("labels are 1-based; found 0".into()));
        }
        if classes == 0 || x.ncols() < classes {
            return Err(QmpoError::Config(format!(
                "{} samples cannot cover {classes} classes",
                x.ncols()
            )));
        }
        Ok(Self { x, labels, classes })
    }

    /// Reads a features × samples Matrix Market file and a labels file.
    pub fn from_files(data: &Path, labels: &Path) -> Result<Self> {
        let x = read_matrix_market(data)?.to_dense();
        Self::new(x, read_labels(labels)?)
    }

    pub fn samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn features(&self) -> usize {
        self.x.nrows()
    }
}

/// Subtracts the mean of every column.
pub fn center_columns(a: &Mat) -> Mat {
    let mut out = a.clone();
    let m = a.nrows() as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Orthogonal least squares regression on a random training split:
/// `H = ÃᵀÃ` (kept in gram form) and `G = ÃᵀB̃`, where Ã is the centered
/// samples × features training block and B̃ the centered class indicator.
pub fn build_olsr(dataset: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<QmpoProblem> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(QmpoError::Config(format!(
            "train_fraction must lie in (0, 1], got {train_fraction}"
        )));
    }
    let m = dataset.samples();
    let take = ((train_fraction * m as f64).round() as usize).clamp(1, m);
    let mut idx: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(take);
    idx.sort_unstable();

    let mut present = vec![false; dataset.classes];
    for &i in &idx {
        present[dataset.labels[i] - 1] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(QmpoError::Degenerate(format!(
            "training split of {take} samples holds a single class; use another seed or a larger train fraction"
        )));
    }

    let n = dataset.features();
    let l = dataset.classes;
    let a_hat = Mat::from_fn(take, n, |r, c| dataset.x[(c, idx[r])]);
    let b_hat = Mat::from_fn(take, l, |r, c| {
        if dataset.labels[idx[r]] == c + 1 {
            1.0
        } else {
            0.0
        }
    });
    let a = center_columns(&a_hat);
    let g = a.tr_mul(&center_columns(&b_hat));
    Ok(QmpoProblem::new(SymmetricOperator::gram(a), g)?
        .with_name(format!("olsr-n{n}-l{l}-train{take}-s{seed}")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    /// Heat-kernel width.
    pub t: f64,
    /// Weight of the indicator term.
    pub gamma: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { t: 0.1, gamma: 0.1 }
    }
}

/// Largest sample count accepted by [`build_gcsed`]; the kernel is dense.
pub const GCSED_MAX_SAMPLES: usize = 30_000;

/// Cluster indicator (samples × classes) from 1-based labels.
pub fn indicator_from_labels(labels: &[usize], classes: usize) -> Result<Mat> {
    let mut y = Mat::zeros(labels.len(), classes);
    for (i, &c) in labels.iter().enumerate() {
        if c == 0 || c > classes {
            return Err(QmpoError::Config(format!(
                "label {c} outside 1..={classes}"
            )));
        }
        y[(i, c - 1)] = 1.0;
    }
    Ok(y)
}

/// Heat-kernel weights `W_ij = exp(−‖x_i − x_j‖²/(2t²))`, self loops included.
pub fn heat_kernel(x: &Mat, t: f64) -> Mat {
    let gram = x.tr_mul(x);
    let m = x.ncols();
    let denom = 2.0 * t * t;
    Mat::from_fn(m, m, |i, j| {
        let d2 = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0);
        (-d2 / denom).exp()
    })
}

/// Graph embedding problem on the samples of `dataset`:
/// `H = −D^{-1/2} W D^{-1/2}`, `G = −γ D^{1/2} Y (YᵀDY)^{-1/2}`.
pub fn build_gcsed(dataset: &LabeledDataset, cfg: GraphConfig, y: &Mat) -> Result<QmpoProblem> {
    if !(cfg.t > 0.0 && cfg.gamma > 0.0) {
        return Err(QmpoError::Config("t and gamma must be positive".into()));
    }
    let m = dataset.samples();
    if m > GCSED_MAX_SAMPLES {
        return Err(QmpoError::Config(format!(
            "{m} samples exceed the dense kernel limit of {GCSED_MAX_SAMPLES}"
        )));
    }
    gcsed_from_weights(heat_kernel(&dataset.x, cfg.t), y, cfg.gamma)
}

/// [`build_gcsed`] for a precomputed symmetric weight matrix.
pub fn gcsed_from_weights(w: Mat, y: &Mat, gamma: f64) -> Result<QmpoProblem> {
    let m = w.nrows();
    if w.ncols() != m || y.nrows() != m {
        return Err(QmpoError::Dimension(format!(
            "W is {}x{}, Y has {} rows",
            w.nrows(),
            w.ncols(),
            y.nrows()
        )));
    }
    for (i, row) in y.row_iter().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != y.ncols() {
            return Err(QmpoError::Config(format!(
                "row {i} of Y is not a cluster indicator"
            )));
        }
    }
    let d: Vec<f64> = w.row_iter().map(|r| r.sum()).collect();
    if let Some(i) = d.iter().position(|&di| di <= 0.0) {
        return Err(QmpoError::Degenerate(format!(
            "vertex {i} is isolated (degree {})",
            d[i]
        )));
    }
    let h = Mat::from_fn(m, m, |i, j| -w[(i, j)] / (d[i] * d[j]).sqrt());
    // YᵀDY is diagonal: the total degree of each cluster.
    let mut mass = vec![0.0; y.ncols()];
    for (i, row) in y.row_iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            mass[c] += v * d[i];
        }
    }
    if let Some(c) = mass.iter().position(|&v| v <= 0.0) {
        return Err(QmpoError::Degenerate(format!("cluster {} is empty", c + 1)));
    }
    let g = Mat::from_fn(m, y.ncols(), |i, c| {
        -gamma * d[i].sqrt() * y[(i, c)] / mass[c].sqrt()
    });
    let h = crate::linalg::sym(&h);
    Ok(QmpoProblem::new(SymmetricOperator::dense(h)?, g)?.with_name(format!("gcsed-m{m}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_error, sym_eig};
    use nalgebra::dmatrix;

    #[test]
    fn synthetic_is_deterministic_and_symmetric() {
        let a = gen_synthetic(50, 3, 0.05, 7).unwrap();
        let b = gen_synthetic(50, 3, 0.05, 7).unwrap();
        assert_eq!(a.g, b.g);
        assert_eq!(a.h.to_dense(), b.h.to_dense());
        let h = a.h.to_dense();
        assert_eq!(h, h.transpose());
        assert!(h.iter().all(|&v| (0.0..2.0 * 125.0).contains(&v)));
    }

    #[test]
    fn zero_density_gives_zero_h() {
        let p = gen_synthetic(10, 2, 0.0, 1).unwrap();
        assert_eq!(p.h.to_dense(), Mat::zeros(10, 10));
    }

    #[test]
    fn olsr_two_samples_by_hand() {
        // Three features; samples (1, 0, 2) in class 1 and (3, 0, 2) in class 2.
        let ds = LabeledDataset::new(dmatrix![1.0, 3.0; 0.0, 0.0; 2.0, 2.0], vec![1, 2]).unwrap();
        let p = build_olsr(&ds, 1.0, 0).unwrap();
        // Ã = [[-1, 0, 0], [1, 0, 0]], B̃ = [[0.5, -0.5], [-0.5, 0.5]].
        let h = p.h.to_dense();
        assert!((h - Mat::from_diagonal(&nalgebra::dvector![2.0, 0.0, 0.0])).norm() < 1e-15);
        assert!((p.g - dmatrix![-1.0, 1.0; 0.0, 0.0; 0.0, 0.0]).norm() < 1e-15);
    }

    #[test]
    fn olsr_single_class_split_is_degenerate() {
        let ds = LabeledDataset::new(dmatrix![1.0, 2.0, 3.0, 4.0], vec![1, 1, 1, 2]).unwrap();
        // A one-sample split always holds a single class.
        assert!(matches!(
            build_olsr(&ds, 0.25, 3),
            Err(QmpoError::Degenerate(_))
        ));
    }

    #[test]
    fn centering_is_idempotent() {
        let a = dmatrix![1.0, 5.0; 2.0, -1.0; 7.0, 0.5];
        let c = center_columns(&a);
        assert!((center_columns(&c) - &c).norm() < 1e-14);
    }

    #[test]
    fn gcsed_identical_points() {
        let ds = LabeledDataset::new(dmatrix![0.3, 0.3], vec![1, 1]).unwrap();
        let y = dmatrix![1.0; 1.0];
        let w = heat_kernel(&ds.x, 0.7);
        assert_eq!(w, Mat::from_element(2, 2, 1.0));
        let w_hat = -gcsed_from_weights(w, &y, 1.0).unwrap().h.to_dense();
        assert!((w_hat - Mat::from_element(2, 2, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn gcsed_indicator_is_orthonormal_and_spectrum_bounded() {
        let x = dmatrix![0.0, 0.1, 0.5, 0.55, 0.9; 0.0, 0.05, 0.4, 0.5, 1.0];
        let ds = LabeledDataset::new(x, vec![1, 1, 2, 2, 2]).unwrap();
        let y = indicator_from_labels(&ds.labels, 2).unwrap();
        let cfg = GraphConfig { t: 0.3, gamma: 1.0 };
        let p = build_gcsed(&ds, cfg, &y).unwrap();
        // G = −C with γ = 1, so CᵀC = I.
        assert!(orthonormality_error(&p.g) < 1e-10);
        let spec = sym_eig(&(-p.h.to_dense())).unwrap();
        assert!(spec.max() <= 1.0 + 1e-10);
    }

    #[test]
    fn gcsed_isolated_vertex() {
        let w = dmatrix![1.0, 0.0; 0.0, 0.0];
        let y = dmatrix![1.0, 0.0; 0.0, 1.0];
        assert!(matches!(
            gcsed_from_weights(w, &y, 1.0),
            Err(QmpoError::Degenerate(_))
        ));
    }
}
