//! Dense and sparse kernels used throughout the solver.
//!
//! Everything here works on `nalgebra::DMatrix<f64>` for storage and
//! products. The factorizations (thin QR, symmetric eigensolve, polar) are
//! implemented in this module so that their sign conventions and ordering are
//! fixed and reproducible.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{QmpoError, Result};

pub type Mat = DMatrix<f64>;

/// Relative tolerance for the numerical rank reported by [`thin_qr`].
pub const RANK_TOL: f64 = 1e-12;

/// Compressed-sparse-row matrix. Column indices within a row are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets. Duplicate entries
    /// are summed; explicit zeros are kept.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(QmpoError::Dimension(format!(
                    "entry ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            sorted.push((i, j, v));
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("non-empty") += v;
                continue;
            }
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
            last = Some((i, j));
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_dense(a: &Mat) -> Self {
        let mut triplets = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let v = a[(i, j)];
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &triplets).expect("indices in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |p| (i, self.col_idx[p], self.values[p]))
        })
    }

    pub fn to_dense(&self) -> Mat {
        let mut a = Mat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            a[(i, j)] += v;
        }
        a
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// True when the sparsity pattern and values are symmetric to `tol`
    /// relative to the largest magnitude.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.nrows != self.ncols {
            return false;
        }
        let amax = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.triplets()
            .all(|(i, j, v)| (v - self.get(j, i)).abs() <= tol * amax.max(f64::MIN_POSITIVE))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.values[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    /// Y = A X for a dense block X.
    pub fn mul_dense(&self, x: &Mat) -> Mat {
        let p = x.ncols();
        // Row-major copy of X so the inner loop runs over contiguous columns.
        let xt = x.transpose();
        let xs = xt.as_slice();
        let mut yt = Mat::zeros(p, self.nrows);
        {
            let ys = yt.as_mut_slice();
            for i in 0..self.nrows {
                let yrow = &mut ys[i * p..(i + 1) * p];
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    let v = self.values[k];
                    let xrow = &xs[self.col_idx[k] * p..(self.col_idx[k] + 1) * p];
                    for (y, xv) in yrow.iter_mut().zip(xrow) {
                        *y += v * xv;
                    }
                }
            }
        }
        yt.transpose()
    }

    fn max_abs_row_sum(&self) -> f64 {
        (0..self.nrows)
            .map(|i| {
                self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

/// A symmetric linear operator Y ↦ HY.
#[derive(Debug, Clone)]
pub enum SymmetricOperator {
    Dense(Mat),
    Sparse(CsrMatrix),
    /// `H = AᵀA` for a data matrix `A` of shape m×n. The product is never formed.
    Gram(Mat),
}

impl SymmetricOperator {
    pub fn identity(n: usize) -> Self {
        SymmetricOperator::Dense(Mat::identity(n, n))
    }

    /// Wraps a dense matrix after checking symmetry.
    pub fn dense(a: Mat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(QmpoError::Dimension(format!(
                "operator must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let asym = asymmetry(&a);
        if asym > 1e-10 {
            return Err(QmpoError::Asymmetric(asym));
        }
        Ok(SymmetricOperator::Dense(a))
    }

    pub fn sparse(a: CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(QmpoError::Dimension(format!(
                "operator must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !a.is_symmetric(1e-12) {
            return Err(QmpoError::Asymmetric(f64::NAN));
        }
        Ok(SymmetricOperator::Sparse(a))
    }

    pub fn gram(a: Mat) -> Self {
        SymmetricOperator::Gram(a)
    }

    pub fn dim(&self) -> usize {
        match self {
            SymmetricOperator::Dense(a) => a.nrows(),
            SymmetricOperator::Sparse(a) => a.nrows(),
            SymmetricOperator::Gram(a) => a.ncols(),
        }
    }

    /// Applies the operator to a block without checking its shape.
    pub fn apply(&self, x: &Mat) -> Mat {
        match self {
            SymmetricOperator::Dense(a) => a * x,
            SymmetricOperator::Sparse(a) => a.mul_dense(x),
            SymmetricOperator::Gram(a) => a.tr_mul(&(a * x)),
        }
    }

    /// Multiplies the operator by a scalar in place.
    pub fn scale(&mut self, s: f64) {
        match self {
            SymmetricOperator::Dense(a) => *a *= s,
            SymmetricOperator::Sparse(a) => a.scale(s),
            // (√s A)ᵀ(√s A) = s AᵀA; a negative factor cannot be represented.
            SymmetricOperator::Gram(a) => {
                assert!(s >= 0.0, "gram operator can only be scaled by s >= 0");
                *a *= s.sqrt()
            }
        }
    }

    /// Upper bound on ‖H‖₂: maximum absolute row sum for explicit storage,
    /// ‖A‖₁‖A‖∞ for the gram form.
    pub fn norm_bound(&self) -> f64 {
        match self {
            SymmetricOperator::Dense(a) => (0..a.nrows())
                .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max),
            SymmetricOperator::Sparse(a) => a.max_abs_row_sum(),
            SymmetricOperator::Gram(a) => {
                let col = (0..a.ncols())
                    .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                let row = (0..a.nrows())
                    .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
                    .fold(0.0, f64::max);
                col * row
            }
        }
    }

    /// Materializes H. Only meant for oracles on small problems.
    pub fn to_dense(&self) -> Mat {
        match self {
            SymmetricOperator::Dense(a) => a.clone(),
            SymmetricOperator::Sparse(a) => a.to_dense(),
            SymmetricOperator::Gram(a) => a.tr_mul(a),
        }
    }
}

/// Returns HX, checking that X has n rows.
pub fn apply_sym(op: &SymmetricOperator, x: &Mat) -> Result<Mat> {
    if x.nrows() != op.dim() {
        return Err(QmpoError::Dimension(format!(
            "block has {} rows, operator dimension is {}",
            x.nrows(),
            op.dim()
        )));
    }
    Ok(op.apply(x))
}

/// (X + Xᵀ)/2
pub fn sym(x: &Mat) -> Mat {
    (x + x.transpose()) * 0.5
}

/// ‖A − Aᵀ‖_F / max(‖A‖_F, tiny)
pub fn asymmetry(a: &Mat) -> f64 {
    let nrm = a.norm();
    if nrm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / nrm
}

/// Frobenius inner product ⟨A, B⟩ = tr(AᵀB).
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

/// ‖AᵀA − I‖_F
pub fn orthonormality_error(a: &Mat) -> f64 {
    let p = a.ncols();
    (a.tr_mul(a) - Mat::identity(p, p)).norm()
}

/// Thin QR factors with a nonnegative diagonal on R.
#[derive(Debug, Clone)]
pub struct ThinQr {
    pub q: Mat,
    pub r: Mat,
    /// #{i : R_ii > RANK_TOL · R_11}
    pub rank: usize,
}

/// Householder thin QR of an n×p matrix (n ≥ p). Columns of Q are flipped so
/// that diag(R) ≥ 0.
pub fn thin_qr(a: &Mat) -> ThinQr {
    let (n, p) = a.shape();
    assert!(n >= p, "thin_qr needs n >= p, got {n}x{p}");
    let mut work = a.clone();
    let mut betas = vec![0.0; p];
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(p);

    for j in 0..p {
        let x: Vec<f64> = (j..n).map(|i| work[(i, j)]).collect();
        let alpha_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut v = x.clone();
        let mut beta = 0.0;
        if alpha_norm > 0.0 {
            let alpha = if x[0] >= 0.0 { -alpha_norm } else { alpha_norm };
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|t| t * t).sum();
            if vnorm2 > 0.0 {
                beta = 2.0 / vnorm2;
                for c in j..p {
                    let mut s = 0.0;
                    for (k, vk) in v.iter().enumerate() {
                        s += vk * work[(j + k, c)];
                    }
                    s *= beta;
                    for (k, vk) in v.iter().enumerate() {
                        work[(j + k, c)] -= s * vk;
                    }
                }
            }
        }
        betas[j] = beta;
        vs.push(v);
    }

    let mut r = Mat::zeros(p, p);
    for i in 0..p {
        for c in i..p {
            r[(i, c)] = work[(i, c)];
        }
    }

    // Q = H_0 H_1 ... H_{p-1} [I_p; 0]
    let mut q = Mat::zeros(n, p);
    for i in 0..p {
        q[(i, i)] = 1.0;
    }
    for j in (0..p).rev() {
        let v = &vs[j];
        let beta = betas[j];
        if beta == 0.0 {
            continue;
        }
        for c in 0..p {
            let mut s = 0.0;
            for (k, vk) in v.iter().enumerate() {
                s += vk * q[(j + k, c)];
            }
            s *= beta;
            for (k, vk) in v.iter().enumerate() {
                q[(j + k, c)] -= s * vk;
            }
        }
    }

    for i in 0..p {
        if r[(i, i)] < 0.0 {
            for c in i..p {
                r[(i, c)] = -r[(i, c)];
            }
            for k in 0..n {
                q[(k, i)] = -q[(k, i)];
            }
        }
    }

    let r11 = if p > 0 { r[(0, 0)] } else { 0.0 };
    let rank = if r11 > 0.0 {
        (0..p).filter(|&i| r[(i, i)] > RANK_TOL * r11).count()
    } else {
        0
    };
    ThinQr { q, r, rank }
}

/// Eigenvalues in descending order with matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl Spectrum {
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    pub fn min(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }
}

/// Symmetric eigensolve by Householder tridiagonalization followed by
/// implicit QL iterations.
pub fn sym_eig(a: &Mat) -> Result<Spectrum> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(QmpoError::Dimension(format!(
            "sym_eig needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let asym = asymmetry(a);
    if asym > 1e-10 {
        return Err(QmpoError::Asymmetric(asym));
    }
    if n == 0 {
        return Ok(Spectrum {
            values: vec![],
            vectors: Mat::zeros(0, 0),
        });
    }
    let mut v = sym(a);
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    tridiagonal_ql(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vectors.set_column(c, &v.column(i));
    }
    Ok(Spectrum { values, vectors })
}

// Householder reduction to tridiagonal form; on exit `v` holds the
// accumulated orthogonal transform, `d` the diagonal and `e` the subdiagonal
// in e[1..n].
fn tridiagonalize(v: &mut Mat, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

fn tridiagonal_ql(v: &mut Mat, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1 = 0.0f64;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(QmpoError::Singular(
                        "implicit QL iteration did not converge".into(),
                    ));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let hk = v[(k, i + 1)];
                        v[(k, i + 1)] = s * v[(k, i)] + c * hk;
                        v[(k, i)] = c * v[(k, i)] - s * hk;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Y = QS with Q orthonormal and S = (YᵀY)^{1/2} symmetric positive definite.
#[derive(Debug, Clone)]
pub struct Polar {
    pub q: Mat,
    pub s: Mat,
}

/// Polar decomposition of a full-column-rank p×s matrix, computed from the
/// eigendecomposition of YᵀY.
pub fn polar(y: &Mat) -> Result<Polar> {
    let (p, s) = y.shape();
    if p < s {
        return Err(QmpoError::Dimension(format!(
            "polar needs p >= s, got {p}x{s}"
        )));
    }
    let gram = sym(&y.tr_mul(y));
    let spec = sym_eig(&gram)?;
    let lmax = spec.max().max(0.0);
    let lmin = spec.min();
    // σ_min ≤ 1e-12 σ_max  ⇔  λ_min ≤ 1e-24 λ_max
    if lmax == 0.0 || lmin <= 1e-24 * lmax {
        return Err(QmpoError::Singular(format!(
            "polar factor undefined: sigma_min^2 = {lmin:.3e}, sigma_max^2 = {lmax:.3e}"
        )));
    }
    let w = &spec.vectors;
    let inv_sqrt = Mat::from_diagonal(&nalgebra::DVector::from_iterator(
        s,
        spec.values.iter().map(|l| 1.0 / l.sqrt()),
    ));
    let mut q = y * (w * inv_sqrt * w.transpose());
    // One Newton–Schulz sweep restores orthonormality lost to the squaring.
    let qtq = q.tr_mul(&q);
    q = &q * (Mat::identity(s, s) * 1.5 - qtq * 0.5);
    let smat = sym(&q.tr_mul(y));
    Ok(Polar { q, s: smat })
}

/// Singular values and vectors of a small matrix (p ≥ s), derived from the
/// eigendecomposition of YᵀY. Left vectors for zero singular values are
/// completed to an orthonormal set.
pub fn small_svd(y: &Mat) -> Result<(Mat, Vec<f64>, Mat)> {
    let (p, s) = y.shape();
    if p < s {
        return Err(QmpoError::Dimension(format!(
            "small_svd needs p >= s, got {p}x{s}"
        )));
    }
    let spec = sym_eig(&sym(&y.tr_mul(y)))?;
    let sigmas: Vec<f64> = spec.values.iter().map(|l| l.max(0.0).sqrt()).collect();
    let v = spec.vectors.clone();
    let mut u = y * &v;
    let smax = sigmas.first().copied().unwrap_or(0.0);
    let mut good = Vec::new();
    for (j, &sj) in sigmas.iter().enumerate() {
        if sj > 1e-12 * smax && sj > 0.0 {
            let mut col = u.column_mut(j);
            col /= sj;
            good.push(j);
        }
    }
    // Orthonormalize (fixes squaring loss) and complete the deficient columns.
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::new();
    for j in 0..s {
        let mut col: nalgebra::DVector<f64> = if good.contains(&j) {
            u.column(j).into_owned()
        } else {
            let mut c = nalgebra::DVector::zeros(p);
            // Deterministic candidate: the first coordinate vector with a
            // nonzero residual against the current basis.
            for t in 0..p {
                let mut e = nalgebra::DVector::zeros(p);
                e[t] = 1.0;
                for b in &basis {
                    let proj = b.dot(&e);
                    e -= b * proj;
                }
                if e.norm() > 0.5 {
                    c = e;
                    break;
                }
            }
            c
        };
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&col);
                col -= b * proj;
            }
        }
        let nrm = col.norm();
        col /= nrm;
        basis.push(col);
    }
    for (j, b) in basis.iter().enumerate() {
        u.set_column(j, b);
    }
    Ok((u, sigmas, v))
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm2(a: &Mat) -> Result<f64> {
    let spec = sym_eig(a)?;
    Ok(spec.max().abs().max(spec.min().abs()))
}

/// Largest singular value of a general matrix.
pub fn norm2(a: &Mat) -> Result<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(0.0);
    }
    let g = if a.nrows() >= a.ncols() {
        a.tr_mul(a)
    } else {
        a * a.transpose()
    };
    Ok(sym_eig(&sym(&g))?.max().max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn apply_identity_and_diagonal() {
        let x = dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 6.0];
        let op = SymmetricOperator::identity(3);
        assert_eq!(apply_sym(&op, &x).unwrap(), x);

        let d = SymmetricOperator::dense(Mat::from_diagonal(&nalgebra::dvector![1.0, 2.0, 3.0]))
            .unwrap();
        let e2 = dmatrix![0.0; 1.0; 0.0];
        assert_eq!(apply_sym(&d, &e2).unwrap(), dmatrix![0.0; 2.0; 0.0]);
    }

    #[test]
    fn apply_gram_matches_hand_product() {
        let a = dmatrix![1.0, 0.0; 0.0, 2.0];
        let op = SymmetricOperator::gram(a);
        let y = apply_sym(&op, &Mat::identity(2, 2)).unwrap();
        assert_eq!(y, dmatrix![1.0, 0.0; 0.0, 4.0]);
    }

    #[test]
    fn apply_rejects_wrong_rows() {
        let op = SymmetricOperator::identity(3);
        assert!(matches!(
            apply_sym(&op, &Mat::zeros(2, 1)),
            Err(QmpoError::Dimension(_))
        ));
    }

    #[test]
    fn sparse_matches_dense() {
        let a = dmatrix![2.0, 0.0, 1.0; 0.0, 0.0, -3.0; 1.0, -3.0, 5.0];
        let csr = CsrMatrix::from_dense(&a);
        assert_eq!(csr.nnz(), 6);
        let x = dmatrix![1.0, -1.0; 2.0, 0.5; 3.0, 0.0];
        assert!((csr.mul_dense(&x) - &a * &x).norm() < 1e-15);
        assert!(csr.is_symmetric(0.0));
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let c = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.5), (1, 0, 3.5)]).unwrap();
        assert_eq!(c.nnz(), 2);
        assert_eq!(c.get(0, 1), 3.5);
    }

    #[test]
    fn qr_examples() {
        let f = thin_qr(&Mat::identity(3, 3));
        assert!((f.q.clone() - Mat::identity(3, 3)).norm() < 1e-15);
        assert!((f.r - Mat::identity(3, 3)).norm() < 1e-15);
        assert_eq!(f.rank, 3);

        let f = thin_qr(&dmatrix![3.0; 4.0]);
        assert!((f.q - dmatrix![0.6; 0.8]).norm() < 1e-15);
        assert!((f.r[(0, 0)] - 5.0).abs() < 1e-15);

        let v = dmatrix![0.6; 0.0; 0.8];
        let a = Mat::from_columns(&[v.column(0), (v.clone() * 2.0).column(0)]);
        assert_eq!(thin_qr(&a).rank, 1);
    }

    #[test]
    fn qr_zero_matrix_has_rank_zero() {
        let f = thin_qr(&Mat::zeros(4, 2));
        assert_eq!(f.rank, 0);
    }

    #[test]
    fn polar_examples() {
        let y = dmatrix![0.6, 0.0; 0.8, 0.0; 0.0, 1.0];
        let p = polar(&y).unwrap();
        assert!((p.q - &y).norm() < 1e-12);
        assert!((p.s - Mat::identity(2, 2)).norm() < 1e-12);

        let p = polar(&(Mat::identity(2, 2) * 2.0)).unwrap();
        assert!((p.q - Mat::identity(2, 2)).norm() < 1e-12);
        assert!((p.s - Mat::identity(2, 2) * 2.0).norm() < 1e-12);

        let p = polar(&dmatrix![0.0, -2.0; 2.0, 0.0]).unwrap();
        assert!((p.s - Mat::identity(2, 2) * 2.0).norm() < 1e-12);
        assert!((p.q - dmatrix![0.0, -1.0; 1.0, 0.0]).norm() < 1e-12);
    }

    #[test]
    fn polar_rejects_rank_deficient() {
        let y = dmatrix![1.0, 2.0; 2.0, 4.0; 0.0, 0.0];
        assert!(matches!(polar(&y), Err(QmpoError::Singular(_))));
    }

    #[test]
    fn eig_examples() {
        let s = sym_eig(&Mat::from_diagonal(&nalgebra::dvector![3.0, 1.0, 2.0])).unwrap();
        assert_eq!(s.values, vec![3.0, 2.0, 1.0]);

        let s = sym_eig(&dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        assert!((s.values[0] - 1.0).abs() < 1e-15);
        assert!((s.values[1] + 1.0).abs() < 1e-15);

        let s = sym_eig(&Mat::identity(4, 4)).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(orthonormality_error(&s.vectors) < 1e-14);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        assert!(matches!(
            sym_eig(&dmatrix![0.0, 1.0; 0.0, 0.0]),
            Err(QmpoError::Asymmetric(_))
        ));
    }

    #[test]
    fn svd_of_rank_deficient_square() {
        let y = dmatrix![1.0, 0.0; 0.0, 0.0];
        let (u, s, v) = small_svd(&y).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-14 && s[1].abs() < 1e-14);
        assert!(orthonormality_error(&u) < 1e-14);
        let sig = Mat::from_diagonal(&nalgebra::DVector::from_vec(s));
        assert!((u * sig * v.transpose() - y).norm() < 1e-14);
    }
}
