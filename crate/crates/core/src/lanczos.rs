//! Block Lanczos process with full reorthogonalization.
//!
//! Starting from the economized QR factorization `G = V₁K`, the process
//! builds an orthonormal basis `𝐕_k = [V₁, …, V_k]` of the block Krylov
//! subspace `span{V₁, HV₁, …, H^{k−1}V₁}` through the three-term recurrence
//!
//! ```text
//! L_k = H V_k − V_k M_k − V_{k−1} N_{k−1}ᵀ = V_{k+1} N_k,
//! ```
//!
//! so that `H𝐕_k = 𝐕_k T_k + V_{k+1} N_k E_ℓᵀ` with `T_k` block tridiagonal.
//!
//! The state stores `V₁..V_k`, `M₁..M_k` and `N₁..N_{k−1}`. The relation at
//! order `q` needs the look-ahead pair `(V_{q+1}, N_q)`, so while the process
//! is running the largest *closed* order is `k − 1`; after termination
//! (`L_k = 0`, invariant subspace) it is `k` with `N_k = 0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{QmpoError, Result};
use crate::linalg::{apply_sym, sym, thin_qr, Mat, SymmetricOperator, RANK_TOL};

/// Relative threshold on ‖L_k‖_F for declaring an invariant subspace.
pub const BREAKDOWN_TOL: f64 = 1e-12;

/// Block tridiagonal projection `T_q = 𝐕_qᵀ H 𝐕_q`.
#[derive(Debug, Clone)]
pub struct BlockTridiagonal {
    pub block_size: usize,
    pub diag: Vec<Mat>,
    pub offdiag: Vec<Mat>,
}

impl BlockTridiagonal {
    pub fn order(&self) -> usize {
        self.diag.len() * self.block_size
    }

    pub fn to_dense(&self) -> Mat {
        let l = self.block_size;
        let m = self.order();
        let mut t = Mat::zeros(m, m);
        for (j, mj) in self.diag.iter().enumerate() {
            t.view_mut((j * l, j * l), (l, l)).copy_from(mj);
        }
        for (j, nj) in self.offdiag.iter().enumerate() {
            t.view_mut(((j + 1) * l, j * l), (l, l)).copy_from(nj);
            t.view_mut((j * l, (j + 1) * l), (l, l))
                .copy_from(&nj.transpose());
        }
        t
    }
}

#[derive(Debug, Clone)]
pub struct BlockLanczos {
    block_size: usize,
    blocks: Vec<Mat>,
    diag: Vec<Mat>,
    offdiag: Vec<Mat>,
    k_factor: Mat,
    last_hv: Mat,
    terminated: bool,
    norm_estimate: f64,
    deflated_columns: usize,
    rng: ChaCha8Rng,
}

impl BlockLanczos {
    /// Factors `G = V₁K` and forms `M₁ = V₁ᵀHV₁`.
    pub fn init(h: &SymmetricOperator, g: &Mat, seed: u64) -> Result<Self> {
        let (n, l) = g.shape();
        if h.dim() != n {
            return Err(QmpoError::Dimension(format!(
                "G has {n} rows, operator dimension is {}",
                h.dim()
            )));
        }
        if l == 0 || n <= l {
            return Err(QmpoError::Dimension(format!(
                "need n > l >= 1, got n = {n}, l = {l}"
            )));
        }
        if g.iter().all(|v| *v == 0.0) {
            return Err(QmpoError::Degenerate(
                "G = 0; solve the eigenvalue problem on H instead".into(),
            ));
        }
        let qr = thin_qr(g);
        let v1 = qr.q;
        let hv = apply_sym(h, &v1)?;
        let m1 = sym(&v1.tr_mul(&hv));
        let norm_estimate = m1.amax();
        Ok(Self {
            block_size: l,
            blocks: vec![v1],
            diag: vec![m1],
            offdiag: Vec::new(),
            k_factor: qr.r,
            last_hv: hv,
            terminated: false,
            norm_estimate,
            deflated_columns: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// Number of basis blocks.
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated
    }

    /// Largest order `q` for which `(T_q, N_q)` and the Lanczos relation are
    /// available.
    pub fn closed_order(&self) -> usize {
        if self.terminated {
            self.k()
        } else {
            self.k() - 1
        }
    }

    pub fn k_factor(&self) -> &Mat {
        &self.k_factor
    }

    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn diag_blocks(&self) -> &[Mat] {
        &self.diag
    }

    pub fn offdiag_blocks(&self) -> &[Mat] {
        &self.offdiag
    }

    /// Columns replaced by random directions after partial breakdowns.
    pub fn deflated_columns(&self) -> usize {
        self.deflated_columns
    }

    pub fn norm_estimate(&self) -> f64 {
        self.norm_estimate
    }

    /// `N_q`, or zero when `q` is the terminal order.
    pub fn coupling(&self, q: usize) -> Mat {
        if q >= 1 && q <= self.offdiag.len() {
            self.offdiag[q - 1].clone()
        } else {
            Mat::zeros(self.block_size, self.block_size)
        }
    }

    /// One step of the block recurrence. Computes `L_k`, reorthogonalizes it
    /// twice against the whole basis and factors it into `V_{k+1} N_k`.
    pub fn extend(&mut self, h: &SymmetricOperator) -> Result<()> {
        if self.terminated {
            return Err(QmpoError::Contract(
                "extend called after the Lanczos process terminated".into(),
            ));
        }
        let k = self.k();
        let vk = &self.blocks[k - 1];
        let mut lk = &self.last_hv - vk * &self.diag[k - 1];
        if k >= 2 {
            lk -= &self.blocks[k - 2] * self.offdiag[k - 2].transpose();
        }
        for _ in 0..2 {
            for vj in &self.blocks {
                let c = vj.tr_mul(&lk);
                lk -= vj * c;
            }
        }

        let abs_tol = BREAKDOWN_TOL * (1.0 + self.norm_estimate);
        if lk.norm() <= abs_tol {
            self.terminated = true;
            return Ok(());
        }

        let col_max = (0..lk.ncols())
            .map(|j| lk.column(j).norm())
            .fold(0.0, f64::max);
        let col_tol = abs_tol.max(RANK_TOL * col_max);
        let qr = thin_qr(&lk);
        let full_rank = (0..self.block_size).all(|i| qr.r[(i, i)] > col_tol);
        let (mut vnext, mut nk) = if full_rank {
            (qr.q, qr.r)
        } else {
            self.deflating_factor(&lk, col_tol)
        };
        // Normalizing a nearly dependent L amplifies whatever basis component
        // survived; one more pass and a refactorization V' R' = V keep the
        // block orthogonal, with N ← R'N.
        for vj in &self.blocks {
            let c = vj.tr_mul(&vnext);
            vnext -= vj * c;
        }
        let re = thin_qr(&vnext);
        vnext = re.q;
        nk = re.r * nk;

        let hv = apply_sym(h, &vnext)?;
        let mnext = sym(&vnext.tr_mul(&hv));
        self.norm_estimate = self.norm_estimate.max(mnext.amax()).max(nk.amax());
        self.blocks.push(vnext);
        self.diag.push(mnext);
        self.offdiag.push(nk);
        self.last_hv = hv;
        Ok(())
    }

    // Gram–Schmidt factorization of L that keeps independent columns and
    // replaces dependent ones by random directions orthogonal to both the
    // basis and range(L); the matching rows of N are zero.
    fn deflating_factor(&mut self, lk: &Mat, col_tol: f64) -> (Mat, Mat) {
        let (n, l) = lk.shape();
        let mut q = Mat::zeros(n, l);
        let mut r = Mat::zeros(l, l);
        let mut accepted: Vec<usize> = Vec::new();
        let mut deficient: Vec<usize> = Vec::new();
        for j in 0..l {
            let mut c = lk.column(j).into_owned();
            for _ in 0..2 {
                for &i in &accepted {
                    let proj = q.column(i).dot(&c);
                    r[(i, j)] += proj;
                    c -= q.column(i) * proj;
                }
            }
            let nrm = c.norm();
            if nrm > col_tol {
                r[(j, j)] = nrm;
                q.set_column(j, &(c / nrm));
                accepted.push(j);
            } else {
                deficient.push(j);
            }
        }
        for &j in &deficient {
            let mut c =
                nalgebra::DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut self.rng));
            for _ in 0..2 {
                for vj in &self.blocks {
                    let proj = vj.tr_mul(&c);
                    c -= vj * proj;
                }
                for &i in accepted.iter() {
                    let proj = q.column(i).dot(&c);
                    c -= q.column(i) * proj;
                }
            }
            let nrm = c.norm();
            q.set_column(j, &(c / nrm));
            accepted.push(j);
            self.deflated_columns += 1;
        }
        (q, r)
    }

    /// `T_q` for `1 ≤ q ≤ k`.
    pub fn tridiagonal(&self, q: usize) -> BlockTridiagonal {
        assert!(
            q >= 1 && q <= self.k(),
            "order {q} outside 1..={}",
            self.k()
        );
        BlockTridiagonal {
            block_size: self.block_size,
            diag: self.diag[..q].to_vec(),
            offdiag: self.offdiag[..q - 1].to_vec(),
        }
    }

    /// `T_k` over all stored blocks.
    pub fn assemble_t(&self) -> BlockTridiagonal {
        self.tridiagonal(self.k())
    }

    /// `G_q = 𝐕_qᵀG = [K; 0]`.
    pub fn projected_linear_term(&self, q: usize) -> Mat {
        let l = self.block_size;
        let mut g = Mat::zeros(q * l, l);
        g.view_mut((0, 0), (l, l)).copy_from(&self.k_factor);
        g
    }

    /// `𝐕_q` as one n×qℓ matrix.
    pub fn basis(&self, q: usize) -> Mat {
        let n = self.dim();
        let l = self.block_size;
        let mut v = Mat::zeros(n, q * l);
        for (j, b) in self.blocks[..q].iter().enumerate() {
            v.view_mut((0, j * l), (n, l)).copy_from(b);
        }
        v
    }

    /// `U = 𝐕_q P` where `q = rows(P)/ℓ`.
    pub fn lift(&self, p: &Mat) -> Result<Mat> {
        let l = self.block_size;
        if p.nrows() % l != 0 || p.nrows() / l > self.k() || p.nrows() == 0 {
            return Err(QmpoError::Dimension(format!(
                "P has {} rows; expected a multiple of {l} up to {}",
                p.nrows(),
                self.k() * l
            )));
        }
        let q = p.nrows() / l;
        let mut u = Mat::zeros(self.dim(), p.ncols());
        for j in 0..q {
            u += &self.blocks[j] * p.rows(j * l, l);
        }
        Ok(u)
    }

    /// `‖H𝐕_q − 𝐕_qT_q − V_{q+1}N_qE_ℓᵀ‖_F` at the closed order `q`
    /// (0 when no order is closed yet).
    pub fn relation_residual(&self, h: &SymmetricOperator) -> Result<f64> {
        let q = self.closed_order();
        if q == 0 {
            return Ok(0.0);
        }
        let l = self.block_size;
        let vq = self.basis(q);
        let t = self.tridiagonal(q).to_dense();
        let mut res = apply_sym(h, &vq)? - &vq * t;
        if !self.terminated {
            let tail = &self.blocks[q] * &self.offdiag[q - 1];
            let mut last = res.columns_mut((q - 1) * l, l);
            last -= tail;
        }
        Ok(res.norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_error;
    use nalgebra::dmatrix;

    fn diag(vals: &[f64]) -> SymmetricOperator {
        SymmetricOperator::dense(Mat::from_diagonal(&nalgebra::DVector::from_row_slice(vals)))
            .unwrap()
    }

    #[test]
    fn init_with_orthonormal_start() {
        let g = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0; 0.0, 0.0];
        let h = diag(&[1.0, 2.0, 3.0, 4.0]);
        let s = BlockLanczos::init(&h, &g, 0).unwrap();
        assert_eq!(s.k(), 1);
        assert!((s.blocks()[0].clone() - &g).norm() < 1e-15);
        assert!((s.k_factor() - Mat::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn identity_operator_terminates_immediately() {
        let g = dmatrix![1.0, 2.0; 0.5, -1.0; 3.0, 0.0; 0.0, 1.0];
        let h = SymmetricOperator::identity(4);
        let mut s = BlockLanczos::init(&h, &g, 0).unwrap();
        assert!((s.diag_blocks()[0].clone() - Mat::identity(2, 2)).norm() < 1e-14);
        s.extend(&h).unwrap();
        assert!(s.is_terminated());
        assert_eq!(s.k(), 1);
        assert!(matches!(s.extend(&h), Err(QmpoError::Contract(_))));
    }

    #[test]
    fn coordinate_start() {
        let h = diag(&[1.0, 2.0, 3.0, 4.0]);
        let g = dmatrix![1.0; 0.0; 0.0; 0.0];
        let s = BlockLanczos::init(&h, &g, 0).unwrap();
        assert_eq!(s.blocks()[0], g);
        assert_eq!(s.diag_blocks()[0][(0, 0)], 1.0);
    }

    #[test]
    fn four_distinct_eigenvalues_terminate_at_four() {
        let h = diag(&[1.0, 2.0, 3.0, 4.0]);
        let g = dmatrix![0.5; 0.5; 0.5; 0.5];
        let mut s = BlockLanczos::init(&h, &g, 0).unwrap();
        for step in 0..3 {
            s.extend(&h).unwrap();
            assert!(!s.is_terminated(), "terminated early at step {step}");
        }
        assert_eq!(s.k(), 4);
        s.extend(&h).unwrap();
        assert!(s.is_terminated());
        assert_eq!(s.k(), 4);

        // Scalar Lanczos by hand on the same start: α₁ = vᵀHv = 2.5.
        let t = s.assemble_t().to_dense();
        assert!((t[(0, 0)] - 2.5).abs() < 1e-14);
        // Trace and eigenvalues of T₄ equal those of H.
        let spec = crate::linalg::sym_eig(&t).unwrap();
        for (a, b) in spec.values.iter().zip([4.0, 3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.relation_residual(&h).unwrap() < 1e-12);
    }

    #[test]
    fn assembled_t_layout() {
        let h = diag(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g = dmatrix![1.0, 0.0; 1.0, 1.0; 1.0, 0.0; 1.0, 2.0; 1.0, 0.0; 1.0, 1.0];
        let mut s = BlockLanczos::init(&h, &g, 0).unwrap();
        assert_eq!(s.assemble_t().to_dense(), s.diag_blocks()[0]);
        s.extend(&h).unwrap();
        let t = s.assemble_t().to_dense();
        assert_eq!(t.view((0, 0), (2, 2)), s.diag_blocks()[0]);
        assert_eq!(t.view((2, 2), (2, 2)), s.diag_blocks()[1]);
        assert_eq!(t.view((2, 0), (2, 2)), s.offdiag_blocks()[0]);
        assert_eq!(t.view((0, 2), (2, 2)), s.offdiag_blocks()[0].transpose());
        let n1 = &s.offdiag_blocks()[0];
        assert_eq!(n1[(1, 0)], 0.0);
        assert!(n1[(0, 0)] >= 0.0 && n1[(1, 1)] >= 0.0);
    }

    #[test]
    fn zero_start_is_degenerate() {
        let h = SymmetricOperator::identity(3);
        assert!(matches!(
            BlockLanczos::init(&h, &Mat::zeros(3, 1), 0),
            Err(QmpoError::Degenerate(_))
        ));
    }

    #[test]
    fn partial_breakdown_pads_and_keeps_relation() {
        // H has two distinct eigenvalues on span(e1..e3) and the start block
        // touches it through two columns, so L₁ loses rank.
        let h = diag(&[1.0, 1.0, 2.0, 0.0, 0.0, 0.0]);
        let g = dmatrix![1.0, 0.0; 0.0, 0.0; 1.0, 0.0; 0.0, 1.0; 0.0, 0.0; 0.0, 0.0];
        let mut s = BlockLanczos::init(&h, &g, 3).unwrap();
        s.extend(&h).unwrap();
        assert!(!s.is_terminated());
        assert_eq!(s.deflated_columns(), 1);
        let v = s.basis(s.k());
        assert!(orthonormality_error(&v) < 1e-12);
        assert!(s.relation_residual(&h).unwrap() < 1e-12);
    }

    #[test]
    fn lift_rejects_bad_rows() {
        let h = SymmetricOperator::identity(4);
        let s = BlockLanczos::init(&h, &dmatrix![1.0; 0.0; 0.0; 0.0], 0).unwrap();
        assert!(s.lift(&Mat::zeros(3, 1)).is_err());
        assert_eq!(s.lift(&dmatrix![1.0]).unwrap(), s.blocks()[0]);
    }
}
