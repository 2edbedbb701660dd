//! Riemannian trust-region solver for the projected problem
//!
//! ```text
//! min tr(PᵀTP) + 2 tr(PᵀG)   subject to PᵀP = I,
//! ```
//!
//! on the Stiefel manifold of m×ℓ matrices with orthonormal columns, using
//! the embedded metric, the QR retraction and a truncated CG inner solver.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QmpoError, Result};
use crate::linalg::{asymmetry, inner, orthonormality_error, sym, sym_eig, thin_qr, Mat};

/// Feasibility tolerance for [`StiefelPoint`].
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Projected problem `(T, G)` with `T` symmetric m×m and `G` m×ℓ.
#[derive(Debug, Clone)]
pub struct ReducedProblem {
    t: Mat,
    g: Mat,
}

impl ReducedProblem {
    pub fn new(t: Mat, g: Mat) -> Result<Self> {
        if t.nrows() != t.ncols() || t.nrows() != g.nrows() {
            return Err(QmpoError::Dimension(format!(
                "T is {}x{}, G is {}x{}",
                t.nrows(),
                t.ncols(),
                g.nrows(),
                g.ncols()
            )));
        }
        if g.ncols() == 0 || g.ncols() > g.nrows() {
            return Err(QmpoError::Dimension(format!(
                "need 1 <= l <= m, got m = {}, l = {}",
                g.nrows(),
                g.ncols()
            )));
        }
        let asym = asymmetry(&t);
        if asym > 1e-12 {
            return Err(QmpoError::Asymmetric(asym));
        }
        Ok(Self { t: sym(&t), g })
    }

    pub fn t(&self) -> &Mat {
        &self.t
    }

    pub fn g(&self) -> &Mat {
        &self.g
    }

    pub fn m(&self) -> usize {
        self.t.nrows()
    }

    pub fn l(&self) -> usize {
        self.g.ncols()
    }
}

/// An m×ℓ matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint(Mat);

impl StiefelPoint {
    pub fn new(p: Mat) -> Result<Self> {
        let err = orthonormality_error(&p);
        if err > FEASIBILITY_TOL {
            return Err(QmpoError::Contract(format!(
                "point is not on the Stiefel manifold: |PᵀP - I| = {err:.3e}"
            )));
        }
        Ok(Self(p))
    }

    /// Q factor of a Gaussian m×ℓ matrix.
    pub fn random(m: usize, l: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = Mat::from_fn(m, l, |_, _| StandardNormal.sample(rng));
        Self(thin_qr(&a).q)
    }

    /// Appends `extra` zero rows; the result stays feasible.
    pub fn padded(&self, extra: usize) -> Self {
        let (m, l) = self.0.shape();
        let mut p = Mat::zeros(m + extra, l);
        p.view_mut((0, 0), (m, l)).copy_from(&self.0);
        Self(p)
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }
}

/// A tangent vector ξ at some point P, i.e. sym(Pᵀξ) = 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector(pub Mat);

impl TangentVector {
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RtrConfig {
    pub max_iters: usize,
    /// Riemannian gradient tolerance; `None` means `1e-10·(1 + ‖G‖_F)`.
    pub grad_tol: Option<f64>,
    /// `None` means `0.1·√ℓ`.
    pub initial_radius: Option<f64>,
    /// `None` means `√(mℓ)`.
    pub max_radius: Option<f64>,
    /// Acceptance threshold ρ′ ∈ (0, ¼].
    pub accept_ratio: f64,
    /// `None` means the manifold dimension mℓ − ℓ(ℓ+1)/2.
    pub tcg_max_iters: Option<usize>,
    pub theta: f64,
    pub kappa: f64,
    /// Number of starting points; the first is the caller's, the rest random.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for RtrConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            grad_tol: None,
            initial_radius: None,
            max_radius: None,
            accept_ratio: 0.1,
            tcg_max_iters: None,
            theta: 1.0,
            kappa: 0.1,
            restarts: 1,
            seed: 0,
        }
    }
}

impl RtrConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: Option<f64>| v.map_or(true, |x| x > 0.0 && x.is_finite());
        if self.max_iters == 0
            || self.restarts == 0
            || !positive(self.grad_tol)
            || !positive(self.initial_radius)
            || !positive(self.max_radius)
            || self.tcg_max_iters == Some(0)
            || !(self.theta > 0.0)
            || !(self.kappa > 0.0)
        {
            return Err(QmpoError::Config("RTR parameters must be positive".into()));
        }
        if !(self.accept_ratio > 0.0 && self.accept_ratio <= 0.25) {
            return Err(QmpoError::Config(format!(
                "acceptance threshold {} outside (0, 1/4]",
                self.accept_ratio
            )));
        }
        Ok(())
    }

    pub fn grad_tol_for(&self, prob: &ReducedProblem) -> f64 {
        self.grad_tol.unwrap_or(1e-10 * (1.0 + prob.g().norm()))
    }
}

#[derive(Debug, Clone)]
pub struct RtrResult {
    pub p: StiefelPoint,
    pub lambda: Mat,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// tr(PᵀTP) + 2 tr(PᵀG)
pub fn reduced_objective(prob: &ReducedProblem, p: &StiefelPoint) -> f64 {
    objective_of(prob, p.as_mat())
}

fn objective_of(prob: &ReducedProblem, p: &Mat) -> f64 {
    let tp = prob.t() * p;
    inner(p, &tp) + 2.0 * inner(p, prob.g())
}

/// 2(TP + G)
pub fn euclidean_grad(prob: &ReducedProblem, p: &StiefelPoint) -> Mat {
    egrad_of(prob, p.as_mat())
}

fn egrad_of(prob: &ReducedProblem, p: &Mat) -> Mat {
    (prob.t() * p + prob.g()) * 2.0
}

/// X − P·sym(PᵀX)
pub fn project_tangent(p: &StiefelPoint, x: &Mat) -> TangentVector {
    TangentVector(project(p.as_mat(), x))
}

fn project(p: &Mat, x: &Mat) -> Mat {
    x - p * sym(&p.tr_mul(x))
}

/// Riemannian gradient: tangent projection of the Euclidean gradient.
pub fn riemannian_grad(prob: &ReducedProblem, p: &StiefelPoint) -> TangentVector {
    project_tangent(p, &euclidean_grad(prob, p))
}

/// Riemannian Hessian for the embedded metric:
/// `Proj_P(2Tξ − ξ·sym(Pᵀ·egrad(P)))`.
pub fn hess_action(
    prob: &ReducedProblem,
    p: &StiefelPoint,
    xi: &TangentVector,
) -> Result<TangentVector> {
    let off = sym(&p.as_mat().tr_mul(xi.as_mat())).norm();
    if off > 1e-8 * (1.0 + xi.norm()) {
        return Err(QmpoError::Contract(format!(
            "hess_action needs a tangent vector, |sym(Pᵀξ)| = {off:.3e}"
        )));
    }
    let s = sym(&p.as_mat().tr_mul(&euclidean_grad(prob, p)));
    Ok(TangentVector(hess_with(prob, p.as_mat(), &s, xi.as_mat())))
}

fn hess_with(prob: &ReducedProblem, p: &Mat, sym_pt_egrad: &Mat, xi: &Mat) -> Mat {
    let raw = prob.t() * xi * 2.0 - xi * sym_pt_egrad;
    project(p, &raw)
}

/// QR retraction: Q factor of P + ξ with nonnegative R diagonal.
pub fn retract(p: &StiefelPoint, xi: &TangentVector) -> StiefelPoint {
    if xi.as_mat().iter().all(|v| *v == 0.0) {
        return p.clone();
    }
    StiefelPoint(thin_qr(&(p.as_mat() + xi.as_mat())).q)
}

/// Why the truncated CG loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcgExit {
    ZeroGradient,
    NegativeCurvature,
    Boundary,
    ResidualReduced,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct TcgOutcome {
    pub step: TangentVector,
    pub hess_step: TangentVector,
    pub exit: TcgExit,
    pub iterations: usize,
}

/// Steihaug–Toint truncated CG on the trust-region model
/// `m(η) = f + ⟨grad, η⟩ + ½⟨η, Hess η⟩` with `‖η‖ ≤ radius`.
pub fn tcg_step(
    prob: &ReducedProblem,
    p: &StiefelPoint,
    grad: &TangentVector,
    radius: f64,
    cfg: &RtrConfig,
) -> TcgOutcome {
    let s = sym(&p.as_mat().tr_mul(&euclidean_grad(prob, p)));
    tcg_with(prob, p.as_mat(), &s, grad.as_mat(), radius, cfg)
}

fn manifold_dim(m: usize, l: usize) -> usize {
    (m * l).saturating_sub(l * (l + 1) / 2).max(1)
}

fn tcg_with(
    prob: &ReducedProblem,
    p: &Mat,
    s: &Mat,
    grad: &Mat,
    radius: f64,
    cfg: &RtrConfig,
) -> TcgOutcome {
    let (m, l) = p.shape();
    let max_inner = cfg.tcg_max_iters.unwrap_or_else(|| manifold_dim(m, l));
    let mut eta = Mat::zeros(m, l);
    let mut h_eta = Mat::zeros(m, l);
    let mut r = grad.clone();
    let mut r_r = inner(&r, &r);
    let norm_r0 = r_r.sqrt();
    if norm_r0 == 0.0 {
        return TcgOutcome {
            step: TangentVector(eta),
            hess_step: TangentVector(h_eta),
            exit: TcgExit::ZeroGradient,
            iterations: 0,
        };
    }
    let stop = norm_r0 * norm_r0.powf(cfg.theta).min(cfg.kappa);
    let mut delta = -&r;
    let mut e_pe = 0.0;
    let mut e_pd = 0.0;
    let mut d_pd = r_r;
    let radius2 = radius * radius;
    let mut exit = TcgExit::MaxIterations;
    let mut iterations = 0;

    for _ in 0..max_inner {
        iterations += 1;
        let h_delta = hess_with(prob, p, s, &delta);
        let d_hd = inner(&delta, &h_delta);
        let alpha = r_r / d_hd;
        let e_pe_new = e_pe + 2.0 * alpha * e_pd + alpha * alpha * d_pd;

        if d_hd <= 0.0 || e_pe_new >= radius2 {
            let tau = (-e_pd + (e_pd * e_pd + d_pd * (radius2 - e_pe)).max(0.0).sqrt()) / d_pd;
            eta += &delta * tau;
            h_eta += &h_delta * tau;
            exit = if d_hd <= 0.0 {
                TcgExit::NegativeCurvature
            } else {
                TcgExit::Boundary
            };
            break;
        }

        e_pe = e_pe_new;
        eta += &delta * alpha;
        h_eta += &h_delta * alpha;
        r += &h_delta * alpha;
        r = project(p, &r);
        let r_r_new = inner(&r, &r);
        if r_r_new.sqrt() <= stop {
            exit = TcgExit::ResidualReduced;
            break;
        }
        let beta = r_r_new / r_r;
        r_r = r_r_new;
        delta = &delta * beta - &r;
        delta = project(p, &delta);
        e_pd = beta * (e_pd + alpha * d_pd);
        d_pd = r_r + beta * beta * d_pd;
    }

    TcgOutcome {
        step: TangentVector(eta),
        hess_step: TangentVector(h_eta),
        exit,
        iterations,
    }
}

/// Λ = −sym(Pᵀ(TP + G)), the multiplier of TP + PΛ + G = 0.
pub fn recover_multiplier(prob: &ReducedProblem, p: &StiefelPoint) -> Mat {
    let a = p.as_mat().tr_mul(&(prob.t() * p.as_mat() + prob.g()));
    -sym(&a)
}

/// λ_min(sym(−PᵀG)); nonnegative at a global minimizer.
pub fn global_necessary_check(prob: &ReducedProblem, p: &StiefelPoint) -> Result<f64> {
    let a = -sym(&p.as_mat().tr_mul(prob.g()));
    Ok(sym_eig(&a)?.min())
}

/// ‖TP + PΛ + G‖_F
pub fn reduced_kkt(prob: &ReducedProblem, p: &StiefelPoint, lambda: &Mat) -> f64 {
    (prob.t() * p.as_mat() + p.as_mat() * lambda + prob.g()).norm()
}

/// Runs RTR from `p0` and from `cfg.restarts − 1` random starts, returning
/// the run with the lowest objective.
pub fn rtr_solve(prob: &ReducedProblem, p0: &StiefelPoint, cfg: &RtrConfig) -> Result<RtrResult> {
    cfg.validate()?;
    if p0.as_mat().shape() != prob.g().shape() {
        return Err(QmpoError::Dimension(format!(
            "start point is {:?}, problem needs {:?}",
            p0.as_mat().shape(),
            prob.g().shape()
        )));
    }
    if prob.g().iter().all(|v| *v == 0.0) {
        return eigen_solution(prob);
    }

    let mut best = single_run(prob, p0.clone(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 1..cfg.restarts {
        let start = StiefelPoint::random(prob.m(), prob.l(), &mut rng);
        let run = single_run(prob, start, cfg);
        if run.objective < best.objective {
            best = run;
        }
    }
    Ok(best)
}

// G = 0: the minimizer spans the eigenvectors of the ℓ smallest eigenvalues.
fn eigen_solution(prob: &ReducedProblem) -> Result<RtrResult> {
    let (m, l) = (prob.m(), prob.l());
    let spec = sym_eig(prob.t())?;
    let p = StiefelPoint(spec.vectors.columns(m - l, l).into_owned());
    let lambda = recover_multiplier(prob, &p);
    let grad_norm = riemannian_grad(prob, &p).norm();
    Ok(RtrResult {
        objective: reduced_objective(prob, &p),
        p,
        lambda,
        grad_norm,
        iterations: 0,
        converged: true,
    })
}

fn single_run(prob: &ReducedProblem, start: StiefelPoint, cfg: &RtrConfig) -> RtrResult {
    let (m, l) = (prob.m(), prob.l());
    let tol = cfg.grad_tol_for(prob);
    let max_radius = cfg.max_radius.unwrap_or(((m * l) as f64).sqrt());
    let mut radius = cfg
        .initial_radius
        .unwrap_or(0.1 * (l as f64).sqrt())
        .min(max_radius);

    let mut p = start.into_mat();
    let mut f = objective_of(prob, &p);
    let mut egrad = egrad_of(prob, &p);
    let mut grad = project(&p, &egrad);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        if grad.norm() <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        let s = sym(&p.tr_mul(&egrad));
        let tcg = tcg_with(prob, &p, &s, &grad, radius, cfg);
        let eta = tcg.step.0;
        let model_decrease = -(inner(&grad, &eta) + 0.5 * inner(&eta, &tcg.hess_step.0));
        let candidate = thin_qr(&(&p + &eta)).q;
        let f_new = objective_of(prob, &candidate);

        let reg = f.abs().max(1.0) * f64::EPSILON * 1e2;
        let rho = (f - f_new + reg) / (model_decrease + reg);
        let hit_boundary = matches!(tcg.exit, TcgExit::Boundary | TcgExit::NegativeCurvature);
        if rho < 0.25 || !rho.is_finite() {
            radius *= 0.25;
        } else if rho > 0.75 && hit_boundary {
            radius = (2.0 * radius).min(max_radius);
        }
        if rho > cfg.accept_ratio && rho.is_finite() {
            p = candidate;
            f = f_new;
            egrad = egrad_of(prob, &p);
            grad = project(&p, &egrad);
        }
        if radius < 1e-14 * max_radius {
            break;
        }
    }
    if !converged && grad.norm() <= tol {
        converged = true;
    }

    let p = StiefelPoint(p);
    let lambda = recover_multiplier(prob, &p);
    RtrResult {
        p,
        lambda,
        objective: f,
        grad_norm: grad.norm(),
        iterations,
        converged,
    }
}
