//! The outer solver: normalization, Lanczos growth, scheduled reduced solves,
//! the stopping rule and lifting back to the full space.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{QmpoError, Result};
use crate::lanczos::BlockLanczos;
use crate::linalg::{apply_sym, polar, thin_qr, Mat, SymmetricOperator};
use crate::report::mat_serde;
use crate::rtr::{reduced_objective, rtr_solve, ReducedProblem, RtrConfig, StiefelPoint};

/// `min tr(UᵀHU) + 2 tr(UᵀG)` over n×ℓ matrices with orthonormal columns.
#[derive(Debug, Clone)]
pub struct QmpoProblem {
    pub h: SymmetricOperator,
    pub g: Mat,
    pub name: Option<String>,
    pub source: Option<String>,
}

impl QmpoProblem {
    pub fn new(h: SymmetricOperator, g: Mat) -> Result<Self> {
        let (n, l) = g.shape();
        if h.dim() != n {
            return Err(QmpoError::Dimension(format!(
                "H is {}x{} but G has {n} rows",
                h.dim(),
                h.dim()
            )));
        }
        if l == 0 || n <= l {
            return Err(QmpoError::Dimension(format!(
                "need n > l >= 1, got n = {n}, l = {l}"
            )));
        }
        Ok(Self {
            h,
            g,
            name: None,
            source: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn l(&self) -> usize {
        self.g.ncols()
    }

    /// f(U) = tr(UᵀHU) + 2 tr(UᵀG)
    pub fn objective(&self, u: &Mat) -> Result<f64> {
        let hu = apply_sym(&self.h, u)?;
        Ok(u.dot(&hu) + 2.0 * u.dot(&self.g))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eps_f: f64,
    pub eps_u: f64,
    pub eps_g: f64,
    /// Budget on Lanczos steps.
    pub k_max: usize,
    /// Budget on reduced solves (checkpoints).
    pub max_checkpoints: usize,
    /// Reduced solve cadence, in Lanczos steps.
    pub solve_every: usize,
    /// Cap on the number of stored basis columns kℓ.
    pub max_basis: usize,
    pub rtr: RtrConfig,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps_f: 1e-10,
            eps_u: 1e-6,
            eps_g: 1e-5,
            k_max: 1000,
            max_checkpoints: 1000,
            solve_every: 5,
            max_basis: 5000,
            rtr: RtrConfig::default(),
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x > 0.0 && x.is_finite();
        if !(pos(self.eps_f) && pos(self.eps_u) && pos(self.eps_g)) {
            return Err(QmpoError::Config("tolerances must be positive".into()));
        }
        if self.k_max == 0 || self.solve_every == 0 || self.max_checkpoints == 0 {
            return Err(QmpoError::Config(
                "k_max, solve_every and max_checkpoints must be at least 1".into(),
            ));
        }
        self.rtr.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    #[serde(rename = "f_and_U_and_g_converged")]
    Converged,
    #[serde(rename = "k_max")]
    KMax,
    #[serde(rename = "lanczos_terminated")]
    LanczosTerminated,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "f_and_U_and_g_converged",
            Termination::KMax => "k_max",
            Termination::LanczosTerminated => "lanczos_terminated",
        }
    }
}

/// One reduced solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Lanczos order of the projected problem.
    pub k: usize,
    pub f: f64,
    /// Cheap KKT residual.
    pub kkt: f64,
    /// ‖U_k − U_prev‖_F/√n; absent at the first checkpoint.
    pub du: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub n: usize,
    pub l: usize,
    #[serde(with = "mat_serde")]
    pub u: Mat,
    #[serde(with = "mat_serde")]
    pub lambda: Mat,
    /// Objective of the scaled problem.
    pub objective: f64,
    /// ‖HU + UΛ + G‖_F of the scaled problem.
    pub kkt_residual: f64,
    pub history: Vec<Checkpoint>,
    pub termination: Termination,
    /// Scale factor s = ‖G‖_F applied to H and G.
    pub scale: f64,
    pub lanczos_steps: usize,
    /// Riemannian gradient norm of the last reduced solve; absent for
    /// solvers without one.
    pub reduced_grad_norm: Option<f64>,
    pub wall_ms: f64,
    /// Solver-specific remarks such as restarts after a singular polar factor.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl SolveReport {
    pub fn objective_unscaled(&self) -> f64 {
        self.scale * self.objective
    }

    pub fn kkt_unscaled(&self) -> f64 {
        self.scale * self.kkt_residual
    }
}

/// Divides H and G by s = ‖G‖_F.
pub fn normalize(problem: &QmpoProblem) -> Result<(QmpoProblem, f64)> {
    let s = problem.g.norm();
    if s == 0.0 {
        return Err(QmpoError::Degenerate(
            "G = 0: the problem is the eigenvalue problem for the l smallest eigenvalues of H"
                .into(),
        ));
    }
    let mut scaled = problem.clone();
    if s != 1.0 {
        scaled.h.scale(1.0 / s);
        scaled.g /= s;
    }
    Ok((scaled, s))
}

/// ‖HU + UΛ + G‖_F
pub fn direct_kkt(problem: &QmpoProblem, u: &Mat, lambda: &Mat) -> Result<f64> {
    if u.shape() != problem.g.shape() || lambda.shape() != (problem.l(), problem.l()) {
        return Err(QmpoError::Dimension(format!(
            "U is {:?}, Λ is {:?}, G is {:?}",
            u.shape(),
            lambda.shape(),
            problem.g.shape()
        )));
    }
    Ok((apply_sym(&problem.h, u)? + u * lambda + &problem.g).norm())
}

/// KKT residual of `U = 𝐕_qP` from projected quantities only:
/// `√(‖T_qP + PΛ + G_q‖² + ‖N_q·P_last‖²)` with `q = rows(P)/ℓ`.
pub fn cheap_kkt(state: &BlockLanczos, p: &Mat, lambda: &Mat) -> Result<f64> {
    let l = state.block_size();
    if p.nrows() % l != 0 || p.nrows() == 0 || p.nrows() / l > state.closed_order() {
        return Err(QmpoError::Dimension(format!(
            "P has {} rows; closed order is {}",
            p.nrows(),
            state.closed_order()
        )));
    }
    let q = p.nrows() / l;
    let t = state.tridiagonal(q).to_dense();
    let gq = state.projected_linear_term(q);
    let reduced = (&t * p + p * lambda + gq).norm();
    let tail = (state.coupling(q) * p.rows((q - 1) * l, l)).norm();
    Ok(reduced.hypot(tail))
}

/// `U = 𝐕_qP`.
pub fn lift(state: &BlockLanczos, p: &Mat) -> Result<Mat> {
    state.lift(p)
}

/// Relative objective difference `(f_candidate − f_best)/|f_best|`.
pub fn rel_obj_diff(f_candidate: f64, f_best: f64) -> Result<f64> {
    if f_best == 0.0 {
        return Err(QmpoError::UndefinedMetric(
            "relative objective difference with f_best = 0".into(),
        ));
    }
    Ok((f_candidate - f_best) / f_best.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// The three-way stopping test on the latest checkpoint. The difference
/// terms compare against the previous checkpoint, so a single checkpoint
/// never stops.
pub fn stopping(history: &[Checkpoint], cfg: &SolverConfig) -> StopDecision {
    let [.., prev, last] = history else {
        return StopDecision::Continue;
    };
    let df = (prev.f - last.f).abs() / (prev.f.abs() + 1.0);
    let du = last.du.unwrap_or(f64::INFINITY);
    if df <= cfg.eps_f && du <= cfg.eps_u && last.kkt <= cfg.eps_g {
        StopDecision::Stop
    } else {
        StopDecision::Continue
    }
}

fn initial_point(gq: &Mat) -> StiefelPoint {
    let neg = -gq;
    match polar(&neg) {
        Ok(p) => StiefelPoint::new(p.q).unwrap_or_else(|_| qr_point(&neg)),
        Err(_) => qr_point(&neg),
    }
}

fn qr_point(a: &Mat) -> StiefelPoint {
    StiefelPoint::new(thin_qr(a).q).expect("Householder Q is orthonormal")
}

/// What a checkpoint observer sees. All quantities refer to the scaled problem.
pub struct CheckpointView<'a> {
    pub state: &'a BlockLanczos,
    pub p: &'a StiefelPoint,
    pub lambda: &'a Mat,
    pub u: &'a Mat,
    pub checkpoint: &'a Checkpoint,
}

/// Block Lanczos solve with checkpointed reduced solves.
pub fn solve(problem: &QmpoProblem, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_traced(problem, cfg, |_| {})
}

/// [`solve`] with a callback invoked after every checkpoint.
pub fn solve_traced(
    problem: &QmpoProblem,
    cfg: &SolverConfig,
    mut observe: impl FnMut(&CheckpointView<'_>),
) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (prob, scale) = normalize(problem)?;
    let (n, l) = (prob.n(), prob.l());
    let mut state = BlockLanczos::init(&prob.h, &prob.g, cfg.seed)?;

    let mut history: Vec<Checkpoint> = Vec::new();
    let mut prev_p: Option<StiefelPoint> = None;
    let mut prev_u: Option<Mat> = None;
    let mut last_lambda;
    let mut last_grad;
    let mut last_f;

    let termination = loop {
        let mut out_of_room = false;
        if state.closed_order() < cfg.k_max && !state.is_terminated() {
            if (state.k() + 1) * l > n {
                out_of_room = true;
            } else if (state.k() + 1) * l > cfg.max_basis {
                return Err(QmpoError::Config(format!(
                    "basis would grow to {} columns, above the cap of {}; raise max_basis or lower k_max",
                    (state.k() + 1) * l,
                    cfg.max_basis
                )));
            } else {
                state.extend(&prob.h)?;
            }
        }
        let q = state.closed_order();
        let at_budget = q >= cfg.k_max || out_of_room;
        let due = q > 0 && (q % cfg.solve_every == 0 || state.is_terminated() || at_budget);
        if !due {
            if q == 0 && out_of_room {
                return Err(QmpoError::Dimension(format!(
                    "n = {n} leaves no room for a second block of size {l}"
                )));
            }
            continue;
        }

        let reduced = ReducedProblem::new(
            state.tridiagonal(q).to_dense(),
            state.projected_linear_term(q),
        )?;
        let p0 = match &prev_p {
            Some(p) => p.padded(q * l - p.as_mat().nrows()),
            None => initial_point(reduced.g()),
        };
        let rtr_cfg = RtrConfig {
            seed: cfg.seed.wrapping_add(q as u64),
            ..cfg.rtr.clone()
        };
        let res = rtr_solve(&reduced, &p0, &rtr_cfg)?;
        let kkt = cheap_kkt(&state, res.p.as_mat(), &res.lambda)?;
        let u = state.lift(res.p.as_mat())?;
        let du = prev_u
            .as_ref()
            .map(|pu| (&u - pu).norm() / (n as f64).sqrt());
        debug_assert!(
            (reduced_objective(&reduced, &res.p) - res.objective).abs()
                <= 1e-10 * (1.0 + res.objective.abs())
        );
        history.push(Checkpoint {
            k: q,
            f: res.objective,
            kkt,
            du,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        observe(&CheckpointView {
            state: &state,
            p: &res.p,
            lambda: &res.lambda,
            u: &u,
            checkpoint: history.last().expect("just pushed"),
        });
        last_lambda = res.lambda;
        last_grad = res.grad_norm;
        last_f = res.objective;
        prev_p = Some(res.p);
        prev_u = Some(u);

        if state.is_terminated() {
            break Termination::LanczosTerminated;
        }
        if stopping(&history, cfg) == StopDecision::Stop {
            break Termination::Converged;
        }
        if at_budget || history.len() >= cfg.max_checkpoints {
            break Termination::KMax;
        }
    };

    let u = prev_u.expect("at least one checkpoint");
    let kkt_residual = direct_kkt(&prob, &u, &last_lambda)?;
    Ok(SolveReport {
        solver: "lanczos".into(),
        n,
        l,
        u,
        lambda: last_lambda,
        objective: last_f,
        kkt_residual,
        history,
        termination,
        scale,
        lanczos_steps: state.closed_order(),
        reduced_grad_norm: Some(last_grad),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn cp(f: f64, kkt: f64, du: Option<f64>) -> Checkpoint {
        Checkpoint {
            k: 0,
            f,
            kkt,
            du,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn normalize_examples() {
        let g = dmatrix![1.0; 0.0; 0.0];
        let p = QmpoProblem::new(SymmetricOperator::identity(3), g.clone()).unwrap();
        let (q, s) = normalize(&p).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(q.g, g);

        let mut g = Mat::zeros(6, 4);
        for i in 0..4 {
            g[(i, i)] = 2.0;
        }
        let p = QmpoProblem::new(SymmetricOperator::identity(6), g).unwrap();
        let (_, s) = normalize(&p).unwrap();
        assert!((s - 4.0).abs() < 1e-15);

        let p = QmpoProblem::new(SymmetricOperator::identity(3), Mat::zeros(3, 1)).unwrap();
        assert!(matches!(normalize(&p), Err(QmpoError::Degenerate(_))));
    }

    #[test]
    fn stopping_examples() {
        let cfg = SolverConfig::default();
        assert_eq!(
            stopping(&[cp(1.0, 0.0, None)], &cfg),
            StopDecision::Continue
        );
        assert_eq!(
            stopping(&[cp(1.0, 0.0, None), cp(1.0, 0.0, Some(0.0))], &cfg),
            StopDecision::Stop
        );
        // f and U terms pass, the KKT term 2e-5 fails ε_g = 1e-5.
        let hist = [cp(-3.0, 1.0, None), cp(-3.0 - 4e-11, 2e-5, Some(1e-7))];
        assert_eq!(stopping(&hist, &cfg), StopDecision::Continue);
        let hist = [cp(-3.0, 1.0, None), cp(-3.0 - 4e-11, 9e-6, Some(1e-7))];
        assert_eq!(stopping(&hist, &cfg), StopDecision::Stop);
    }

    #[test]
    fn rel_obj_diff_examples() {
        assert_eq!(rel_obj_diff(-4.0, -4.0).unwrap(), 0.0);
        assert!((rel_obj_diff(-9.9, -10.0).unwrap() - 0.01).abs() < 1e-15);
        assert!(rel_obj_diff(-10.5, -10.0).unwrap() < 0.0);
        assert!(matches!(
            rel_obj_diff(1.0, 0.0),
            Err(QmpoError::UndefinedMetric(_))
        ));
    }

    #[test]
    fn direct_kkt_examples() {
        let g = dmatrix![1.0, 2.0; 0.0, 1.0; 3.0, 0.0];
        let p = QmpoProblem::new(SymmetricOperator::Dense(Mat::zeros(3, 3)), g.clone()).unwrap();
        let u = dmatrix![1.0, 0.0; 0.0, 1.0; 0.0, 0.0];
        let r = direct_kkt(&p, &u, &Mat::zeros(2, 2)).unwrap();
        assert!((r - g.norm()).abs() < 1e-15);
        assert!(direct_kkt(&p, &Mat::zeros(2, 2), &Mat::zeros(2, 2)).is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            solve_every: 0,
            ..SolverConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(QmpoError::Config(_))));
    }
}
