//! Reference solvers: generalized power iteration and a full-space dense
//! Riemannian trust-region oracle.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::driver::{
    direct_kkt, normalize, solve, Checkpoint, QmpoProblem, SolveReport, SolverConfig, Termination,
};
use crate::error::{QmpoError, Result};
use crate::linalg::{polar, sym, thin_qr, Mat, SymmetricOperator};
use crate::rtr::{global_necessary_check, rtr_solve, ReducedProblem, RtrConfig, StiefelPoint};

/// Shift used by the power iteration: `(αI − H)U − G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AlphaStrategy {
    /// α = (bound on ‖H‖₂) + 1e-8, which keeps αI − H positive semidefinite.
    NormBound,
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub max_iters: usize,
    /// Stop when |f_prev − f|/(1 + |f|) drops to this value.
    pub tol: f64,
    pub alpha: AlphaStrategy,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-10,
            alpha: AlphaStrategy::NormBound,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return Err(QmpoError::Config(
                "max_iters and tol must be positive".into(),
            ));
        }
        if let AlphaStrategy::Fixed(a) = self.alpha {
            if !a.is_finite() {
                return Err(QmpoError::Config(format!("alpha = {a} is not finite")));
            }
        }
        Ok(())
    }
}

fn multiplier(u: &Mat, hu: &Mat, g: &Mat) -> Mat {
    -sym(&u.tr_mul(&(hu + g)))
}

fn random_orthonormal(n: usize, l: usize, rng: &mut ChaCha8Rng) -> Mat {
    StiefelPoint::random(n, l, rng).into_mat()
}

/// Generalized power iteration `U ← polar((αI − H)U − G)`. Each step
/// minimizes a majorizer of f, so the objective never increases.
pub fn gpi_solve(problem: &QmpoProblem, cfg: &BaselineConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (prob, scale) = normalize(problem)?;
    let (n, l) = (prob.n(), prob.l());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut notes = Vec::new();

    let alpha = match cfg.alpha {
        AlphaStrategy::NormBound => prob.h.norm_bound() + 1e-8,
        AlphaStrategy::Fixed(a) => a,
    };

    let init = thin_qr(&(-&prob.g));
    let mut u = if init.rank == l {
        init.q
    } else {
        notes.push(format!(
            "G has rank {} < {l}; random orthonormal start",
            init.rank
        ));
        random_orthonormal(n, l, &mut rng)
    };
    let mut hu = prob.h.apply(&u);
    let mut f = u.dot(&hu) + 2.0 * u.dot(&prob.g);
    let mut history = Vec::new();
    let mut termination = Termination::KMax;

    for it in 1..=cfg.max_iters {
        let y = &u * alpha - &hu - &prob.g;
        let next = match polar(&y) {
            Ok(pd) => pd.q,
            Err(QmpoError::Singular(_)) => {
                notes.push(format!(
                    "iteration {it}: singular polar factor, perturbed by a random orthonormal block"
                ));
                let z = random_orthonormal(n, l, &mut rng);
                thin_qr(&(&y + z * (1e-8 * (1.0 + y.norm())))).q
            }
            Err(e) => return Err(e),
        };
        let hu_next = prob.h.apply(&next);
        let f_next = next.dot(&hu_next) + 2.0 * next.dot(&prob.g);
        let du = (&next - &u).norm() / (n as f64).sqrt();
        let change = (f - f_next).abs() / (1.0 + f_next.abs());
        u = next;
        hu = hu_next;
        f = f_next;
        let lambda = multiplier(&u, &hu, &prob.g);
        history.push(Checkpoint {
            k: it,
            f,
            kkt: (&hu + &u * &lambda + &prob.g).norm(),
            du: Some(du),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if change <= cfg.tol {
            termination = Termination::Converged;
            break;
        }
    }

    let lambda = multiplier(&u, &hu, &prob.g);
    let kkt_residual = direct_kkt(&prob, &u, &lambda)?;
    Ok(SolveReport {
        solver: "gpi".into(),
        n,
        l,
        u,
        lambda,
        objective: f,
        kkt_residual,
        lanczos_steps: 0,
        reduced_grad_norm: None,
        history,
        termination,
        scale,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        notes,
    })
}

/// Largest dimension accepted by [`dense_rtr_oracle`].
pub const DENSE_ORACLE_MAX_N: usize = 500;

/// RTR on the full n-dimensional problem from the block Lanczos solution
/// and `restarts` random starts; the best run wins.
pub fn dense_rtr_oracle(problem: &QmpoProblem, restarts: usize) -> Result<SolveReport> {
    dense_rtr_oracle_with(problem, restarts, &SolverConfig::default())
}

/// [`dense_rtr_oracle`] with explicit settings for the warm-start solve.
pub fn dense_rtr_oracle_with(
    problem: &QmpoProblem,
    restarts: usize,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    let n = problem.n();
    if n > DENSE_ORACLE_MAX_N {
        return Err(QmpoError::Config(format!(
            "dense oracle is limited to n <= {DENSE_ORACLE_MAX_N}, got {n}"
        )));
    }
    let start = Instant::now();
    let (prob, scale) = normalize(problem)?;
    let warm = solve(&prob, cfg)?;
    let reduced = ReducedProblem::new(sym(&prob.h.to_dense()), prob.g.clone())?;
    let rtr_cfg = RtrConfig {
        restarts: restarts + 1,
        seed: cfg.seed ^ 0x5eed,
        ..cfg.rtr.clone()
    };
    let p0 = StiefelPoint::new(warm.u)?;
    let res = rtr_solve(&reduced, &p0, &rtr_cfg)?;
    let gnc = global_necessary_check(&reduced, &res.p)?;
    let u = res.p.into_mat();
    let kkt_residual = direct_kkt(&prob, &u, &res.lambda)?;
    Ok(SolveReport {
        solver: "rtr".into(),
        n,
        l: prob.l(),
        u,
        lambda: res.lambda,
        objective: res.objective,
        kkt_residual,
        history: Vec::new(),
        termination: if res.converged {
            Termination::Converged
        } else {
            Termination::KMax
        },
        scale,
        lanczos_steps: 0,
        reduced_grad_norm: Some(res.grad_norm),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        notes: vec![format!("global_necessary_check = {gnc:.6e}")],
    })
}

/// Dense copy of a problem, for oracles that need an explicit H.
pub fn densified(problem: &QmpoProblem) -> Result<QmpoProblem> {
    let mut p = QmpoProblem::new(
        SymmetricOperator::dense(sym(&problem.h.to_dense()))?,
        problem.g.clone(),
    )?;
    p.name = problem.name.clone();
    p.source = problem.source.clone();
    Ok(p)
}
