use std::fmt::Write as _;
use std::path::Path;

use qmpo::baselines::{dense_rtr_oracle_with, gpi_solve, BaselineConfig, DENSE_ORACLE_MAX_N};
use qmpo::driver::{rel_obj_diff, solve as lanczos_solve, QmpoProblem, SolveReport, SolverConfig};
use qmpo::linalg::SymmetricOperator;
use qmpo::mtx::{read_matrix_market, write_matrix_market, MmMatrix};
use qmpo::problems::{
    build_gcsed, build_olsr, gen_synthetic, indicator_from_labels, GraphConfig, LabeledDataset,
};
use qmpo::report::{format_f64, history_csv, to_json};
use qmpo::rtr::RtrConfig;
use qmpo::verify::{certificate_csv, certify, CertifyConfig, Verdict};
use qmpo::{QmpoError, Result};
use rayon::prelude::*;

use crate::{
    BenchArgs, CompareArgs, GenArgs, Kind, ProblemArgs, SolveArgs, SolverArgs, VerifyArgs,
};

pub const COMPARE_HEADER: &str = "instance,solver,f,f_err_rel,kkt,wall_ms";
pub const BENCH_HEADER: &str =
    "instance,n,l,density,seed,solver,f,f_err_rel,kkt,wall_ms,lanczos_steps,termination";

fn require<T>(v: Option<T>, flag: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| QmpoError::Config(format!("--{flag} is required for --kind {kind}")))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Worker pool sized by `QMPO_THREADS` when set.
fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("QMPO_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            QmpoError::Config(format!("QMPO_THREADS = `{v}` is not a positive integer"))
        })?;
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| QmpoError::Config(format!("cannot start worker pool: {e}")))
}

pub fn gen(a: GenArgs) -> Result<()> {
    let problem = match a.kind {
        Kind::Synthetic => gen_synthetic(
            require(a.n, "n", "synthetic")?,
            require(a.l, "l", "synthetic")?,
            a.density,
            a.seed,
        )?,
        Kind::Olsr | Kind::Gcsed => {
            let data = require(a.data.as_deref(), "data", "olsr/gcsed")?;
            let labels = require(a.labels.as_deref(), "labels", "olsr/gcsed")?;
            let ds = LabeledDataset::from_files(data, labels)?;
            if a.kind == Kind::Olsr {
                build_olsr(&ds, a.train_fraction, a.seed)?
            } else {
                let y = indicator_from_labels(&ds.labels, ds.classes)?;
                build_gcsed(
                    &ds,
                    GraphConfig {
                        t: a.t,
                        gamma: a.gamma,
                    },
                    &y,
                )?
            }
        }
    };
    std::fs::create_dir_all(&a.out)?;
    let h_path = match &problem.h {
        SymmetricOperator::Sparse(h) => {
            let p = a.out.join("H.mtx");
            write_matrix_market(&p, &MmMatrix::Sparse(h.clone()))?;
            p
        }
        SymmetricOperator::Dense(h) => {
            let p = a.out.join("H.mtx");
            write_matrix_market(&p, &MmMatrix::Dense(h.clone()))?;
            p
        }
        SymmetricOperator::Gram(factor) => {
            let p = a.out.join("A.mtx");
            write_matrix_market(&p, &MmMatrix::Dense(factor.clone()))?;
            p
        }
    };
    let g_path = a.out.join("G.mtx");
    write_matrix_market(&g_path, &MmMatrix::Dense(problem.g.clone()))?;
    eprintln!(
        "{}: n = {}, l = {}; wrote {} and {}",
        problem.name.as_deref().unwrap_or("problem"),
        problem.n(),
        problem.l(),
        h_path.display(),
        g_path.display()
    );
    Ok(())
}

/// Reads a Matrix Market file, naming the file in I/O and parse errors.
fn read_mm(path: &Path) -> Result<MmMatrix> {
    read_matrix_market(path).map_err(|e| match e {
        QmpoError::Io(io) => QmpoError::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        QmpoError::Parse { line, msg } => QmpoError::Parse {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

fn load_problem(p: &ProblemArgs) -> Result<QmpoProblem> {
    let h = match (&p.h, &p.gram) {
        (Some(path), None) => match read_mm(path)? {
            MmMatrix::Sparse(a) => SymmetricOperator::sparse(a)?,
            MmMatrix::Dense(a) => SymmetricOperator::dense(a)?,
        },
        (None, Some(path)) => SymmetricOperator::gram(read_mm(path)?.to_dense()),
        _ => {
            return Err(QmpoError::Config(
                "pass exactly one of --h and --gram".into(),
            ))
        }
    };
    let g = read_mm(&p.g)?.to_dense();
    let name =
        p.g.parent()
            .and_then(|d| d.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "instance".into());
    Ok(QmpoProblem::new(h, g)?.with_name(name))
}

fn solver_config(s: &SolverArgs) -> SolverConfig {
    SolverConfig {
        eps_f: s.eps_f,
        eps_u: s.eps_u,
        eps_g: s.eps_g,
        k_max: s.kmax,
        solve_every: s.every,
        rtr: RtrConfig {
            restarts: s.restarts,
            ..RtrConfig::default()
        },
        seed: s.seed,
        ..SolverConfig::default()
    }
}

pub fn solve(a: SolveArgs) -> Result<()> {
    let problem = load_problem(&a.problem)?;
    let cfg = solver_config(&a.solver);
    let report = lanczos_solve(&problem, &cfg)?;
    eprintln!(
        "{}: f = {}, kkt = {}, {} Lanczos steps",
        report.termination.as_str(),
        format_f64(report.objective_unscaled()),
        format_f64(report.kkt_unscaled()),
        report.lanczos_steps
    );
    if let Some(path) = &a.history {
        std::fs::write(path, history_csv(&report))?;
    }
    emit(a.report.as_deref(), &(to_json(&report)? + "\n"))
}

fn run_solver(name: &str, problem: &QmpoProblem, cfg: &SolverConfig) -> Result<SolveReport> {
    match name {
        "lanczos" => lanczos_solve(problem, cfg),
        "gpi" => gpi_solve(
            problem,
            &BaselineConfig {
                seed: cfg.seed,
                ..BaselineConfig::default()
            },
        ),
        "rtr" => dense_rtr_oracle_with(problem, cfg.rtr.restarts.max(1) - 1, cfg),
        other => Err(QmpoError::Config(format!(
            "unknown solver `{other}`; choose from lanczos, gpi, rtr"
        ))),
    }
}

fn check_solvers(names: &[String], n: usize) -> Result<()> {
    for s in names {
        if !matches!(s.as_str(), "lanczos" | "gpi" | "rtr") {
            return Err(QmpoError::Config(format!(
                "unknown solver `{s}`; choose from lanczos, gpi, rtr"
            )));
        }
        if s == "rtr" && n > DENSE_ORACLE_MAX_N {
            return Err(QmpoError::Config(format!(
                "solver rtr is dense and limited to n <= {DENSE_ORACLE_MAX_N}, got n = {n}"
            )));
        }
    }
    if names.is_empty() {
        return Err(QmpoError::Config("no solvers given".into()));
    }
    Ok(())
}

/// Relative objective errors against the best solver; empty when the best
/// objective is zero and the ratio is undefined.
fn relative_errors(reports: &[SolveReport]) -> Vec<String> {
    let best = reports
        .iter()
        .map(SolveReport::objective_unscaled)
        .fold(f64::INFINITY, f64::min);
    reports
        .iter()
        .map(|r| match rel_obj_diff(r.objective_unscaled(), best) {
            Ok(v) => format_f64(v),
            Err(_) => String::new(),
        })
        .collect()
}

pub fn compare(a: CompareArgs) -> Result<()> {
    let problem = load_problem(&a.problem)?;
    check_solvers(&a.solvers, problem.n())?;
    let cfg = solver_config(&a.solver);
    let reports = pool()?.install(|| {
        a.solvers
            .par_iter()
            .map(|s| run_solver(s, &problem, &cfg))
            .collect::<Result<Vec<_>>>()
    })?;
    let instance = a
        .instance
        .clone()
        .or_else(|| problem.name.clone())
        .unwrap_or_default();
    let mut out = String::from(COMPARE_HEADER);
    out.push('\n');
    for (r, err) in reports.iter().zip(relative_errors(&reports)) {
        let _ = writeln!(
            out,
            "{instance},{},{},{err},{},{}",
            r.solver,
            format_f64(r.objective_unscaled()),
            format_f64(r.kkt_unscaled()),
            format_f64(r.wall_ms)
        );
    }
    emit(a.out.as_deref(), &out)
}

pub fn verify(a: VerifyArgs) -> Result<()> {
    let problem = gen_synthetic(a.n, a.l, a.density, a.seed)?;
    let cfg = CertifyConfig {
        restarts: a.restarts,
        ..CertifyConfig::default()
    };
    let cert = certify(&problem, &cfg)?;
    eprintln!(
        "{}: {} pass, {} fail, {} skipped",
        cert.name.as_deref().unwrap_or("instance"),
        cert.count(Verdict::Pass),
        cert.count(Verdict::Fail),
        cert.count(Verdict::Skipped)
    );
    for f in cert.failures() {
        eprintln!(
            "  fail k = {} {}: {} > {}",
            f.k,
            f.check,
            f.measured.map(format_f64).unwrap_or_default(),
            f.bound.map(format_f64).unwrap_or_default()
        );
    }
    if let Some(path) = &a.csv {
        std::fs::write(path, certificate_csv(&cert))?;
    }
    emit(a.out.as_deref(), &(to_json(&cert)? + "\n"))
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let mut grid = Vec::new();
    for &n in &a.sizes {
        for &l in &a.ls {
            for &d in &a.densities {
                for &s in &a.seeds {
                    check_solvers(&a.solvers, n)?;
                    grid.push((n, l, d, s));
                }
            }
        }
    }
    let base = solver_config(&a.solver);
    let rows = pool()?.install(|| {
        grid.par_iter()
            .map(|&(n, l, d, seed)| {
                let problem = gen_synthetic(n, l, d, seed)?;
                let cfg = SolverConfig {
                    seed,
                    ..base.clone()
                };
                let reports = a
                    .solvers
                    .iter()
                    .map(|s| run_solver(s, &problem, &cfg))
                    .collect::<Result<Vec<_>>>()?;
                let name = problem.name.clone().unwrap_or_default();
                let mut block = String::new();
                for (r, err) in reports.iter().zip(relative_errors(&reports)) {
                    let _ = writeln!(
                        block,
                        "{name},{n},{l},{d},{seed},{},{},{err},{},{},{},{}",
                        r.solver,
                        format_f64(r.objective_unscaled()),
                        format_f64(r.kkt_unscaled()),
                        format_f64(r.wall_ms),
                        r.lanczos_steps,
                        r.termination.as_str()
                    );
                }
                Ok(block)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = String::from(BENCH_HEADER);
    out.push('\n');
    for block in rows {
        out.push_str(&block);
    }
    emit(a.out.as_deref(), &out)
}
