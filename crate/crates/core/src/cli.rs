//! Command-line driver. Every command is a pure function of the system
//! file and its flags: identical invocations produce byte-identical
//! artifacts, so runs can be diffed.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::asymcheck::{expansion_rows, QHatBundle};
use crate::model::{validate, SystemConfig, ValidatedSystem};
use crate::numerics::OdeOptions;
use crate::reconstruct::{ReconstructOptions, Reconstruction};
use crate::spectral::{write_samples_jsonl, RayEvaluator, RayHealth, SpectralSample};
use crate::unperturbed::{condition1_determinants, FrobeniusBasis, SectorFrame};
use crate::weyl::EngineOptions;
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "weylmap",
    version,
    about = "Forward spectral solves and contour-integral potential recovery \
             for first-order systems with an x^{-1} singularity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a system file against the admissibility assumptions
    Validate(ValidateArgs),
    /// Sample the spectral jump matrix along the separation rays
    Forward(ForwardArgs),
    /// Measure how fast the Weyl matrix approaches its large-parameter form
    VerifyAsymptotics(VerifyArgs),
    /// Recover the potential from the jump by contour integration
    Reconstruct(ReconstructArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// System description file (JSON)
    #[arg(long)]
    spec: PathBuf,
    /// Worker threads; falls back to WEYLMAP_THREADS, then 1
    #[arg(long)]
    threads: Option<usize>,
    /// Relative tolerance for the transport integrator
    #[arg(long)]
    tol: Option<f64>,
}

impl CommonArgs {
    fn load(&self) -> Result<ValidatedSystem> {
        let cfg = SystemConfig::load(&self.spec)?;
        let (report, sys) = validate(&cfg)?;
        match sys {
            Some(sys) => Ok(sys),
            None => {
                let failed = report.first_failure().expect("failed check");
                Err(Error::Assumption(format!(
                    "{}: {}",
                    failed.name, failed.detail
                )))
            }
        }
    }

    fn engine(&self) -> EngineOptions {
        let mut opts = EngineOptions::default();
        if let Some(tol) = self.tol {
            opts.ode.rtol = tol;
            opts.ode.atol = tol * 1e-3;
        }
        opts
    }

    fn thread_count(&self) -> usize {
        self.threads
            .or_else(|| {
                std::env::var("WEYLMAP_THREADS")
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or(1)
            .max(1)
    }

    fn run_pooled<T: Send>(&self, work: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.thread_count())
            .build()
            .map_err(|e| Error::Format(format!("thread pool: {e}")))?;
        pool.install(work)
    }
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ForwardArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output JSONL sample store
    #[arg(long)]
    out: PathBuf,
    /// Abscissas to sample at
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    x_grid: Vec<f64>,
    /// Largest spectral radius
    #[arg(long, default_value_t = 80.0)]
    rho_max: f64,
    /// Radii per ray, geometrically spaced up to --rho-max
    #[arg(long, default_value_t = 20)]
    per_ray: usize,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output CSV of residual rows
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    x_grid: Vec<f64>,
    /// Direction arg(rho) in radians; must lie inside a sector
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    angle: f64,
    /// Radii of the decay schedule
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 40.0, 80.0])]
    r_schedule: Vec<f64>,
    /// Bound on the final off-diagonal residual, relative to the corrected
    /// potential
    #[arg(long, default_value_t = 0.05)]
    threshold: f64,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for the CSV and summary artifacts
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0])]
    x_grid: Vec<f64>,
    /// Truncation radii entering the extrapolation (geometric)
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 20.0, 40.0, 80.0])]
    r_schedule: Vec<f64>,
    /// Inner contour cutoff
    #[arg(long, default_value_t = 1e-2)]
    delta: f64,
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let outcome = match cli.command {
        Command::Validate(args) => cmd_validate(&args),
        Command::Forward(args) => cmd_forward(&args),
        Command::VerifyAsymptotics(args) => cmd_verify_asymptotics(&args),
        Command::Reconstruct(args) => cmd_reconstruct(&args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => Ok(std::fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(args: &ValidateArgs) -> Result<()> {
    let cfg = SystemConfig::load(&args.common.spec)?;
    let (report, sys) = validate(&cfg)?;
    let mut text = report.to_string();
    if let Some(sys) = &sys {
        writeln!(text, "eigenvalues:").unwrap();
        for (k, mu) in sys.mu.iter().enumerate() {
            writeln!(text, "  mu_{} = {:+.12e} {:+.12e}i", k + 1, mu.re, mu.im).unwrap();
        }
        writeln!(text, "sectors:").unwrap();
        for (v, sector) in sys.geometry.sectors.iter().enumerate() {
            writeln!(
                text,
                "  S_{v}: arg in [{:.6}, {:.6}), order {:?}",
                sector.theta_lo, sector.theta_hi, sector.order
            )
            .unwrap();
        }
        let frob = FrobeniusBasis::build(sys, 1.0)?;
        writeln!(text, "connection margins (x = 1):").unwrap();
        for v in 0..sys.geometry.sectors.len() {
            let frame = SectorFrame::new(sys, v);
            let dets = condition1_determinants(sys, &frob, &frame, 1.0, &OdeOptions::default())?;
            let line: Vec<String> = dets.iter().map(|d| format!("{:.6e}", d.norm())).collect();
            writeln!(text, "  S_{v}: |D_0k| = [{}]", line.join(", ")).unwrap();
        }
        let bundle = QHatBundle::build(sys);
        for v in bundle.xp_verdicts()? {
            if !v.in_xp {
                writeln!(
                    text,
                    "[warn] corrected potential leaves the admissible class: \
                     entry ({}, {}) obstruction {:.3e}",
                    v.i + 1,
                    v.j + 1,
                    v.obstruction
                )
                .unwrap();
            }
        }
    }
    emit(&args.out, &text)?;
    if sys.is_none() {
        let failed = report.first_failure().expect("failed check");
        return Err(Error::Assumption(format!(
            "{}: {}",
            failed.name, failed.detail
        )));
    }
    Ok(())
}

fn cmd_forward(args: &ForwardArgs) -> Result<()> {
    let sys = args.common.load()?;
    check_grid(&args.x_grid)?;
    if args.per_ray < 1 || args.rho_max <= 1.0 {
        return Err(Error::Format("need per-ray >= 1 and rho-max > 1".into()));
    }
    let engine = args.common.engine();
    let radii: Vec<f64> = (0..args.per_ray)
        .map(|k| {
            if args.per_ray == 1 {
                args.rho_max
            } else {
                (args.rho_max.ln() * k as f64 / (args.per_ray - 1) as f64).exp()
            }
        })
        .collect();
    let (samples, health) = args.common.run_pooled(|| {
        let mut samples: Vec<SpectralSample> = Vec::new();
        let mut health = RayHealth::default();
        for ray in 0..sys.geometry.ray_count() {
            let ev = RayEvaluator::new(&sys, ray, engine.clone())?;
            for &r in &radii {
                samples.extend(ev.samples_at(r, &args.x_grid, &mut health)?);
            }
        }
        Ok((samples, health))
    })?;
    let mut buf = Vec::new();
    write_samples_jsonl(&mut buf, &samples)?;
    std::fs::write(&args.out, &buf)?;
    eprintln!(
        "{} samples ({} rays x {} radii x {} abscissas); min |D_k| = {:.3e}, \
         max condition = {:.3e}, max transport drift = {:.3e}",
        samples.len(),
        sys.geometry.ray_count(),
        radii.len(),
        args.x_grid.len(),
        health.delta_min,
        health.cond_max,
        health.t_residual_max
    );
    Ok(())
}

fn cmd_verify_asymptotics(args: &VerifyArgs) -> Result<()> {
    let sys = args.common.load()?;
    check_grid(&args.x_grid)?;
    check_grid(&args.r_schedule)?;
    let engine = args.common.engine();
    let bundle = QHatBundle::build(&sys);
    let mut csv =
        String::from("x,rho_abs,offdiag_residual,diag_magnitude,spectral_gap,qhat_norm\n");
    let mut failures = Vec::new();
    for &x in &args.x_grid {
        let rows = args.common.run_pooled(|| {
            expansion_rows(&sys, &bundle, args.angle, x, &args.r_schedule, &engine)
        })?;
        for row in &rows {
            writeln!(
                csv,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                x, row.rho_abs, row.offdiag_residual, row.diag_magnitude, row.p_gap, row.qhat_norm
            )
            .unwrap();
        }
        let decreasing = rows
            .windows(2)
            .all(|w| w[1].offdiag_residual < w[0].offdiag_residual);
        let last = rows.last().expect("nonempty schedule");
        let small_enough = last.offdiag_residual <= args.threshold * last.qhat_norm;
        let verdict = if decreasing && small_enough {
            "pass"
        } else {
            "FAIL"
        };
        eprintln!(
            "x = {x}: residual {:.3e} -> {:.3e} vs bound {:.3e} [{verdict}]",
            rows[0].offdiag_residual,
            last.offdiag_residual,
            args.threshold * last.qhat_norm
        );
        if verdict == "FAIL" {
            failures.push(x);
        }
    }
    emit(&args.out, &csv)?;
    if !failures.is_empty() {
        return Err(Error::NonConvergence(format!(
            "residual decay not confirmed at x = {failures:?}"
        )));
    }
    Ok(())
}

fn cmd_reconstruct(args: &ReconstructArgs) -> Result<()> {
    let sys = args.common.load()?;
    check_grid(&args.x_grid)?;
    check_grid(&args.r_schedule)?;
    crate::reconstruct::schedule_ratio(&args.r_schedule)?;
    std::fs::create_dir_all(&args.out)?;
    let opts = ReconstructOptions {
        delta: args.delta,
        r_schedule: args.r_schedule.clone(),
        engine: args.common.engine(),
        ..ReconstructOptions::default()
    };
    let data = args
        .common
        .run_pooled(|| crate::reconstruct::sample_contour(&sys, &args.x_grid, &opts))?;
    write_convergence_csv(&args.out.join("convergence.csv"), &data)?;
    let rec = crate::reconstruct::extract_limit(&sys, &data, &opts)?;
    let summary = summary_json(&sys, &rec, &opts);
    std::fs::write(&args.out.join("summary.json"), &summary)?;
    if !rec.converged {
        return Err(Error::NonConvergence(
            "truncation sweep did not settle; reconstruction withheld".into(),
        ));
    }
    write_reconstruction_csv(&args.out.join("reconstruction.csv"), &sys, &rec)?;
    eprintln!(
        "reconstruction written; extrapolation jump {:.3e}, min |D_k| = {:.3e}",
        rec.max_jump, rec.health.delta_min
    );
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Format("empty grid".into()));
    }
    if grid.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Format(
            "grid values must be positive and finite".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Format(
            "grid values must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn write_convergence_csv(path: &Path, data: &crate::reconstruct::ContourData) -> Result<()> {
    let mut csv = String::from("r,x,partial_norm\n");
    for (e, per_x) in data.partial.iter().enumerate() {
        for (j, m) in per_x.iter().enumerate() {
            writeln!(
                csv,
                "{:.16e},{:.16e},{:.16e}",
                data.edges[e],
                data.xs[j],
                m.norm_max()
            )
            .unwrap();
        }
    }
    Ok(std::fs::write(path, csv)?)
}

fn write_reconstruction_csv(
    path: &Path,
    sys: &ValidatedSystem,
    rec: &Reconstruction,
) -> Result<()> {
    let mut csv = String::from("x,i,j,est_re,est_im,true_re,true_im,abs_err,rel_err\n");
    for (jx, &x) in rec.xs.iter().enumerate() {
        let truth = sys.q.eval(x);
        for i in 0..sys.n {
            for j in 0..sys.n {
                let got = rec.estimate[jx][(i, j)];
                let want = truth[(i, j)];
                let abs = (got - want).norm();
                let rel = if want.norm() > 1e-300 {
                    abs / want.norm()
                } else {
                    abs
                };
                writeln!(
                    csv,
                    "{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    x,
                    i + 1,
                    j + 1,
                    got.re,
                    got.im,
                    want.re,
                    want.im,
                    abs,
                    rel
                )
                .unwrap();
            }
        }
    }
    Ok(std::fs::write(path, csv)?)
}

fn summary_json(sys: &ValidatedSystem, rec: &Reconstruction, opts: &ReconstructOptions) -> String {
    #[derive(serde::Serialize)]
    struct Summary {
        label: Option<String>,
        n: usize,
        xs: Vec<f64>,
        r_schedule: Vec<f64>,
        delta: f64,
        converged: bool,
        extrapolation_jump: f64,
        max_rel_error: f64,
        max_abs_error: f64,
        delta_min: f64,
        cond_max: f64,
        transport_drift_max: f64,
    }
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    for (jx, &x) in rec.xs.iter().enumerate() {
        let truth = sys.q.eval(x);
        for i in 0..sys.n {
            for j in 0..sys.n {
                let abs = (rec.estimate[jx][(i, j)] - truth[(i, j)]).norm();
                max_abs = max_abs.max(abs);
                if truth[(i, j)].norm() > 1e-300 {
                    max_rel = max_rel.max(abs / truth[(i, j)].norm());
                }
            }
        }
    }
    let summary = Summary {
        label: sys.label.clone(),
        n: sys.n,
        xs: rec.xs.clone(),
        r_schedule: opts.r_schedule.clone(),
        delta: opts.delta,
        converged: rec.converged,
        extrapolation_jump: rec.max_jump,
        max_rel_error: max_rel,
        max_abs_error: max_abs,
        delta_min: rec.health.delta_min,
        cond_max: rec.health.cond_max,
        transport_drift_max: rec.health.t_residual_max,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serialization");
    text.push('\n');
    text
}
