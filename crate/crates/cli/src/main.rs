mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::Parser;
use log::warn;
use serde_json::json;

use mlpa_core::diagnostics::{
    level0_bias_check, logistic_potential, LogisticBenchConfig, LogisticReference,
    DEFAULT_REFERENCE_EPS, DEFAULT_REFERENCE_SEED,
};
use mlpa_core::{
    bench_logistic, bench_ou, confluence_probe, contraction_probe, estimate,
    euler_invariant_moment_oracle, make_langevin_model, plan_aggressive, plan_b1, plan_b2,
    warm_start, Identity, LangevinModel, Norm, Observable, Potential, QuadraticPotential,
    Sigma0Mode, TuningPlan, X0Mode,
};

use config::{
    BenchArgs, Cli, Command, FileConfig, Format, ModelKind, ObservableKind, ProbeArgs, ProbeKind,
    ReferenceKind, RegimeKind, Resolved, RunArgs, StartKind, TuneArgs,
};

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// A plan was refused for infeasibility.
#[derive(Debug)]
struct Refused(String);

impl std::fmt::Display for Refused {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Refused {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Refused>().is_some() {
        return EXIT_INFEASIBLE;
    }
    match err.downcast_ref::<mlpa_core::Error>() {
        Some(mlpa_core::Error::NonFinite { .. }) => EXIT_NUMERICAL,
        Some(mlpa_core::Error::Infeasible(_)) | Some(mlpa_core::Error::EmptyWindow { .. }) => {
            EXIT_INFEASIBLE
        }
        _ => EXIT_USAGE,
    }
}

struct Setup {
    model: LangevinModel,
    potential: Arc<dyn Potential>,
}

fn build_model(r: &Resolved) -> anyhow::Result<Setup> {
    let potential: Arc<dyn Potential> = match r.model {
        ModelKind::Ou => Arc::new(QuadraticPotential::new(r.d)?),
        ModelKind::Logistic => Arc::new(logistic_potential(r.d, r.lambda, r.a, r.covariate_seed)?),
    };
    let model = make_langevin_model(potential.clone(), Sigma0Mode::Auto)?;
    Ok(Setup { model, potential })
}

fn build_plan(r: &Resolved, model: &LangevinModel) -> anyhow::Result<TuningPlan> {
    Ok(match r.regime {
        RegimeKind::B1 => plan_b1(model, r.eps, r.include_log2)?,
        RegimeKind::B2 => plan_b2(model, r.eps, r.include_log2)?,
        RegimeKind::Aggressive => plan_aggressive(model, r.eps)?,
    })
}

fn emit(text: &str, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn cmd_tune(args: &TuneArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_ref())?;
    let r = Resolved::new(&args.common, &file, None);
    let setup = build_model(&r)?;
    let plan = build_plan(&r, &setup.model)?;
    let text = match args.common.format {
        Format::Json => serde_json::to_string_pretty(&plan)?,
        Format::Csv => {
            let mut s = String::from("level,gamma,T\n");
            for (k, (g, t)) in plan.gamma.iter().zip(&plan.horizons).enumerate() {
                writeln!(s, "{k},{g},{t}")?;
            }
            s
        }
    };
    emit(&text, args.common.output.as_deref())?;
    if !plan.feasible {
        return Err(Refused(format!(
            "epsilon = {} is above the feasibility threshold: tau = {:.4} exceeds T_R / 2 = {:.4}",
            r.eps,
            plan.tau,
            plan.effective_tau()
        ))
        .into());
    }
    Ok(())
}

fn parse_vector(source: &str, d: usize) -> anyhow::Result<Vec<f64>> {
    let v = match source {
        "zeros" | "zero" => vec![0.0; d],
        "ones" => vec![1.0; d],
        path => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read starting point {path}"))?;
            match serde_json::from_str::<Vec<f64>>(&text) {
                Ok(v) => v,
                Err(_) => text
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|e| anyhow!("bad number {t:?} in {path}: {e}"))
                    })
                    .collect::<anyhow::Result<_>>()?,
            }
        }
    };
    if v.len() != d {
        bail!("starting point has {} entries, expected {d}", v.len());
    }
    Ok(v)
}

fn starting_point(
    potential: &dyn Potential,
    mode: StartKind,
    x_init: Option<&str>,
    d: usize,
) -> anyhow::Result<Vec<f64>> {
    let init = match x_init {
        Some(src) => parse_vector(src, d)?,
        None => match mode {
            StartKind::Ones => vec![1.0; d],
            _ => vec![0.0; d],
        },
    };
    if mode != StartKind::Warmstart {
        return Ok(init);
    }
    let ws = warm_start(potential, &init, None, 100_000)?;
    if !ws.converged {
        warn!(
            "warm start did not reach |grad U|^2 <= alpha_u d after {} iterations ({:.4e})",
            ws.iters_used, ws.grad_norm_sq
        );
    }
    Ok(ws.x0)
}

fn level_table(out: &mlpa_core::EstimatorOutput) -> String {
    let fmt = |v: &[f64]| {
        if v.len() == 1 {
            format!("{:.6}", v[0])
        } else {
            format!("{v:?}")
        }
    };
    let mut s = format!(
        "{:>5} {:>12} {:>12} {:>10} {:>12} {:>12}\n",
        "level", "gamma", "T", "iterations", "contribution", "cumulative"
    );
    for row in out.level_rows() {
        let _ = writeln!(
            s,
            "{:>5} {:>12.6} {:>12.4} {:>10} {:>12} {:>12}",
            row.level,
            row.gamma,
            row.horizon,
            row.iterations,
            fmt(&row.contribution),
            fmt(&row.cumulative)
        );
    }
    let _ = writeln!(s, "total complexity {}", out.total_complexity);
    s
}

fn cmd_run(args: &RunArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_ref())?;
    let r = Resolved::new(&args.common, &file, None);
    let setup = build_model(&r)?;
    let plan = build_plan(&r, &setup.model)?;
    if !plan.feasible && args.strict {
        return Err(Refused(format!(
            "epsilon = {} is above the feasibility threshold (tau = {:.4} > T_R / 2 = {:.4})",
            r.eps,
            plan.tau,
            plan.effective_tau()
        ))
        .into());
    }
    let warm = args.warm_start || file.warm_start.unwrap_or(false);
    let mode = if warm {
        StartKind::Warmstart
    } else {
        args.x0.or(file.x0).unwrap_or(StartKind::Zero)
    };
    let x_init = args.x_init.clone().or(file.x_init.clone());
    let x0 = starting_point(setup.potential.as_ref(), mode, x_init.as_deref(), r.d)?;
    let observable: &dyn Observable = match args
        .observable
        .or(file.observable)
        .unwrap_or(ObservableKind::Norm)
    {
        ObservableKind::Norm => &Norm,
        ObservableKind::Identity => &Identity,
    };
    let out = estimate(&setup.model, &plan, &x0, observable, r.seed)?;
    let text = if args.table {
        level_table(&out)
    } else {
        match args.common.format {
            Format::Json => out.to_json(),
            Format::Csv => {
                let mut buf = Vec::new();
                out.write_csv(&mut buf)?;
                String::from_utf8(buf)?
            }
        }
    };
    emit(&text, args.common.output.as_deref())
}

fn cmd_bench(args: &BenchArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_ref())?;
    let r = Resolved::new(&args.common, &file, args.suite);
    let runs = args.runs.or(file.n_runs).unwrap_or(50);
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    let x0 = args.x0.or(file.x0);
    let report = match r.model {
        ModelKind::Ou => {
            if r.regime != RegimeKind::B2 {
                bail!("the OU benchmark uses the b2 regime");
            }
            let mode = match x0.unwrap_or(StartKind::Zero) {
                StartKind::Zero => X0Mode::Zero,
                StartKind::Ones => X0Mode::Ones,
                StartKind::Warmstart => X0Mode::WarmStart,
            };
            bench_ou(r.d, r.eps, runs, mode, r.seed)?
        }
        ModelKind::Logistic => {
            let mut config = LogisticBenchConfig::new(r.d, r.lambda, r.a, r.eps, runs, r.seed);
            config.covariate_seed = r.covariate_seed;
            config.aggressive = match r.regime {
                RegimeKind::B2 => false,
                RegimeKind::Aggressive => true,
                RegimeKind::B1 => bail!("the logistic benchmark uses the b2 or aggressive regime"),
            };
            config.x0_mode = match x0.unwrap_or(StartKind::Warmstart) {
                StartKind::Zero => X0Mode::Zero,
                StartKind::Ones => X0Mode::Ones,
                StartKind::Warmstart => X0Mode::WarmStart,
            };
            config.reference = match args
                .reference
                .or(file.reference)
                .unwrap_or(ReferenceKind::Estimate)
            {
                ReferenceKind::Quadrature => LogisticReference::Quadrature,
                ReferenceKind::Estimate => LogisticReference::Estimate {
                    eps: args
                        .ref_eps
                        .or(file.ref_eps)
                        .unwrap_or(DEFAULT_REFERENCE_EPS),
                    seed: args
                        .ref_seed
                        .or(file.ref_seed)
                        .unwrap_or(DEFAULT_REFERENCE_SEED),
                },
            };
            bench_logistic(&config)?
        }
    };
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let csv = String::from_utf8(csv)?;
    match &args.common.output {
        Some(path) => {
            std::fs::write(path, report.to_json())
                .with_context(|| format!("cannot write {}", path.display()))?;
            let csv_path: PathBuf = path.with_extension("csv");
            std::fs::write(&csv_path, csv)
                .with_context(|| format!("cannot write {}", csv_path.display()))?;
        }
        None => match args.common.format {
            Format::Json => emit(&report.to_json(), None)?,
            Format::Csv => emit(&csv, None)?,
        },
    }
    Ok(())
}

fn cmd_probe(args: &ProbeArgs) -> anyhow::Result<()> {
    let file = FileConfig::load(args.common.config.as_ref())?;
    let r = Resolved::new(&args.common, &file, None);
    let gamma = args.gamma.or(file.gamma);
    let value = match args.probe {
        ProbeKind::Confluence => {
            let setup = build_model(&r)?;
            let report = confluence_probe(
                &setup.model,
                gamma.unwrap_or(0.25),
                args.horizon.or(file.horizon).unwrap_or(50.0),
                args.paths.or(file.n_paths).unwrap_or(2000),
                r.seed,
            )?;
            serde_json::to_value(report)?
        }
        ProbeKind::Contraction => {
            let setup = build_model(&r)?;
            let gamma = gamma.unwrap_or(0.5);
            let x = vec![0.0; r.d];
            let mut y = vec![0.0; r.d];
            y[0] = 1.0;
            let dist = contraction_probe(
                &setup.model,
                &x,
                &y,
                gamma,
                args.steps.or(file.n_steps).unwrap_or(16),
                r.seed,
            )?;
            let rate = 1.0 - setup.model.alpha_eff() * gamma;
            let worst_ratio = dist
                .iter()
                .enumerate()
                .map(|(n, v)| v / rate.powi(n as i32))
                .fold(0.0, f64::max);
            json!({
                "probe": "contraction",
                "model": setup.model.label(),
                "gamma": gamma,
                "envelope_rate": rate,
                "max_ratio_to_envelope": worst_ratio,
                "distances": dist,
            })
        }
        ProbeKind::InvariantMoment => {
            let gamma = gamma.unwrap_or(0.5);
            let oracle = euler_invariant_moment_oracle(gamma)?;
            let model =
                make_langevin_model(Arc::new(QuadraticPotential::new(1)?), Sigma0Mode::Auto)?;
            let check = level0_bias_check(
                &model,
                gamma,
                100.0,
                args.horizon.or(file.horizon).unwrap_or(5e4),
                0,
                50,
                r.seed,
            )?;
            json!({
                "probe": "invariant-moment",
                "gamma": gamma,
                "oracle": oracle,
                "level0_check": check,
            })
        }
    };
    emit(
        &serde_json::to_string_pretty(&value)?,
        args.common.output.as_deref(),
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let result = match &cli.command {
        Command::Tune(a) => cmd_tune(a),
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Probe(a) => cmd_probe(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
