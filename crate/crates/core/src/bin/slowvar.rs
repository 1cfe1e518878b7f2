use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use slowvar::config::{PipelineConfig, OUT_DIR_ENV};
use slowvar::stages::{run_stage, Stage};
use slowvar::Error;

/// Slow-variable discovery and stationary estimation for reaction networks.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    /// simulate, covariance, graph, spectrum, bin, conditional, stationary, cma, evaluate or all
    stage: String,
    /// Key–value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// cs1, cs2 or a network file
    #[arg(long)]
    system: Option<String>,
    /// `stated` or `table` propensity convention for cs2
    #[arg(long)]
    convention: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    /// Covariance step, or `auto` to calibrate
    #[arg(long)]
    dt: Option<String>,
    /// Bin count, or `auto`
    #[arg(long)]
    k: Option<String>,
    /// Boundary truncation width, or `auto`
    #[arg(long)]
    band: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_iters: Option<String>,
    #[arg(long)]
    n_eigs: Option<String>,
    #[arg(long)]
    spectrum_k: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Comma-separated CMA budgets
    #[arg(long)]
    lc: Option<String>,
    #[arg(long)]
    cma_seeds: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    #[arg(long)]
    cle_dt: Option<String>,
    /// Output directory; overrides the config file and the environment.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    workers: Option<String>,
}

impl Cli {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        [
            ("system", &self.system),
            ("convention", &self.convention),
            ("eps", &self.eps),
            ("rho", &self.rho),
            ("dt", &self.dt),
            ("k", &self.k),
            ("band", &self.band),
            ("tol", &self.tol),
            ("max_iters", &self.max_iters),
            ("n_eigs", &self.n_eigs),
            ("spectrum_k", &self.spectrum_k),
            ("seed", &self.seed),
            ("lcs", &self.lc),
            ("cma_seeds", &self.cma_seeds),
            ("t_end", &self.t_end),
            ("cle_dt", &self.cle_dt),
            ("workers", &self.workers),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }

    fn resolve(&self) -> slowvar::Result<(Stage, PipelineConfig)> {
        let stage: Stage = self.stage.parse()?;
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Ok(dir) = std::env::var(OUT_DIR_ENV) {
            cfg.set("out_dir", &dir)?;
        }
        for (key, value) in self.overrides() {
            cfg.set(key, value)?;
        }
        if let Some(dir) = &self.out {
            cfg.set("out_dir", dir)?;
        }
        cfg.validate()?;
        Ok((stage, cfg))
    }
}

fn fail(err: &Error) -> ExitCode {
    eprintln!("slowvar: {err}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, cfg) = match cli.resolve() {
        Ok(v) => v,
        Err(e) => return fail(&e),
    };
    match run_stage(stage, &cfg) {
        Ok(outcomes) => {
            for o in outcomes {
                println!("{:<12} {:>8.2}s  {}", o.stage.to_string(), o.runtime_s, o.summary);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
