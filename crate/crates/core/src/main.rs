use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use twotier::harness::{self, emit_report, Format, Status, Tolerances};
use twotier::transport::write_trace;
use twotier::{check_theorems, emit, run_sweep, Error, Result, SimConfig, SweepPlan};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

/// Sweep primary density and cell size, fit the scaling laws and report verdicts.
#[derive(Debug, Parser)]
#[command(name = "twotier", version)]
struct Cli {
    /// Primary densities, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [64.0, 128.0, 256.0, 512.0, 1024.0])]
    n: Vec<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Multipliers of the minimum primary cell area, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    ap_scale: Vec<f64>,
    /// Seeds per point.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed0: u64,
    /// Primary frames per run, warmup included.
    #[arg(long)]
    frames: Option<u32>,
    #[arg(long)]
    warmup: Option<u32>,
    /// Result file; the fit report goes next to it with a `.fit.json` suffix.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
    /// Write a per-packet trace of the first configuration to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = Tolerances::default().slope)]
    tolerance_slope: f64,
    #[arg(long, default_value_t = Tolerances::default().constancy)]
    tolerance_const: f64,
    /// JSON base configuration; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Exit successfully even when a verdict fails.
    #[arg(long)]
    no_verdict: bool,
}

fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

fn base_config(cli: &Cli) -> Result<SimConfig> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => SimConfig::default(),
    };
    if let Some(b) = cli.beta {
        cfg.beta = b;
    }
    if let Some(a) = cli.alpha {
        cfg.alpha = a;
    }
    if let Some(f) = cli.frames {
        cfg.frames = f;
    }
    if let Some(w) = cli.warmup {
        cfg.warmup_frames = w;
    }
    Ok(cfg)
}

fn report_path(out: &Path) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".fit.json");
    out.with_file_name(name)
}

fn run(cli: &Cli) -> Result<bool> {
    if cli.seeds == 0 || cli.n.is_empty() || cli.ap_scale.is_empty() {
        return Err(Error::Config("need at least one density, cell scale and seed".into()));
    }
    let base = base_config(cli)?;
    let plan = SweepPlan {
        base,
        ns: cli.n.clone(),
        ap_scales: cli.ap_scale.clone(),
        seeds: (cli.seed0..cli.seed0 + cli.seeds).collect(),
    };
    for cfg in plan.configs() {
        cfg.validate()?;
    }

    if let Some(trace) = &cli.trace {
        let first = plan.configs().remove(0);
        let (_, records) = harness::run_point_traced(&first, true)?;
        let file = File::create(trace).map_err(|source| Error::Io { path: trace.clone(), source })?;
        write_trace(&records, BufWriter::new(file)).map_err(|source| Error::Io { path: trace.clone(), source })?;
    }

    let results = run_sweep(&plan)?;
    let format = match cli.format {
        OutFormat::Csv => Format::Csv,
        OutFormat::Json => Format::Json,
    };
    emit(&results, &cli.out, format)?;

    let tol = Tolerances { slope: cli.tolerance_slope, constancy: cli.tolerance_const };
    let report = check_theorems(&results, tol);
    emit_report(&report, &report_path(&cli.out))?;
    for v in &report.verdicts {
        let tag = match v.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Inconclusive => "INCONCLUSIVE",
        };
        println!("{tag:<12} {:<18} {}", v.name, v.detail);
    }
    let invalid = results.iter().filter(|r| !r.valid).count();
    if invalid > 0 {
        println!("{invalid} of {} runs invalid", results.len());
    }
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(pass) if pass || cli.no_verdict => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
