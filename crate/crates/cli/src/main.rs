use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use defect_fcs::harness::{self, acceptance, RescaleExponents, RunConfig, RunKind, SweepSpec};
use defect_fcs::{Error, Result};

/// Defect statistics of slow quenches across a quantum critical point.
#[derive(Parser, Debug)]
#[command(name = "defect-fcs", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sweep points (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Assert that no random number generator is used. Every computation is
    /// deterministic, so this only documents intent.
    #[arg(long, global = true)]
    seedless: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Effective-oscillator sweep: reflection, moments and work on a time grid.
    Effective(EffectiveArgs),
    /// Exact finite-N quench of the fully connected Ising model.
    Lmg(LmgArgs),
    /// Pair-number law P(k; eta) at the critical point.
    Analytic(AnalyticArgs),
    /// Collapse metrics of LMG datasets grouped by N/tau.
    Collapse(CollapseArgs),
    /// Run the acceptance checks, one JSON object per line.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct EffectiveArgs {
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    #[arg(long = "omega-c", value_delimiter = ',')]
    omega_c: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<usize>,
    /// Also write excitation and energy distributions at t = +tau into DIR.
    #[arg(long, value_name = "DIR")]
    distributions: Option<PathBuf>,
    /// Write a gnuplot script next to the output file.
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct LmgArgs {
    #[arg(long = "n", value_delimiter = ',')]
    n_sites: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    tau: Option<Vec<f64>>,
    #[arg(long = "n-over-tau", value_delimiter = ',')]
    n_over_tau: Option<Vec<f64>>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct AnalyticArgs {
    #[arg(long, value_delimiter = ',')]
    eta: Option<Vec<f64>>,
    #[arg(long = "k-max")]
    k_max: Option<u64>,
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct CollapseArgs {
    /// LMG run CSVs; appended to the configured inputs.
    inputs: Vec<PathBuf>,
    #[arg(long = "time-exp-n", allow_hyphen_values = true)]
    time_exp_n: Option<f64>,
    #[arg(long = "time-exp-tau", allow_hyphen_values = true)]
    time_exp_tau: Option<f64>,
    #[arg(long = "value-exp-n", allow_hyphen_values = true)]
    value_exp_n: Option<f64>,
    #[arg(long = "value-exp-tau", allow_hyphen_values = true)]
    value_exp_tau: Option<f64>,
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Only run these criterion ids.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u32>>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_plot(kind: RunKind, plot: bool, out: Option<&Path>) -> Result<()> {
    if !plot {
        return Ok(());
    }
    let csv = out.ok_or_else(|| Error::Config("--plot needs --out".into()))?;
    let script = csv.with_extension("gp");
    let mut w = BufWriter::new(File::create(&script)?);
    harness::write_gnuplot_script(kind, csv, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Ok(true) when every requested check passed.
fn execute(cli: Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.out.is_some() {
        cfg.output.path = cli.out.clone();
    }
    set(&mut cfg.output.jobs, cli.jobs);
    let out = cfg.output.path.clone();

    match cli.command {
        Command::Effective(a) => {
            let e = &mut cfg.effective;
            set(&mut e.eta, a.eta);
            set(&mut e.tau, a.tau);
            set(&mut e.omega_c, a.omega_c);
            set(&mut e.delta, a.delta);
            set(&mut e.samples, a.samples);
            let spec = SweepSpec::from_config(RunKind::Effective, &cfg);
            let blocks = harness::run_effective(&spec, &cfg)?;
            let mut w = open_output(out.as_deref())?;
            harness::write_effective_csv(&blocks, &mut w)?;
            w.flush()?;
            if let Some(dir) = a.distributions {
                harness::write_final_distributions(&blocks, &dir)?;
            }
            emit_plot(RunKind::Effective, a.plot || cfg.output.plot, out.as_deref())?;
        }
        Command::Lmg(a) => {
            let l = &mut cfg.lmg;
            set(&mut l.n_sites, a.n_sites);
            set(&mut l.samples, a.samples);
            // explicit τ values on the command line replace the ratio axis
            if a.tau.is_some() && a.n_over_tau.is_none() {
                l.n_over_tau.clear();
            }
            if a.n_over_tau.is_some() && a.tau.is_none() {
                l.tau.clear();
            }
            set(&mut l.tau, a.tau);
            set(&mut l.n_over_tau, a.n_over_tau);
            let spec = SweepSpec::from_config(RunKind::Lmg, &cfg);
            let records = harness::run_lmg(&spec, &cfg)?;
            let mut w = open_output(out.as_deref())?;
            harness::write_lmg_csv(&records, &mut w)?;
            w.flush()?;
            emit_plot(RunKind::Lmg, a.plot || cfg.output.plot, out.as_deref())?;
        }
        Command::Analytic(a) => {
            set(&mut cfg.analytic.eta, a.eta);
            set(&mut cfg.analytic.k_max, a.k_max);
            let spec = SweepSpec::from_config(RunKind::Analytic, &cfg);
            let rows = harness::analytic_table(&spec, cfg.analytic.k_max)?;
            let mut w = open_output(out.as_deref())?;
            harness::write_analytic_csv(&rows, &mut w)?;
            w.flush()?;
            emit_plot(RunKind::Analytic, a.plot || cfg.output.plot, out.as_deref())?;
        }
        Command::Collapse(a) => {
            let c = &mut cfg.collapse;
            c.inputs.extend(a.inputs);
            set(&mut c.time_exp_n, a.time_exp_n);
            set(&mut c.time_exp_tau, a.time_exp_tau);
            set(&mut c.value_exp_n, a.value_exp_n);
            set(&mut c.value_exp_tau, a.value_exp_tau);
            set(&mut c.grid, a.grid);
            if c.inputs.is_empty() {
                return Err(Error::Config("collapse needs at least one input dataset".into()));
            }
            let mut curves = Vec::new();
            for path in &c.inputs {
                let f = File::open(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                curves.extend(harness::read_lmg_curves(f)?);
            }
            let exps = RescaleExponents {
                time_n: c.time_exp_n,
                time_tau: c.time_exp_tau,
                value_n: c.value_exp_n,
                value_tau: c.value_exp_tau,
            };
            let report = harness::collapse(&curves, exps, c.grid)?;
            let mut w = open_output(out.as_deref())?;
            writeln!(w, "{}", report.to_json())?;
            w.flush()?;
        }
        Command::Validate(a) => {
            let mut w = open_output(out.as_deref())?;
            let mut all_pass = true;
            for (id, check) in (1u32..).zip(acceptance::all_criteria()) {
                if a.only.as_ref().is_some_and(|ids| !ids.contains(&id)) {
                    continue;
                }
                let r = check();
                eprintln!("{}", r.summary_line());
                writeln!(w, "{}", r.to_json())?;
                w.flush()?;
                all_pass &= r.pass;
            }
            return Ok(all_pass);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
