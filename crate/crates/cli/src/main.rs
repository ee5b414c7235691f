use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};
use hall_edge_cli::{dispatch, MissingModel, RunConfig, THREADS_ENV};

/// Edge conductance of lattice quantum Hall models: spectroscopy, free
/// response, Luttinger reference model and RG flow.
#[derive(Parser, Debug)]
#[command(name = "hall-edge", version)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for data files and the JSON report.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; overrides the HALL_EDGE_THREADS variable.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Do not echo the report on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fiber spectrum with edge weights on a momentum grid.
    Spectrum(LatticeArgs),
    /// Edge branches, Fermi points, velocities and assumption flags.
    Edges(LatticeArgs),
    /// Free edge conductance with lattice Ward-identity checks.
    Conductance(ConductanceArgs),
    /// Real-time against Euclidean response at several temperatures.
    Wick(WickArgs),
    /// Universality ensemble and directional limits of the reference model.
    RefCheck(RefArgs),
    /// Regularized anomalous bubble and same-chirality shell bubbles.
    Bubble(BubbleArgs),
    /// Second-order flow of the running couplings.
    Rg(RgArgs),
}

#[derive(Args, Debug, Default)]
struct LatticeArgs {
    /// Model kind (haldane, hofstadter, stacked, blocks) or a model file.
    #[arg(long)]
    model: Option<String>,
    /// Chemical potential.
    #[arg(long, allow_hyphen_values = true)]
    mu: Option<f64>,
    #[arg(long)]
    l1: Option<usize>,
    #[arg(long)]
    l2: Option<usize>,
}

#[derive(Args, Debug)]
struct ConductanceArgs {
    #[command(flatten)]
    lattice: LatticeArgs,
    /// Haldane model in its topological phase; expects one edge mode.
    #[arg(long, conflicts_with = "trivial")]
    topological: bool,
    /// Haldane model with a large mass; expects no edge mode.
    #[arg(long)]
    trivial: bool,
    #[arg(long)]
    a: Option<usize>,
    #[arg(long)]
    a_prime: Option<usize>,
    /// Expected Σ sgn(v) on the lower edge.
    #[arg(long, allow_hyphen_values = true)]
    expect: Option<i32>,
}

#[derive(Args, Debug)]
struct WickArgs {
    #[command(flatten)]
    lattice: LatticeArgs,
    /// Inverse temperature; repeat for several.
    #[arg(long = "beta")]
    betas: Vec<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    a: Option<usize>,
    #[arg(long)]
    a_prime: Option<usize>,
}

#[derive(Args, Debug)]
struct RefArgs {
    /// Largest channel count in the ensemble.
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    lambda_scale: Option<f64>,
    #[arg(long)]
    limit_sets: Option<usize>,
}

#[derive(Args, Debug)]
struct BubbleArgs {
    /// Scale pair `h:N`; repeat for several, coarse to fine.
    #[arg(long = "scale", value_parser = parse_scale_pair, allow_hyphen_values = true)]
    scales: Vec<[i32; 2]>,
    #[arg(long, allow_hyphen_values = true)]
    velocity: Option<f64>,
}

#[derive(Args, Debug)]
struct RgArgs {
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Comma-separated channel velocities.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    velocities: Option<Vec<f64>>,
    /// Number of scales below h = 0.
    #[arg(long)]
    scales: Option<u32>,
    /// Compare the diagram evaluator with the Wick enumeration.
    #[arg(long)]
    oracle: bool,
}

fn parse_scale_pair(s: &str) -> std::result::Result<[i32; 2], String> {
    let (h, n) = s.split_once(':').ok_or_else(|| format!("expected h:N, got `{s}`"))?;
    let h = h.trim().parse().map_err(|e| format!("h in `{s}`: {e}"))?;
    let n = n.trim().parse().map_err(|e| format!("N in `{s}`: {e}"))?;
    Ok([h, n])
}

fn apply_lattice(cfg: &mut RunConfig, a: &LatticeArgs) -> Result<()> {
    if let Some(l1) = a.l1 {
        cfg.geometry.l1 = l1;
    }
    if let Some(l2) = a.l2 {
        cfg.geometry.l2 = l2;
    }
    if let Some(model) = &a.model {
        let mut table = toml::Table::new();
        if model.ends_with(".toml") {
            table.insert("file".into(), std::path::absolute(model)?.display().to_string().into());
        } else {
            // Keep parameters from the config when it names the same kind.
            if let Some(existing) = &cfg.model {
                if existing.get("kind").and_then(|k| k.as_str()) == Some(model) {
                    table = existing.clone();
                }
            }
            table.insert("kind".into(), model.clone().into());
        }
        if let Some(mu) = cfg.model.as_ref().and_then(|m| m.get("mu")) {
            table.entry("mu").or_insert(mu.clone());
        }
        cfg.model = Some(table);
    }
    if let Some(mu) = a.mu {
        let Some(table) = cfg.model.as_mut() else { return Err(MissingModel.into()) };
        table.insert("mu".into(), mu.into());
    }
    Ok(())
}

fn set_phase(cfg: &mut RunConfig, phase: &str, mass: f64) -> Result<()> {
    let table = cfg.model.get_or_insert_with(|| {
        let mut t = toml::Table::new();
        t.insert("kind".into(), "haldane".into());
        t
    });
    if table.get("kind").and_then(|k| k.as_str()) != Some("haldane") {
        bail!("--{phase} applies to the haldane model");
    }
    table.insert("mass".into(), mass.into());
    cfg.run.phase = Some(phase.into());
    Ok(())
}

fn build_config(cli: &Cli) -> Result<(String, RunConfig)> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.run.output_dir = out.clone();
    } else if let Some(dir) = &cfg.base_dir {
        if cfg.run.output_dir.is_relative() && cli.config.is_some() {
            cfg.run.output_dir = dir.join(&cfg.run.output_dir);
        }
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    let name = match &cli.command {
        None => match &cfg.run.command {
            Some(c) => c.clone(),
            None => bail!(Usage("no command given".into())),
        },
        Some(Command::Spectrum(a)) => {
            apply_lattice(&mut cfg, a)?;
            "spectrum".into()
        }
        Some(Command::Edges(a)) => {
            apply_lattice(&mut cfg, a)?;
            "edges".into()
        }
        Some(Command::Conductance(c)) => {
            apply_lattice(&mut cfg, &c.lattice)?;
            if c.topological {
                set_phase(&mut cfg, "topological", 0.0)?;
            }
            if c.trivial {
                set_phase(&mut cfg, "trivial", 3.0)?;
            }
            if let Some(a) = c.a {
                cfg.geometry.a = a;
            }
            if let Some(a) = c.a_prime {
                cfg.geometry.a_prime = a;
            }
            if c.expect.is_some() {
                cfg.run.expected_chirality = c.expect;
            }
            "conductance".into()
        }
        Some(Command::Wick(w)) => {
            apply_lattice(&mut cfg, &w.lattice)?;
            if !w.betas.is_empty() {
                cfg.run.betas = w.betas.clone();
            }
            if let Some(t) = w.horizon {
                cfg.run.horizon = t;
            }
            if let Some(a) = w.a {
                cfg.geometry.a = a;
            }
            if let Some(a) = w.a_prime {
                cfg.geometry.a_prime = a;
            }
            "wick".into()
        }
        Some(Command::RefCheck(r)) => {
            let s = &mut cfg.reference;
            s.channels = r.channels.unwrap_or(s.channels);
            s.ensemble_size = r.ensemble_size.unwrap_or(s.ensemble_size);
            s.lambda_scale = r.lambda_scale.unwrap_or(s.lambda_scale);
            s.limit_sets = r.limit_sets.unwrap_or(s.limit_sets);
            "ref-check".into()
        }
        Some(Command::Bubble(b)) => {
            if !b.scales.is_empty() {
                cfg.reference.bubble_scales = b.scales.clone();
            }
            if let Some(v) = b.velocity {
                cfg.reference.bubble_velocity = v;
            }
            "bubble".into()
        }
        Some(Command::Rg(r)) => {
            let s = &mut cfg.rg;
            s.lambda = r.lambda.unwrap_or(s.lambda);
            if let Some(v) = &r.velocities {
                s.velocities = v.clone();
            }
            s.scales = r.scales.unwrap_or(s.scales);
            s.oracle |= r.oracle;
            "rg".into()
        }
    };
    if let Some(n) = cli.threads {
        cfg.run.threads = Some(n);
    } else if let Ok(v) = std::env::var(THREADS_ENV) {
        let n = v.parse().with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?;
        cfg.run.threads = Some(n);
    }
    Ok((name, cfg))
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage_for(command: Option<&str>) -> String {
    let mut root = Cli::command();
    root.build();
    let sub = command.and_then(|c| root.find_subcommand_mut(c).cloned());
    match sub {
        Some(mut s) => s.render_usage().to_string(),
        None => root.render_help().to_string(),
    }
}

fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| c.is::<MissingModel>() || c.is::<Usage>() || c.is::<toml::de::Error>())
        || e.to_string().starts_with("unknown command")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = Instant::now();
    let (name, cfg) = match build_config(&cli) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!("{}", usage_for(None));
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cfg.run.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(&name, &cfg) {
        Ok(report) => {
            if !cli.quiet {
                print!("{}", report.to_json());
            }
            eprintln!(
                "{name}: {} in {:.2} s, report in {}",
                if report.passed { "pass" } else { "FAIL" },
                started.elapsed().as_secs_f64(),
                cfg.run.output_dir.display()
            );
            ExitCode::from(if report.passed { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage_error(&e) {
                eprintln!("{}", usage_for(Some(&name)));
            }
            ExitCode::from(1)
        }
    }
}
