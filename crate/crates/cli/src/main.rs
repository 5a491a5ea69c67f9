use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbto_cli::config::{read_object, RunConfig};
use rbto_cli::{run, sweep, CliError, Mode};
use serde_json::{json, Map, Value};

#[derive(Parser)]
#[command(name = "rbto", version, about = "Reliability-based topology optimization runs")]
struct Cli {
    /// Root directory for run directories.
    #[arg(long, global = true, env = "RBTO_OUTPUT_ROOT")]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic optimization at the mean modulus.
    Dto(ConfigArgs),
    /// Reliability-based optimization, one design per beta.
    Rbto(ConfigArgs),
    /// Monte Carlo verification of an optimized (or loaded) design.
    Verify(ConfigArgs),
    /// RBTO over every beta and `sweep-b` combination.
    Sweep(ConfigArgs),
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    beta: Option<Vec<f64>>,
    #[arg(long)]
    a: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    l1: Option<f64>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    kl_terms: Option<usize>,
    #[arg(long)]
    corr_length_mode: Option<String>,
    #[arg(long)]
    kl_rescale_pointwise_variance: Option<bool>,
    #[arg(long)]
    simp_p: Option<f64>,
    #[arg(long)]
    rmin: Option<f64>,
    #[arg(long)]
    dto_tol: Option<f64>,
    #[arg(long)]
    dto_max_iter: Option<usize>,
    #[arg(long)]
    sora_tol: Option<f64>,
    #[arg(long)]
    sora_max: Option<usize>,
    #[arg(long)]
    warm_start: Option<bool>,
    #[arg(long)]
    pce_p: Option<usize>,
    #[arg(long)]
    colloc_count: Option<usize>,
    #[arg(long)]
    mcs_n: Option<usize>,
    #[arg(long)]
    mcs_source: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    load: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    sweep_b: Option<Vec<f64>>,
    #[arg(long)]
    design_csv: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> Map<String, Value> {
        let pairs = [
            ("problem", self.problem.as_ref().map(|v| json!(v))),
            ("nx", self.nx.map(|v| json!(v))),
            ("ny", self.ny.map(|v| json!(v))),
            ("u_max", self.u_max.map(|v| json!(v))),
            ("beta", self.beta.as_ref().map(|v| json!(v))),
            ("a", self.a.map(|v| json!(v))),
            ("b", self.b.map(|v| json!(v))),
            ("l1", self.l1.map(|v| json!(v))),
            ("l2", self.l2.map(|v| json!(v))),
            ("kl_terms", self.kl_terms.map(|v| json!(v))),
            ("corr_length_mode", self.corr_length_mode.as_ref().map(|v| json!(v))),
            ("kl_rescale_pointwise_variance", self.kl_rescale_pointwise_variance.map(|v| json!(v))),
            ("simp_p", self.simp_p.map(|v| json!(v))),
            ("rmin", self.rmin.map(|v| json!(v))),
            ("dto_tol", self.dto_tol.map(|v| json!(v))),
            ("dto_max_iter", self.dto_max_iter.map(|v| json!(v))),
            ("sora_tol", self.sora_tol.map(|v| json!(v))),
            ("sora_max", self.sora_max.map(|v| json!(v))),
            ("warm_start", self.warm_start.map(|v| json!(v))),
            ("pce_p", self.pce_p.map(|v| json!(v))),
            ("colloc_count", self.colloc_count.map(|v| json!(v))),
            ("mcs_n", self.mcs_n.map(|v| json!(v))),
            ("mcs_source", self.mcs_source.as_ref().map(|v| json!(v))),
            ("seed", self.seed.map(|v| json!(v))),
            ("load", self.load.map(|v| json!(v))),
            ("sweep_b", self.sweep_b.as_ref().map(|v| json!(v))),
            ("design_csv", self.design_csv.as_ref().map(|v| json!(v))),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_owned(), v))).collect()
    }

    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut user = match &self.config {
            Some(path) => read_object(path)?,
            None => Map::new(),
        };
        user.extend(self.overrides());
        RunConfig::from_json(&user)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Dto(a) => (Some(Mode::Dto), a),
        Command::Rbto(a) => (Some(Mode::Rbto), a),
        Command::Verify(a) => (Some(Mode::Verify), a),
        Command::Sweep(a) => (None, a),
    };
    let outcome = args.resolve().and_then(|cfg| {
        let root = cli.output.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("rbto-out"));
        match mode {
            Some(mode) => run(&cfg, mode, &root).map(|o| (o.dir, o.log.final_volume_fraction())),
            None => sweep(&cfg, &root).map(|(dir, _)| (dir, None)),
        }
    });
    match outcome {
        Ok((dir, vf)) => {
            let record = json!({"status": "ok", "dir": dir, "volume_fraction": vf});
            println!("{record}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record()).expect("serializable"));
            ExitCode::FAILURE
        }
    }
}
