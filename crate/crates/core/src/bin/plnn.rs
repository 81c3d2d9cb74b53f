use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use plnn::gensuite::{generate, InstanceSpec, SuiteManifest};
use plnn::io::{load_network, load_nnet, load_property, save_network, save_property};
use plnn::runner::{
    cactus, read_csv, run_bench, run_verify, write_csv, write_result, Method, RunConfig, Status,
};

#[derive(Parser)]
#[command(name = "plnn", version, about = "Complete verifier for piecewise-linear neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify one property of one network.
    Verify(VerifyArgs),
    /// Run methods over every NAME.net.json / NAME.prop.json pair in a directory.
    Bench(BenchArgs),
    /// Aggregate a bench CSV into cumulative coverage rows.
    Cactus {
        csv: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate random instances with a prescribed margin.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NetFormat {
    Json,
    Nnet,
}

#[derive(Args)]
struct SolveArgs {
    /// Wall-clock limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Single worker, reproducible output.
    #[arg(long)]
    deterministic: bool,
}

impl SolveArgs {
    fn config(&self) -> Result<RunConfig, String> {
        let timeout = match self.timeout {
            Some(t) if !(t >= 0.0 && t.is_finite()) => return Err(format!("invalid timeout {t}")),
            Some(t) => Some(Duration::from_secs_f64(t)),
            None => None,
        };
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(format!("--eps must be positive, got {}", self.eps));
        }
        Ok(RunConfig {
            timeout,
            epsilon: self.eps,
            seed: self.seed,
            workers: if self.deterministic { 1 } else { self.workers.max(1) },
            ..RunConfig::default()
        })
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    prop: PathBuf,
    #[arg(long, default_value = "babsb")]
    method: String,
    #[arg(long, value_enum, default_value = "json")]
    format: NetFormat,
    /// Result JSON path (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Args)]
struct BenchArgs {
    dir: PathBuf,
    /// Comma-separated method names (default: all).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Output directory for the CSV and per-run result files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Args)]
struct GenArgs {
    /// Suite manifest; every entry is generated.
    #[arg(long, conflicts_with_all = ["seed", "inputs", "depth", "width", "margin"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 2)]
    inputs: usize,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    width: usize,
    #[arg(long)]
    maxpool: bool,
    #[arg(long, allow_hyphen_values = true)]
    margin: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

fn verify(args: VerifyArgs) -> Result<Status, String> {
    let config = args.solve.config()?;
    let method: Method = args.method.parse().map_err(|e: plnn::Error| e.to_string())?;
    let net = match args.format {
        NetFormat::Json => load_network(&args.net),
        NetFormat::Nnet => load_nnet(&args.net),
    }
    .map_err(|e| format!("{}: {e}", args.net.display()))?;
    let (prop, domain) =
        load_property(&args.prop, Some(net.output_width())).map_err(|e| format!("{}: {e}", args.prop.display()))?;
    let name = args.net.file_name().and_then(|n| n.to_str()).unwrap_or("problem").to_string();
    let record = run_verify(&net, &prop, &domain, &name, method, &config);
    if let Some(err) = &record.error {
        eprintln!("error: {err}");
    }
    match &args.out {
        Some(path) => write_result(path, &record).map_err(|e| e.to_string())?,
        None => println!("{}", serde_json::to_string_pretty(&record.result_file()).map_err(|e| e.to_string())?),
    }
    Ok(record.status)
}

fn bench(args: BenchArgs) -> Result<(), String> {
    let config = args.solve.config()?;
    let methods: Vec<Method> = if args.methods.is_empty() {
        Method::ALL.to_vec()
    } else {
        args.methods.iter().map(|m| m.parse()).collect::<Result<_, plnn::Error>>().map_err(|e| e.to_string())?
    };
    let rows = run_bench(&args.dir, &methods, &config, &args.out).map_err(|e| e.to_string())?;
    let csv_path = args.out.join("results.csv");
    let file = fs::File::create(&csv_path).map_err(|e| e.to_string())?;
    write_csv(file, &rows).map_err(|e| e.to_string())?;
    eprintln!("{} runs written to {}", rows.len(), csv_path.display());
    Ok(())
}

fn cactus_cmd(csv: &Path, out: Option<&Path>) -> Result<(), String> {
    let rows = read_csv(fs::File::open(csv).map_err(|e| format!("{}: {e}", csv.display()))?).map_err(|e| e.to_string())?;
    let table = cactus(&rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &table {
        w.serialize(row).map_err(|e| e.to_string())?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| e.to_string()),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}

fn gen(args: GenArgs) -> Result<(), String> {
    fs::create_dir_all(&args.out).map_err(|e| e.to_string())?;
    let entries: Vec<(String, u64, InstanceSpec)> = match &args.manifest {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let manifest: SuiteManifest = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            manifest.entries.into_iter().map(|e| (e.name, e.seed, e.spec)).collect()
        }
        None => {
            let seed = args.seed.unwrap_or(0);
            let margin = args.margin.ok_or("--margin is required without --manifest")?;
            let spec = InstanceSpec { inputs: args.inputs, depth: args.depth, width: args.width, maxpool: args.maxpool, margin };
            vec![(format!("gen-{seed}"), seed, spec)]
        }
    };
    for (name, seed, spec) in entries {
        let inst = generate(seed, &spec).map_err(|e| format!("{name}: {e}"))?;
        save_network(&args.out.join(format!("{name}.net.json")), &inst.network).map_err(|e| e.to_string())?;
        save_property(&args.out.join(format!("{name}.prop.json")), &inst.property, &inst.domain)
            .map_err(|e| e.to_string())?;
        println!("{name} {:?}", inst.expected);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Verify(args) => verify(args).map(|s| s.exit_code()),
        Command::Bench(args) => bench(args).map(|_| 0),
        Command::Cactus { csv, out } => cactus_cmd(&csv, out.as_deref()).map(|_| 0),
        Command::Gen(args) => gen(args).map(|_| 0),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(Status::Error.exit_code() as u8)
        }
    }
}
