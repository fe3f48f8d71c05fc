use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use inhibitor::autograd::{self, TrainConfig, ADDING_BASELINE_MSE};
use inhibitor::bench;
use inhibitor::fhe::{self, LoweringConfig};
use inhibitor::verify::{self, Fault, VerifyOptions};
use inhibitor::{Error, Mechanism};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_OVERFLOW: u8 = 3;

/// Inhibitor vs dot-product attention: verification, timing, encrypted-cost
/// analysis and training.
#[derive(Debug, Parser)]
#[command(name = "inhibitor", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the oracle equivalence suites; exit 0 iff all pass.
    Verify(VerifyArgs),
    /// Time the integer attention kernels.
    Bench(BenchArgs),
    /// Lower attention to integer circuits and report PBS counts and bit widths.
    Cost(CostArgs),
    /// Train a one-block model on the adding problem.
    TrainAdding(TrainArgs),
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Only run suites whose name contains this string.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Deliberately break a kernel (fused-inhibition or pbs-table).
    #[arg(long, hide = true)]
    inject_fault: Option<Fault>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long)]
    mechanism: Mechanism,
    #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256, 512])]
    seq_len: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = bench::MIN_REPS)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CostArgs {
    /// One or more mechanisms, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [Mechanism::DotProd, Mechanism::Inhibitor])]
    mechanism: Vec<Mechanism>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8])]
    seq_len: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Signed width of every circuit input.
    #[arg(long, default_value_t = 3)]
    bits: u32,
    /// Largest lookup-table input width.
    #[arg(long, default_value_t = fhe::DEFAULT_PRECISION)]
    precision: u32,
    /// Inhibitor score divisor 2^gamma_shift (0: raw Manhattan score).
    #[arg(long, default_value_t = 0)]
    gamma_shift: u32,
    /// Inhibitor score shift in input units.
    #[arg(long, default_value_t = 0)]
    alpha: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    mechanism: Mechanism,
    #[arg(long, default_value_t = 20)]
    seq_len: usize,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io(io::Error),
    Verify(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn open_out(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run_verify(a: &VerifyArgs) -> Result<(), Failure> {
    let opts = VerifyOptions { filter: a.filter.clone(), fault: a.inject_fault, seed: a.seed };
    let results = verify::run_verify(&opts);
    if results.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no suite matches '{}' (suites: {})",
            a.filter.as_deref().unwrap_or(""),
            verify::suite_names().join(", ")
        ))
        .into());
    }
    let mut failed = 0;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {} ({}) [{:.2?}]", r.name, r.property, r.detail, r.elapsed);
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(Failure::Verify(failed));
    }
    Ok(())
}

fn run_bench(a: &BenchArgs) -> Result<(), Failure> {
    if a.seq_len.is_empty() {
        return Err(Error::InvalidArgument("--seq-len needs at least one value".into()).into());
    }
    let mut results = Vec::with_capacity(a.seq_len.len());
    for &n in &a.seq_len {
        results.push(bench::bench_kernel(a.mechanism, n, a.dim, a.reps, a.seed)?);
    }
    let mut w = open_out(&a.out)?;
    writeln!(
        w,
        "# inhibitor bench mechanism={} seq_len={} dim={} reps={} bits={} scale_exp={} seed={}",
        a.mechanism,
        join(&a.seq_len),
        a.dim,
        a.reps,
        bench::BENCH_BITS,
        bench::BENCH_SCALE_EXP,
        a.seed
    )?;
    bench::emit_table(&mut w, &results)?;
    w.flush()?;
    Ok(())
}

fn run_cost(a: &CostArgs) -> Result<(), Failure> {
    if a.seq_len.is_empty() || a.mechanism.is_empty() {
        return Err(Error::InvalidArgument("--seq-len and --mechanism need at least one value".into()).into());
    }
    let mut reports = Vec::new();
    for &mech in &a.mechanism {
        for &n in &a.seq_len {
            let cfg = LoweringConfig {
                precision: a.precision,
                gamma_shift: a.gamma_shift,
                alpha_q: a.alpha,
                ..LoweringConfig::new(n, a.dim, a.bits)
            };
            let circuit = fhe::build_circuit(mech, &cfg)?;
            reports.push(fhe::analyze_bits(&circuit));
        }
    }
    let mut w = open_out(&a.out)?;
    writeln!(
        w,
        "# inhibitor cost mechanism={} seq_len={} dim={} bits={} precision={} gamma_shift={} alpha={} seed={} softmax_division=client",
        join(&a.mechanism),
        join(&a.seq_len),
        a.dim,
        a.bits,
        a.precision,
        a.gamma_shift,
        a.alpha,
        a.seed
    )?;
    fhe::write_cost_csv(&mut w, &reports)?;
    w.flush()?;
    Ok(())
}

fn run_train(a: &TrainArgs) -> Result<(), Failure> {
    let cfg = TrainConfig {
        seq_len: a.seq_len,
        steps: a.steps,
        batch: a.batch,
        lr: a.lr,
        ..TrainConfig::new(a.mechanism, a.seed)
    };
    let report = autograd::train(&cfg)?;
    let mut w = open_out(&a.out)?;
    writeln!(
        w,
        "# inhibitor train-adding mechanism={} seq_len={} steps={} batch={} lr={} model_dim={} hidden={} test_size={} seed={}",
        cfg.mechanism, cfg.seq_len, cfg.steps, cfg.batch, cfg.lr, cfg.model_dim, cfg.hidden, cfg.test_size, cfg.seed
    )?;
    report.write_csv(&mut w)?;
    w.flush()?;
    eprintln!("final test MSE {:.6} (constant-predictor baseline {:.6})", report.final_test_mse, ADDING_BASELINE_MSE);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Verify(a) => run_verify(a),
        Command::Bench(a) => run_bench(a),
        Command::Cost(a) => run_cost(a),
        Command::TrainAdding(a) => run_train(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(n)) => {
            eprintln!("verification failed: {n} suite(s)");
            ExitCode::from(EXIT_VERIFY_FAILED)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                e if e.is_overflow() => EXIT_OVERFLOW,
                Error::InvalidArgument(_) | Error::Shape { .. } => EXIT_USAGE,
                _ => EXIT_VERIFY_FAILED,
            })
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VERIFY_FAILED)
        }
    }
}
