//! `cash`: client-side key stretching with randomized halting predicates.
//!
//! ```bash
//! $ cash create alice mail --out-dir ~/.cash
//! Password: [hidden]
//! k = 100000
//! ...
//! $ cash verify ~/.cash/mail.client.json ~/.cash/mail.server.json
//! accept
//! ```
//!
//! Exit codes: 0 success or accept, 1 reject or failed validation, 2 usage or
//! invalid parameters, 3 I/O failure. The master password is read from
//! `CASH_PASSWORD` when set, otherwise from the terminal without echo.
//! `CASH_THREADS` caps the worker threads used by `curve` and `simulate`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::Failure;

#[derive(Parser, Debug)]
#[command(name = "cash", version, about = "Client-side key stretching with randomized halting predicates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mech {
    Exp,
    Opt,
}

#[derive(clap::Args, Debug, Clone)]
pub struct SpaceArgs {
    /// Maximum number of hashing rounds
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Predicate moduli, comma separated; overrides the `l_i = n` default
    #[arg(long, value_delimiter = ',')]
    pub moduli: Option<Vec<u64>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create an account and write its client and server records
    Create {
        user: String,
        account: String,
        #[arg(long, default_value_t = 1.609)]
        epsilon: f64,
        #[command(flatten)]
        space: SpaceArgs,
        /// Server cost budget in hash invocations; defaults to what the
        /// exponential mechanism needs to reach `--k`
        #[arg(long)]
        cost_ratio: Option<f64>,
        /// Target hash iterations per round when `--cost-ratio` is not given
        #[arg(long, default_value_t = 100_000)]
        k: u64,
        #[arg(long, value_enum, default_value_t = Mech::Exp)]
        mech: Mech,
        /// Expected adversary budget as a fraction of `k'|P|` (optimal mechanism only)
        #[arg(long, default_value_t = 1.0)]
        budget_ratio: f64,
        /// Password space size assumed by the optimal mechanism
        #[arg(long, default_value_t = 1e6)]
        pwd_space: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Deterministic salt and predicate selection, for testing only
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the derived hash for a client record
    Derive { client: PathBuf },
    /// Check a password against a server record; exit 0 on accept, 1 on reject
    Verify { client: PathBuf, server: PathBuf },
    /// Export gain curves as CSV, one file per epsilon
    Curve {
        #[arg(long, value_enum, default_value_t = Mech::Opt)]
        mech: Mech,
        #[arg(long, value_delimiter = ',', default_value = "0.223,0.511,0.916,1.609,2.303")]
        epsilon_list: Vec<f64>,
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long, default_value_t = 1000.0)]
        cost_ratio: f64,
        #[arg(long, default_value_t = 1e6)]
        pwd_space: f64,
        #[arg(long, default_value_t = 200)]
        budget_points: usize,
        /// Largest budget ratio `B/(k'|P|)` on the grid
        #[arg(long, default_value_t = 2.0)]
        max_ratio: f64,
        #[arg(long, default_value = "curves")]
        out: PathBuf,
    },
    /// Compare analytic and simulated adversary success on a validation matrix
    Simulate {
        /// JSON file with matrix settings and optional cells
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Added to every analytic value (negative control)
        #[arg(long)]
        perturb: Option<f64>,
    },
}

fn set_thread_cap() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("CASH_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Failure::Usage(format!("CASH_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<bool, Failure> {
    set_thread_cap()?;
    match cli.command {
        Command::Create {
            user,
            account,
            epsilon,
            space,
            cost_ratio,
            k,
            mech,
            budget_ratio,
            pwd_space,
            out_dir,
            seed,
        } => commands::create(commands::CreateArgs {
            user,
            account,
            epsilon,
            space,
            cost_ratio,
            k_target: k,
            mech,
            budget_ratio,
            pwd_space,
            out_dir,
            seed,
        }),
        Command::Derive { client } => commands::derive(&client),
        Command::Verify { client, server } => commands::verify(&client, &server),
        Command::Curve {
            mech,
            epsilon_list,
            space,
            cost_ratio,
            pwd_space,
            budget_points,
            max_ratio,
            out,
        } => commands::curve(mech, &epsilon_list, &space, cost_ratio, pwd_space, budget_points, max_ratio, &out),
        Command::Simulate {
            config,
            trials,
            seed,
            perturb,
        } => commands::simulate(config.as_deref(), trials, seed, perturb),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
