use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cash_core::kdf::{create_account, reproduce, verify as verify_hash, ClientRecord, KdfParams, ServerRecord};
use cash_core::mechanism::{exponential_distribution, fit_k, info_leak_bits, StoppingDistribution};
use cash_core::optimizer::{
    budget_grid, gain_curve, optimal_mechanism, stationary_epsilon, write_curve_csv, MechanismKind,
};
use cash_core::outcome_space::OutcomeSpace;
use cash_core::simulator::{run_validation_matrix, standard_matrix, MatrixConfig, ValidationCell};
use cash_core::CashError;
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use crate::{Mech, SpaceArgs};

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<CashError> for Failure {
    fn from(e: CashError) -> Self {
        match e {
            CashError::Io(_) => Failure::Io(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn password() -> Result<String, Failure> {
    if let Ok(pwd) = std::env::var("CASH_PASSWORD") {
        return Ok(pwd);
    }
    rpassword::prompt_password("Password: ").map_err(|e| Failure::Io(format!("reading password: {e}")))
}

fn outcome_space(args: &SpaceArgs) -> Result<OutcomeSpace, Failure> {
    let space = match &args.moduli {
        Some(m) => {
            if m.len() + 1 != args.n {
                return Err(Failure::Usage(format!(
                    "--moduli needs n-1 = {} entries, got {}",
                    args.n.saturating_sub(1),
                    m.len()
                )));
            }
            OutcomeSpace::new(m.clone())?
        }
        None => OutcomeSpace::uniform(args.n)?,
    };
    Ok(space)
}

fn check_epsilon(eps: f64) -> Result<(), Failure> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("epsilon must be finite and non-negative, got {eps}")))
    }
}

pub struct CreateArgs {
    pub user: String,
    pub account: String,
    pub epsilon: f64,
    pub space: SpaceArgs,
    pub cost_ratio: Option<f64>,
    pub k_target: u64,
    pub mech: Mech,
    pub budget_ratio: f64,
    pub pwd_space: f64,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

pub fn create(args: CreateArgs) -> Result<bool, Failure> {
    check_epsilon(args.epsilon)?;
    if args.k_target == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let space = outcome_space(&args.space)?;
    let exp = exponential_distribution(args.epsilon, &space)?;
    let cost_ratio = args
        .cost_ratio
        .unwrap_or(args.k_target as f64 * exp.expected_rounds());
    if !(cost_ratio.is_finite() && cost_ratio > 0.0) {
        return Err(Failure::Usage(format!("--cost-ratio must be positive, got {cost_ratio}")));
    }
    let (dist, k): (StoppingDistribution, u64) = match args.mech {
        Mech::Exp => {
            let k = fit_k(&exp, cost_ratio)?;
            (exp, k)
        }
        Mech::Opt => {
            if !(args.budget_ratio.is_finite() && args.budget_ratio >= 0.0) {
                return Err(Failure::Usage("--budget-ratio must be non-negative".into()));
            }
            let k_det = cost_ratio.floor().max(1.0);
            let budget = args.budget_ratio * k_det * args.pwd_space;
            let design = optimal_mechanism(args.epsilon, &space, cost_ratio, budget, args.pwd_space)?;
            (design.dist, design.k)
        }
    };
    let params = KdfParams::new(k, space.rounds())?;

    fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let pwd = password()?;
    let mut rng: Box<dyn RngCore> = match args.seed {
        Some(s) => Box::new(ChaCha20Rng::seed_from_u64(s)),
        None => Box::new(OsRng),
    };
    let (client, server) = create_account(&args.user, &args.account, &pwd, &dist, &params, &mut *rng)?;

    let client_path = args.out_dir.join(format!("{}.client.json", args.account));
    let server_path = args.out_dir.join(format!("{}.server.json", args.account));
    write(&client_path, &client.to_json()?)?;
    write(&server_path, &server.to_json()?)?;

    println!("k = {k}");
    println!("expected rounds = {:.6}", dist.expected_rounds());
    println!("expected hash cost = {:.1}", k as f64 * dist.expected_rounds());
    println!("leak = {:.4} bits", info_leak_bits(client.epsilon));
    println!("client record: {}", client_path.display());
    println!("server record: {}", server_path.display());
    Ok(true)
}

fn load_client(path: &Path) -> Result<ClientRecord, Failure> {
    Ok(ClientRecord::from_json(&read(path)?)?)
}

pub fn derive(client: &Path) -> Result<bool, Failure> {
    let record = load_client(client)?;
    let pwd = password()?;
    println!("{}", reproduce(&record, &pwd).to_hex());
    Ok(true)
}

pub fn verify(client: &Path, server: &Path) -> Result<bool, Failure> {
    let record = load_client(client)?;
    let server = ServerRecord::from_json(&read(server)?)?;
    if server.user != record.user {
        return Err(Failure::Usage(format!(
            "records belong to different users ({} vs {})",
            record.user, server.user
        )));
    }
    let pwd = password()?;
    let ok = verify_hash(&server, &reproduce(&record, &pwd));
    println!("{}", if ok { "accept" } else { "reject" });
    Ok(ok)
}

#[allow(clippy::too_many_arguments)]
pub fn curve(
    mech: Mech,
    epsilons: &[f64],
    space_args: &SpaceArgs,
    cost_ratio: f64,
    pwd_space: f64,
    budget_points: usize,
    max_ratio: f64,
    out: &Path,
) -> Result<bool, Failure> {
    if epsilons.is_empty() {
        return Err(Failure::Usage("--epsilon-list is empty".into()));
    }
    for &e in epsilons {
        check_epsilon(e)?;
    }
    if budget_points == 0 || !(max_ratio.is_finite() && max_ratio > 0.0) {
        return Err(Failure::Usage("--budget-points and --max-ratio must be positive".into()));
    }
    if !(pwd_space.is_finite() && pwd_space >= 1.0) {
        return Err(Failure::Usage("--pwd-space must be at least 1".into()));
    }
    let space = outcome_space(space_args)?;
    let kind = match mech {
        Mech::Exp => MechanismKind::Exponential,
        Mech::Opt => MechanismKind::Optimal,
    };
    let grid = budget_grid(budget_points, max_ratio);
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let mut curves = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let rows = gain_curve(kind, eps, &space, cost_ratio, pwd_space, &grid)?;
        let path = out.join(format!("{}_n{}_eps{eps}.csv", kind.label(), space.rounds()));
        let file = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(file);
        write_curve_csv(&rows, &mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))?;
        let best = rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.gain));
        println!("eps {eps}: max gain {best:.6} -> {}", path.display());
        curves.push((eps, rows));
    }
    curves.sort_by(|a, b| a.0.total_cmp(&b.0));
    match stationary_epsilon(&curves, 1e-9) {
        Some(e) => println!("curves stop changing from eps {e}"),
        None => println!("no stationary eps in this sweep"),
    }
    Ok(true)
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateFile {
    cells: Option<Vec<ValidationCell>>,
    pwd_space: Option<usize>,
    k: Option<u64>,
    trials: Option<usize>,
    seed: Option<u64>,
    salt_pool: Option<usize>,
    perturbation: Option<f64>,
}

pub fn simulate(
    config: Option<&Path>,
    trials: Option<usize>,
    seed: Option<u64>,
    perturb: Option<f64>,
) -> Result<bool, Failure> {
    let file: SimulateFile = match config {
        Some(path) => serde_json::from_str(&read(path)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => SimulateFile::default(),
    };
    let defaults = MatrixConfig::default();
    let cfg = MatrixConfig {
        pwd_space: file.pwd_space.unwrap_or(defaults.pwd_space),
        k: file.k.unwrap_or(defaults.k),
        trials: trials.or(file.trials).unwrap_or(defaults.trials),
        seed: seed.or(file.seed).unwrap_or(defaults.seed),
        salt_pool: file.salt_pool.unwrap_or(defaults.salt_pool),
        perturbation: perturb.or(file.perturbation).unwrap_or(defaults.perturbation),
    };
    if !cfg.perturbation.is_finite() {
        return Err(Failure::Usage("perturbation must be finite".into()));
    }
    let cells = file.cells.unwrap_or_else(standard_matrix);
    if cells.is_empty() {
        return Err(Failure::Usage("no validation cells".into()));
    }
    let reports = run_validation_matrix(&cells, &cfg)?;
    let mut all = true;
    for r in &reports {
        all &= r.pass;
        println!(
            "{} n={} eps={} beta={} analytic={:.6} empirical={:.6} se={:.6} z={:.3}",
            if r.pass { "PASS" } else { "FAIL" },
            r.cell.rounds,
            r.cell.epsilon,
            r.cell.beta,
            r.analytic,
            r.empirical,
            r.std_error,
            r.z
        );
    }
    let passed = reports.iter().filter(|r| r.pass).count();
    println!("{passed}/{} cells within 3 sigma", reports.len());
    Ok(all)
}
