use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fpsens::bounds::{format_sig12, langevin_constants, theorem1_constants};
use fpsens::harness::report::{check_tables, load_tables, stored_config, write_plots};
use fpsens::harness::{self, run_experiment, HarnessError, RunOptions, TolerancePolicy, VerdictTable};
use fpsens::transport::{dual_feasibility_check, wasserstein, PointCloud, DEFAULT_CAP};

#[derive(Parser)]
#[command(name = "fpsens", version, about = "Wasserstein sensitivity bounds for Fokker-Planck flows, checked by synchronous coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalFlags,
}

#[derive(Args)]
struct GlobalFlags {
    /// Override the master seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (speed only; results do not depend on it)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write plots/p<order>.svg
    #[arg(long, global = true)]
    plots: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a TOML config
    Run {
        config: PathBuf,
        /// Output directory (overrides [output] dir)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print bound constants
    Constants {
        /// Joint Lipschitz constant of b and A
        #[arg(long)]
        l1: Option<f64>,
        /// Lipschitz constant of div A
        #[arg(long, default_value_t = 0.0)]
        l2: f64,
        /// Ellipticity floor
        #[arg(long)]
        m: Option<f64>,
        /// Strong-convexity modulus (Langevin)
        #[arg(long)]
        k: Option<f64>,
        /// Parameter-Lipschitz constant of grad V (Langevin)
        #[arg(long)]
        l3: Option<f64>,
        /// State dimension (Langevin)
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Orders, comma separated
        #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 3.0, 4.0])]
        p: Vec<f64>,
    },
    /// W_p between two CSV point clouds (one point per row)
    Transport {
        left: PathBuf,
        right: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
    /// Probe the declared hypothesis constants of a config's model
    Probe {
        config: PathBuf,
        /// Number of probe pairs (overrides [probe] n_pairs)
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Recompute verdicts (and plots) from a run directory
    Report {
        dir: PathBuf,
        /// z in the check Ŵ − z·SE ≤ envelope (default: stored config, else 3)
        #[arg(long)]
        z: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, HarnessError> {
    let g = cli.global;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = harness::load_config(&config)?;
            let opts = RunOptions { seed: g.seed, threads: g.threads, plots: g.plots.then_some(true), output_dir: out };
            let report = run_experiment(&cfg, &opts)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print_verdicts(&report.verdict);
            Ok(report.verdict.exit_code() as u8)
        }
        Command::Constants { l1, l2, m, k, l3, d, p } => constants(l1, l2, m, k, l3, d, &p),
        Command::Transport { left, right, p, cap } => transport(&left, &right, p, cap),
        Command::Probe { config, pairs } => {
            let mut cfg = harness::load_config(&config)?;
            if let Some(n) = pairs {
                cfg.probe.n_pairs = n;
            }
            let model = harness::build_model(&cfg)?;
            let r = harness::probe(&cfg, &model, g.seed.unwrap_or(cfg.simulation.seed));
            println!("{:<28} {:>14} {:>14}  verdict", "check", "declared", "observed");
            for c in &r.checks {
                println!(
                    "{:<28} {:>14} {:>14}  {}",
                    c.name,
                    format_sig12(c.declared),
                    format_sig12(c.observed),
                    if c.passed { "pass" } else { "FAIL" }
                );
                if let Some(w) = &c.witness {
                    println!("    witness: x = {:?}, a = {:?}, x' = {:?}, a' = {:?}", w.x, w.a, w.x_prime, w.a_prime);
                }
            }
            Ok(if r.passed { 0 } else { 1 })
        }
        Command::Report { dir, z } => {
            let z = z.or_else(|| stored_config(&dir).map(|c| c.check.z)).unwrap_or(3.0);
            let mut tables = load_tables(&dir)?;
            let verdict = check_tables(&tables, &TolerancePolicy { z });
            let mut entries = verdict.entries.iter();
            for row in tables.iter_mut().flat_map(|t| t.rows.iter_mut()) {
                row.verdict = entries.next().map(|e| e.verdict).unwrap_or(row.verdict);
            }
            if g.plots {
                for path in write_plots(&tables, &dir)? {
                    println!("wrote {}", path.display());
                }
            }
            print_verdicts(&verdict);
            Ok(verdict.exit_code() as u8)
        }
    }
}

fn print_verdicts(v: &VerdictTable) {
    let mut groups: Vec<(String, f64, usize, usize, usize)> = Vec::new();
    for e in &v.entries {
        let name = e.kind.name().to_string();
        let idx = match groups.iter().position(|g| g.0 == name && g.1 == e.p) {
            Some(i) => i,
            None => {
                groups.push((name, e.p, 0, 0, 0));
                groups.len() - 1
            }
        };
        let g = &mut groups[idx];
        match e.verdict {
            harness::Verdict::Pass => g.2 += 1,
            harness::Verdict::Fail => g.3 += 1,
            harness::Verdict::Vacuous => g.4 += 1,
        }
    }
    for (name, p, pass, fail, vac) in groups {
        if vac > 0 {
            println!("{name:<22} p = {p:<4} vacuous ({vac} rows not counted)");
        } else {
            println!("{name:<22} p = {p:<4} {pass}/{} pass", pass + fail);
        }
    }
    for w in v.witnesses() {
        println!(
            "  FAIL {} p = {} t = {}: {} - {}*{} = {} > {}",
            w.kind.name(),
            w.p,
            w.t,
            w.w_hat_pp,
            v.z,
            w.w_hat_se,
            w.lower,
            w.envelope
        );
    }
    println!("{}", if v.all_pass { "PASS" } else { "FAIL" });
}

#[allow(clippy::too_many_arguments)]
fn constants(
    l1: Option<f64>,
    l2: f64,
    m: Option<f64>,
    k: Option<f64>,
    l3: Option<f64>,
    d: usize,
    orders: &[f64],
) -> Result<u8, HarnessError> {
    let cerr = |e: &dyn std::fmt::Display| HarnessError::Config(e.to_string());
    if l1.is_none() && k.is_none() {
        return Err(HarnessError::Config("give --l1 and --m (general bound) and/or --k and --l3 (Langevin)".into()));
    }
    if let Some(l1) = l1 {
        let m = m.ok_or_else(|| HarnessError::Config("--l1 needs --m".into()))?;
        println!("{:>6} {:>20} {:>20}", "p", "C1", "C2");
        for &p in orders {
            let c = theorem1_constants(l1, l2, m, p).map_err(|e| cerr(&e))?;
            println!("{:>6} {:>20} {:>20}", format_sig12(p), format_sig12(c.c1), format_sig12(c.c2));
        }
    }
    if let Some(k) = k {
        let l3 = l3.ok_or_else(|| HarnessError::Config("--k needs --l3".into()))?;
        println!("{:>6} {:>20} {:>20} {:>20}", "p", "lambda", "K1", "K2");
        for &p in orders {
            let c = langevin_constants(k, l3, d, p).map_err(|e| cerr(&e))?;
            for w in &c.warnings {
                eprintln!("warning (p = {}): {w}", format_sig12(p));
            }
            println!(
                "{:>6} {:>20} {:>20} {:>20}",
                format_sig12(p),
                format_sig12(c.lambda),
                format_sig12(c.k1),
                format_sig12(c.k2)
            );
        }
    }
    Ok(0)
}

fn transport(left: &Path, right: &Path, p: f64, cap: usize) -> Result<u8, HarnessError> {
    let terr = |e: &dyn std::fmt::Display| HarnessError::Stage { stage: harness::Stage::Transport, message: e.to_string() };
    let xs = PointCloud::load_csv(left).map_err(|e| terr(&e))?;
    let ys = PointCloud::load_csv(right).map_err(|e| terr(&e))?;
    let r = wasserstein(&xs, &ys, p, cap).map_err(|e| terr(&e))?;
    let cert = dual_feasibility_check(&r, &xs, &ys);
    println!("n = {}, d = {}, p = {}", xs.len(), xs.dim(), format_sig12(p));
    println!("W_p^p = {}", format_sig12(r.cost));
    println!("W_p   = {}", format_sig12(r.distance()));
    println!(
        "dual certificate: max violation {:e}, max slackness {:e}, duality gap {:e} -> {}",
        cert.max_violation,
        cert.max_slackness,
        cert.duality_gap,
        if cert.passed { "pass" } else { "FAIL" }
    );
    Ok(if cert.passed { 0 } else { 2 })
}
