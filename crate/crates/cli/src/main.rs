use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use routing_privacy::config::ExperimentConfig;
use routing_privacy::dynamics::{suboptimality_bound, BregmanGeometry};
use routing_privacy::privacy::{self, accountant};
use routing_privacy::sim::{self, bound_terms, format_float, loss_second_moment_bound};

/// Routing-game learning dynamics with differential-privacy accounting.
#[derive(Debug, Parser)]
#[command(name = "routing-privacy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run Monte Carlo trajectories and write ensemble CSVs plus a manifest per σ.
    Simulate(SimulateArgs),
    /// Compute (ε, δ) curves over a range of horizons.
    Accountant(AccountantArgs),
    /// Print the sensitivity constants of a configured game.
    Constants(CommonArgs),
    /// Solve for a Nash equilibrium and report its potential.
    Equilibrium(EquilibriumArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to $ROUTING_PRIVACY_OUT, then the config, then `out`.
    #[arg(long, env = "ROUTING_PRIVACY_OUT")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Noise levels to simulate (repeatable); replaces the config list.
    #[arg(long)]
    sigma: Vec<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of iterations.
    #[arg(long = "T")]
    horizon: Option<usize>,
    /// Also write one CSV per run.
    #[arg(long)]
    per_run: bool,
}

#[derive(Debug, Args)]
struct AccountantArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Horizons as `start:end` or `start:end:step`, inclusive.
    #[arg(long = "T-range", default_value = "1:200")]
    t_range: String,
    /// Override the adjacency radius of every curve.
    #[arg(long = "c")]
    c_adj: Option<f64>,
    /// Override the noise level of every curve.
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Debug, Args)]
struct EquilibriumArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Nash-gap tolerance; defaults to the config's equilibrium_tol.
    #[arg(long)]
    tol: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Accountant(a) => run_accountant(a),
        Command::Constants(a) => constants(a),
        Command::Equilibrium(a) => equilibrium(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn output_dir(args: &CommonArgs, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = load(&args.common.config)?;
    if !args.sigma.is_empty() {
        cfg.simulation.sigma = args.sigma.clone();
    }
    if let Some(r) = args.runs {
        cfg.simulation.runs = r;
    }
    if let Some(s) = args.seed {
        cfg.simulation.seed = s;
    }
    if let Some(t) = args.horizon {
        cfg.simulation.horizon = t;
    }
    let dir = output_dir(&args.common, &cfg)?;
    let game = cfg.build_game()?;
    let eq = game
        .solve_equilibrium(cfg.simulation.equilibrium_tol)
        .context("computing the reference potential f*")?;
    let consts = cfg.sensitivity_constants(&game)?;

    let mut failures = Vec::new();
    for &sigma in &cfg.simulation.sigma {
        let sim_cfg = cfg.simulation_config(sigma)?;
        let (stats, runs) = sim::monte_carlo_with_runs(&game, &sim_cfg, eq.potential)?;
        let tag = format!("sigma{sigma}");
        write(&dir.join(format!("ensemble_{tag}.csv")), &sim::ensemble_csv(&stats))?;
        if args.per_run {
            let run_dir = dir.join(format!("runs_{tag}"));
            fs::create_dir_all(&run_dir)?;
            for rec in &runs {
                write(&run_dir.join(format!("run{}.csv", rec.run)), &sim::run_csv(rec))?;
            }
        }

        let l = loss_second_moment_bound(consts.total_paths, consts.loss_bound, sigma);
        let bound = suboptimality_bound(&bound_terms(&game, &sim_cfg.dynamics), l, sim_cfg.horizon)?;
        let excess = stats.terminal_mean() - eq.potential;
        let bound_ok = excess <= 3.0 * bound;
        if !bound_ok {
            failures.push(format!(
                "σ = {sigma}: terminal suboptimality {excess:e} exceeds 3 × bound {bound:e}"
            ));
        }
        let mut effective = cfg.clone();
        effective.simulation.sigma = vec![sigma];
        let manifest = json!({
            "config": effective,
            "sigma": sigma,
            "seeds": {
                "master": sim_cfg.seed,
                "rule": "run r uses ChaCha8 seeded from the master seed, stream r",
                "runs": (0..sim_cfg.runs).collect::<Vec<_>>(),
            },
            "f_star": eq.potential,
            "f_star_gap": eq.gap,
            "slope_window": stats.slope_window,
            "slope": stats.slope,
            "terminal_f_mean": stats.terminal_mean(),
            "terminal_f_std": stats.f_std.last(),
            "loss_second_moment_bound": l,
            "suboptimality_bound": bound,
            "bound_check_passed": bound_ok,
        });
        write(
            &dir.join(format!("manifest_{tag}.json")),
            &serde_json::to_string_pretty(&manifest)?,
        )?;
        println!(
            "σ = {sigma}: terminal mean f = {:.6} (f* = {:.6}), slope = {}",
            stats.terminal_mean(),
            eq.potential,
            stats.slope.map_or("n/a".into(), |s| format!("{s:.4}"))
        );
    }
    if !failures.is_empty() {
        bail!("invariant checks failed:\n  {}", failures.join("\n  "));
    }
    Ok(())
}

fn parse_range(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| -> Result<usize> {
        p.trim().parse().with_context(|| format!("bad T-range component `{p}`"))
    };
    let (lo, hi, step) = match parts.as_slice() {
        [lo, hi] => (num(lo)?, num(hi)?, 1),
        [lo, hi, step] => (num(lo)?, num(hi)?, num(step)?),
        _ => bail!("T-range must be start:end or start:end:step, got `{s}`"),
    };
    if lo == 0 || hi < lo || step == 0 {
        bail!("T-range needs 1 <= start <= end and step >= 1, got `{s}`");
    }
    Ok((lo, hi, step))
}

fn run_accountant(args: AccountantArgs) -> Result<()> {
    let cfg = load(&args.common.config)?;
    let (lo, hi, step) = parse_range(&args.t_range)?;
    let dir = output_dir(&args.common, &cfg)?;
    let game = cfg.build_game()?;
    let consts = cfg.sensitivity_constants(&game)?;

    let mut csv = String::from("c_adj,sigma,T,epsilon,delta,tail_delta,valid,trivial\r\n");
    for mut curve in cfg.privacy.curves.iter().copied() {
        if let Some(c) = args.c_adj {
            curve.c_adj = c;
        }
        if let Some(s) = args.sigma {
            curve.sigma = s;
        }
        let mut last = None;
        for horizon in (lo..=hi).step_by(step) {
            let report = accountant(&consts, &cfg.accountant_params(curve, horizon))?;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{}\r\n",
                format_float(curve.c_adj),
                format_float(curve.sigma),
                horizon,
                format_float(report.epsilon),
                format_float(report.delta),
                format_float(report.tail_delta),
                report.valid,
                report.trivial
            ));
            last = Some(report);
        }
        if let Some(report) = last {
            write(
                &dir.join(format!("accountant_c{}_sigma{}.json", curve.c_adj, curve.sigma)),
                &serde_json::to_string_pretty(&report)?,
            )?;
            println!(
                "c = {}, σ = {}: T = {} → ε = {:.6e}, δ = {:.6e}{}",
                curve.c_adj,
                curve.sigma,
                report.horizon,
                report.epsilon,
                report.delta,
                if report.trivial { " (trivial)" } else { "" }
            );
        }
    }
    write(&dir.join("accountant.csv"), &csv)
}

fn constants(args: CommonArgs) -> Result<()> {
    let cfg = load(&args.config)?;
    let game = cfg.build_game()?;
    let consts = cfg.sensitivity_constants(&game)?;
    let paths = game.paths();
    let spectral: Vec<f64> = (0..paths.num_od())
        .map(|i| privacy::spectral_norm(paths.incidence(i)))
        .collect::<Result<_, _>>()?;
    let lam = game.costs().iter().map(|c| c.lipschitz()).fold(0.0, f64::max);

    println!("paths per OD: {:?} (total {})", (0..paths.num_od()).map(|i| paths.block_len(i)).collect::<Vec<_>>(), paths.total_paths());
    println!("σ_max(M_i): {spectral:?}");
    println!("A_x = {}   (max_i σ_max(M_i))", consts.a_x);
    println!("A_Δ = {}   (sum over OD blocks of the largest vertex norm)", consts.a_delta);
    println!("A_θ = {}   (public mass bound)", consts.a_theta);
    println!("A_ℓ = {}   (Σ_i σ_max(M_i) = {} times max_e λ_e = {lam})", consts.a_ell, spectral.iter().sum::<f64>());
    println!("M   = {}   (max path cost with all {} units of mass on every edge)", consts.loss_bound, game.total_mass());
    for (k, d) in cfg.dynamics()?.iter().enumerate() {
        let g = BregmanGeometry::new(d.geometry, paths);
        println!(
            "population {k}: geometry {:?}, ℓ_ψ = {}, D = {}, η(t) = {}·(t+1)^-{}",
            d.geometry, g.strong_convexity, g.divergence_bound, d.schedule.scale, d.schedule.decay
        );
    }
    Ok(())
}

fn equilibrium(args: EquilibriumArgs) -> Result<()> {
    let cfg = load(&args.common.config)?;
    let game = cfg.build_game()?;
    let tol = args.tol.unwrap_or(cfg.simulation.equilibrium_tol);
    let eq = game.solve_equilibrium(tol)?;
    let out = json!({
        "f_star": eq.potential,
        "nash_gap": eq.gap,
        "iterations": eq.iterations,
        "allocation": eq.allocation.x,
        "edge_flows": game.edge_flows(&eq.allocation)?,
        "path_losses": game.losses(&eq.allocation)?.0,
    });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}
