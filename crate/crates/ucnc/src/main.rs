use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ucnc::harness::{self, config, presets, Policy, Scenario};
use ucnc::oracle::{
    compact::max_scalar_rate_compact, CapacityDecision, CapacityOracle, EnumerationBounds,
    OracleError, RateVector, ThetaStar,
};
use ucnc::rat::{format_rat, parse_rat, Rat};

#[derive(Parser)]
#[command(
    name = "ucnc",
    about = "Mixed-cast service chain simulator and capacity oracle",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ScenarioArgs {
    /// Built-in scenario name (see `ucnc presets`).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Path to a TOML scenario document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator seed for the mixed-18 preset.
    #[arg(long)]
    generator_seed: Option<u64>,
    /// Override the scenario's policy.
    #[arg(long)]
    policy: Option<String>,
    /// Override the scenario's horizon (slots).
    #[arg(long)]
    horizon: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation at a single rate multiplier.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Rate multiplier applied to every commodity (rational or decimal).
        #[arg(long, default_value = "1")]
        lambda: String,
        /// Simulation seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Enable the in-run scheduling audit.
        #[arg(long)]
        audit: bool,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a (rate multiplier) x (seed) sweep and emit CSV.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated multipliers, ascending; defaults to the
        /// scenario's grid.
        #[arg(long)]
        grid: Option<String>,
        /// Comma-separated seeds; defaults to the scenario's seed.
        #[arg(long)]
        seeds: Option<String>,
        /// Output format: csv or gnuplot (space-separated, `#` header).
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Query the capacity oracle for the maximum supportable rate.
    Capacity {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated direction vector, one entry per commodity;
        /// defaults to all ones.
        #[arg(long)]
        direction: Option<String>,
        /// Split multicast commodities into per-destination unicasts first.
        #[arg(long)]
        multicast_as_unicast: bool,
        /// Write a feasibility witness at the computed rate to this path.
        #[arg(long)]
        witness: Option<PathBuf>,
    },
    /// List built-in scenario presets.
    Presets,
}

fn load_scenario(args: &ScenarioArgs) -> Result<Scenario, String> {
    let mut scenario = match (&args.preset, &args.config) {
        (Some(name), None) => {
            if name == "mixed-18" {
                presets::mixed18(args.generator_seed.unwrap_or(1))
            } else {
                presets::preset(name)
                    .ok_or_else(|| format!("unknown preset `{name}`; try `ucnc presets`"))?
            }
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            config::parse_scenario(&text).map_err(|e| e.to_string())?
        }
        _ => return Err("exactly one of --preset or --config is required".into()),
    };
    if let Some(p) = &args.policy {
        scenario.policy =
            Policy::parse(p).ok_or_else(|| format!("unknown policy `{p}`"))?;
    }
    if let Some(h) = args.horizon {
        scenario.horizon = h;
    }
    scenario.validate().map_err(|e| e.to_string())?;
    Ok(scenario)
}

fn parse_rat_list(text: &str) -> Result<Vec<Rat>, String> {
    text.split(',')
        .map(|s| parse_rat(s.trim()).map_err(|e| e.to_string()))
        .collect()
}

fn write_out(path: &Option<PathBuf>, content: &str) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(|e| format!("cannot write {}: {e}", p.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_run(
    args: &ScenarioArgs,
    lambda: &str,
    seed: Option<u64>,
    audit: bool,
    output: &Option<PathBuf>,
) -> Result<(), String> {
    let scenario = load_scenario(args)?;
    let multiplier = parse_rat(lambda).map_err(|e| e.to_string())?;
    let seed = seed.unwrap_or(scenario.seed);
    let metrics = harness::run(&scenario, &multiplier, seed, audit).map_err(|e| e.to_string())?;
    let mut out = String::from(harness::CSV_HEADER);
    out.push('\n');
    for cm in &metrics.per_commodity {
        let delay = cm.mean_delay.map(|d| format!("{d:.6}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{},{:.6},{:.6},{:.9}\n",
            scenario.policy.name(),
            format_rat(&multiplier),
            seed,
            cm.id,
            cm.throughput,
            delay,
            cm.delivered,
            metrics.vq_sum_final,
            metrics.max_backlog,
            metrics.growth_slope,
        ));
    }
    write_out(output, &out)?;
    if let Some(report) = &metrics.audit {
        eprintln!(
            "audit: {} slots, {} priority violations, {} work-conservation violations, max hops {}",
            report.slots_checked,
            report.priority_violations,
            report.work_conservation_violations,
            report.max_hops_seen
        );
    }
    Ok(())
}

fn cmd_sweep(
    args: &ScenarioArgs,
    grid: &Option<String>,
    seeds: &Option<String>,
    format: &str,
    output: &Option<PathBuf>,
) -> Result<(), String> {
    let scenario = load_scenario(args)?;
    let grid = match grid {
        Some(g) => parse_rat_list(g)?,
        None => scenario.lambda_grid.clone(),
    };
    let seeds: Vec<u64> = match seeds {
        Some(s) => s
            .split(',')
            .map(|x| x.trim().parse().map_err(|e| format!("bad seed: {e}")))
            .collect::<Result<_, _>>()?,
        None => vec![scenario.seed],
    };
    let csv = harness::sweep(&scenario, &grid, &seeds).map_err(|e| e.to_string())?;
    let rendered = match format {
        "csv" => csv,
        "gnuplot" => harness::csv_to_gnuplot(&csv),
        other => return Err(format!("unknown format `{other}` (csv or gnuplot)")),
    };
    write_out(output, &rendered)
}

fn cmd_capacity(
    args: &ScenarioArgs,
    direction: &Option<String>,
    split: bool,
    witness: &Option<PathBuf>,
) -> Result<(), String> {
    let scenario = load_scenario(args)?;
    let commodities = if split {
        let mut list = Vec::new();
        for c in &scenario.commodities {
            if c.is_multicast() {
                list.extend(
                    harness::multicast_as_unicast(&scenario.network, c)
                        .map_err(|e| e.to_string())?,
                );
            } else {
                list.push(c.clone());
            }
        }
        list
    } else {
        scenario.commodities.clone()
    };
    let direction = match direction {
        Some(d) => {
            let d = parse_rat_list(d)?;
            if d.len() != commodities.len() {
                return Err(format!(
                    "direction has {} entries, scenario has {} commodities",
                    d.len(),
                    commodities.len()
                ));
            }
            d
        }
        None => vec![Rat::from_integer(1.into()); commodities.len()],
    };
    match CapacityOracle::build(
        &scenario.network,
        &scenario.chains,
        &commodities,
        &EnumerationBounds::default(),
    ) {
        Ok(oracle) => {
            let theta = oracle
                .max_scalar_rate(&RateVector(direction.clone()))
                .map_err(|e| e.to_string())?;
            match &theta {
                ThetaStar::Finite(t) => println!("theta_star = {} (exact)", format_rat(t)),
                ThetaStar::Unbounded => println!("theta_star = unbounded"),
            }
            if let (Some(path), ThetaStar::Finite(t)) = (witness, &theta) {
                let rates =
                    RateVector(direction.iter().map(|d| d * t).collect::<Vec<_>>());
                match oracle.capacity_feasible(&rates).map_err(|e| e.to_string())? {
                    CapacityDecision::Feasible(fa) => {
                        oracle
                            .verify_assignment(&rates, &fa)
                            .map_err(|v| format!("witness failed re-verification: {v:?}"))?;
                        std::fs::write(path, oracle.export_assignment(&rates, &fa))
                            .map_err(|e| format!("cannot write witness: {e}"))?;
                        println!("witness written to {}", path.display());
                    }
                    CapacityDecision::Infeasible => {
                        return Err("boundary rate unexpectedly infeasible".into())
                    }
                }
            }
            Ok(())
        }
        Err(OracleError::BoundExceeded(why)) => {
            // Too large to enumerate; fall back to the float arc-flow LP.
            let theta = max_scalar_rate_compact(
                &scenario.network,
                &scenario.chains,
                &commodities,
                &direction,
            )
            .map_err(|e| e.to_string())?;
            println!("theta_star ~= {theta:.6} (compact float formulation; {why})");
            if witness.is_some() {
                return Err("witness export needs the enumerated oracle".into());
            }
            Ok(())
        }
        Err(e) => Err(e.to_string()),
    }
}

fn cmd_presets() {
    println!("built-in presets:");
    for (name, desc) in presets::PRESETS {
        println!("  {name:<16} {desc}");
    }
    println!("\npolicies: {}", Policy::ALL.map(|p| p.name()).join(", "));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            scenario,
            lambda,
            seed,
            audit,
            output,
        } => cmd_run(scenario, lambda, *seed, *audit, output),
        Command::Sweep {
            scenario,
            grid,
            seeds,
            format,
            output,
        } => cmd_sweep(scenario, grid, seeds, format, output),
        Command::Capacity {
            scenario,
            direction,
            multicast_as_unicast,
            witness,
        } => cmd_capacity(scenario, direction, *multicast_as_unicast, witness),
        Command::Presets => {
            cmd_presets();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
