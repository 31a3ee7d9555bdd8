//! Command-line front end: experiment execution, solver access, FR-threshold
//! computation, and cart-log analysis.
//!
//! Exit codes: 0 success, 2 invalid input, 3 simulation/runtime fault,
//! 4 exact-solver size cap exceeded.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cropsched::det::{brute_force_schedule, schedule_bab, schedule_srpt_convert, Schedule};
use cropsched::error::Error;
use cropsched::instance::InstanceFile;
use cropsched::metrics::{extract_tray_intervals, monte_carlo, PooledStats, RunMetrics};
use cropsched::msa::{
    consensus, solve_scenario_exact, solve_scenario_srlpt, Scenario, ScenarioSolution,
};
use cropsched::request::fr_threshold;
use cropsched::sim::trace::CartLogRow;
use cropsched::RunConfig;

#[derive(Parser)]
#[command(
    name = "cropsched",
    about = "Harvest logistics simulation and predictive robot dispatch scheduling",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded Monte-Carlo harvest simulations and write metrics.
    Simulate {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the experiment's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Parallel simulation jobs (output is independent of this).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory for metrics.json and per-run tray CSVs.
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
        /// Also write one JSON-lines event trace per run.
        #[arg(long)]
        trace: bool,
    },
    /// Solve a scheduling instance file and print the schedule.
    Solve {
        /// Instance file (see README for the format).
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        algo: SolveAlgo,
    },
    /// Print the fill-ratio threshold for the configured field and speeds.
    Threshold {
        #[arg(long)]
        config: PathBuf,
    },
    /// Extract per-tray intervals and efficiencies from a cart log CSV.
    AnalyzeLog {
        #[arg(long)]
        log: PathBuf,
    },
    /// Sample scenarios from a stochastic instance and print the consensus
    /// plan.
    ScheduleMsa {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 50)]
        scenarios: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = MsaAlgo::Exact)]
        algo: MsaAlgo,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveAlgo {
    Bab,
    SrptConvert,
    Brute,
    MsaExact,
    Srlpt,
}

#[derive(Clone, Copy, ValueEnum)]
enum MsaAlgo {
    Exact,
    Srlpt,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            seed,
            jobs,
            output_dir,
            trace,
        } => cmd_simulate(&config, seed, jobs, &output_dir, trace),
        Command::Solve { instance, algo } => cmd_solve(&instance, algo),
        Command::Threshold { config } => cmd_threshold(&config),
        Command::AnalyzeLog { log } => cmd_analyze_log(&log),
        Command::ScheduleMsa {
            instance,
            scenarios,
            seed,
            algo,
        } => cmd_schedule_msa(&instance, scenarios, seed, algo),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::SizeCap { .. } => 4,
        Error::SimFault { .. } | Error::Io(_) => 3,
        _ => 2,
    }
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    config_digest: &'a str,
    runs: &'a [RunMetrics],
    pooled: &'a PooledStats,
}

fn cmd_simulate(
    config_path: &Path,
    seed: Option<u64>,
    jobs: usize,
    output_dir: &Path,
    trace: bool,
) -> Result<(), Error> {
    let (config, digest) = RunConfig::load(config_path)?;
    let base_seed = seed.unwrap_or(config.experiment.base_seed);
    let spec = config.scheduler_spec();
    let keep_traces = true; // per-run tray CSVs always come from the traces
    let (pooled, runs, traces) = monte_carlo(
        &config.sim,
        &config.field,
        &config.distributions,
        &spec,
        config.experiment.run_count,
        base_seed,
        jobs.max(1),
        keep_traces,
    )?;

    std::fs::create_dir_all(output_dir)?;
    let metrics_path = output_dir.join("metrics.json");
    let doc = MetricsDocument {
        config_digest: &digest,
        runs: &runs,
        pooled: &pooled,
    };
    let mut out = BufWriter::new(File::create(&metrics_path)?);
    serde_json::to_writer_pretty(&mut out, &doc).map_err(std::io::Error::other)?;
    out.write_all(b"\n")?;
    out.flush()?;

    let mut traces_sorted: Vec<_> = traces.iter().collect();
    traces_sorted.sort_by_key(|t| t.seed);
    for run_trace in traces_sorted {
        let csv_path = output_dir.join(format!("trays_{}.csv", run_trace.seed));
        let mut w = BufWriter::new(File::create(&csv_path)?);
        run_trace.write_trays_csv(&mut w)?;
        w.flush()?;
        if trace {
            let trace_path = output_dir.join(format!("trace_{}.jsonl", run_trace.seed));
            let mut w = BufWriter::new(File::create(&trace_path)?);
            run_trace.write_events_jsonl(&mut w)?;
            w.flush()?;
        }
    }

    println!(
        "{} runs complete: efficiency {:.4}, mean wait {:.2} s, mean non-productive {:.2} s, {:.1} trays/h",
        pooled.runs,
        pooled.efficiency.mean,
        pooled.wait.mean,
        pooled.nonproductive.mean,
        pooled.trays_per_hour.mean,
    );
    println!("wrote {}", metrics_path.display());
    Ok(())
}

fn print_schedule(schedule: &Schedule) {
    println!("objective (sum of completion times): {}", schedule.objective);
    for (robot, seq) in schedule.per_robot.iter().enumerate() {
        if seq.is_empty() {
            continue;
        }
        let steps: Vec<String> = seq
            .iter()
            .map(|j| format!("request {} @ t={} -> C={}", j.job_id, j.dispatch_at, j.completes_at))
            .collect();
        println!("robot {robot}: {}", steps.join("; "));
    }
}

fn print_scenario_solution(sol: &ScenarioSolution) {
    println!("objective (total non-productive time): {}", sol.objective);
    for (id, outcome) in &sol.outcomes {
        match outcome {
            cropsched::msa::Outcome::Served {
                order,
                robot,
                dispatch_at,
                resume_at,
            } => println!(
                "request {id}: served #{order} by robot {robot}, dispatch t={dispatch_at}, resume t={resume_at}"
            ),
            cropsched::msa::Outcome::Rejected => println!("request {id}: rejected (self-transport)"),
        }
    }
}

fn cmd_solve(instance_path: &Path, algo: SolveAlgo) -> Result<(), Error> {
    let instance = InstanceFile::load(instance_path)?;
    match algo {
        SolveAlgo::Bab => {
            let s = schedule_bab(&instance.solver_instance(), cropsched::det::BAB_CAP)?;
            print_schedule(&s);
        }
        SolveAlgo::SrptConvert => {
            let s = schedule_srpt_convert(&instance.solver_instance());
            print_schedule(&s);
        }
        SolveAlgo::Brute => {
            let s = brute_force_schedule(&instance.solver_instance())?;
            print_schedule(&s);
        }
        SolveAlgo::MsaExact => {
            let scn = instance.scenario()?;
            let robots = vec![instance.now_s; instance.robots];
            let s = solve_scenario_exact(
                &scn,
                &robots,
                instance.now_s,
                cropsched::msa::SCENARIO_EXACT_CAP,
                1.0,
                true,
            )?;
            print_scenario_solution(&s);
        }
        SolveAlgo::Srlpt => {
            let scn = instance.scenario()?;
            let robots = vec![instance.now_s; instance.robots];
            let s = solve_scenario_srlpt(&scn, &robots, instance.now_s);
            print_scenario_solution(&s);
        }
    }
    Ok(())
}

fn cmd_threshold(config_path: &Path) -> Result<(), Error> {
    let (config, _) = RunConfig::load(config_path)?;
    let profile = config.sim.speed_profile;
    let threshold = fr_threshold(
        profile.headland_speed,
        profile.furrow_speed,
        &config.field,
        config.mean_pick_time_s(),
    );
    println!(
        "FR threshold: {threshold:.2} (speeds {}/{} m/s, mean pick time {:.1} s)",
        profile.headland_speed,
        profile.furrow_speed,
        config.mean_pick_time_s()
    );
    Ok(())
}

fn cmd_analyze_log(log_path: &Path) -> Result<(), Error> {
    let mut text = String::new();
    File::open(log_path)?.read_to_string(&mut text)?;
    let rows = parse_cart_log(&text)?;
    let trays = extract_tray_intervals(&rows)?;
    if trays.is_empty() {
        println!("no trays detected");
        return Ok(());
    }
    let mut efficiencies = Vec::new();
    for (i, tray) in trays.iter().enumerate() {
        match (tray.nonproductive_s, tray.efficiency) {
            (Some(fe), Some(eff)) => {
                println!(
                    "tray {}: start {:.1} s, end {:.1} s, productive {:.1} s, non-productive {:.1} s, efficiency {:.3}",
                    i + 1,
                    tray.start_at,
                    tray.end_at,
                    tray.productive_s,
                    fe,
                    eff
                );
                efficiencies.push(eff);
            }
            _ => println!(
                "tray {}: start {:.1} s (partial; log truncates its cycle)",
                i + 1,
                tray.start_at
            ),
        }
    }
    if !efficiencies.is_empty() {
        let mean = efficiencies.iter().sum::<f64>() / efficiencies.len() as f64;
        println!(
            "{} complete trays, mean efficiency {:.3}",
            efficiencies.len(),
            mean
        );
    }
    Ok(())
}

fn parse_cart_log(text: &str) -> Result<Vec<CartLogRow>, Error> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        reason: "empty cart log".into(),
    })?;
    if header.trim() != "timestamp_s,x_m,y_m,mass_g,button" {
        return Err(Error::Parse {
            line: 1,
            reason: format!("expected header `timestamp_s,x_m,y_m,mass_g,button`, got `{header}`"),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(Error::Parse {
                line: i + 1,
                reason: format!("expected 5 columns, got {}", parts.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<f64, Error> {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: i + 1,
                reason: format!("invalid {what}: `{s}`"),
            })
        };
        rows.push(CartLogRow {
            timestamp_s: parse(parts[0], "timestamp_s")?,
            x_m: parse(parts[1], "x_m")?,
            y_m: parse(parts[2], "y_m")?,
            mass_g: parse(parts[3], "mass_g")?,
            button: parse(parts[4], "button")? as u8,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            reason: "cart log has no data rows".into(),
        });
    }
    Ok(rows)
}

fn cmd_schedule_msa(
    instance_path: &Path,
    scenarios: usize,
    seed: u64,
    algo: MsaAlgo,
) -> Result<(), Error> {
    use rand::SeedableRng;
    let instance = InstanceFile::load(instance_path)?;
    let base = instance.scenario()?;
    let robots = vec![instance.now_s; instance.robots];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // Sample full-tray instants from the per-request mean and sd columns.
    let mut solutions = Vec::with_capacity(scenarios);
    for _ in 0..scenarios.max(1) {
        let mut scn = Scenario {
            requests: base.requests.clone(),
            load_s: base.load_s,
            unload_s: base.unload_s,
        };
        for (req, row) in scn.requests.iter_mut().zip(&instance.rows) {
            let sd = row.fill_sd_s.unwrap_or(0.0);
            if sd > 0.0 {
                let g = cropsched::request::Gaussian {
                    mean: req.full_at,
                    sd,
                };
                req.full_at = g.sample(&mut rng).max(instance.now_s);
            }
        }
        let sol = match algo {
            MsaAlgo::Exact => solve_scenario_exact(
                &scn,
                &robots,
                instance.now_s,
                cropsched::msa::SCENARIO_EXACT_CAP,
                1.0,
                true,
            )?,
            MsaAlgo::Srlpt => solve_scenario_srlpt(&scn, &robots, instance.now_s),
        };
        solutions.push(sol);
    }
    let expected_full: std::collections::HashMap<u64, f64> = base
        .requests
        .iter()
        .map(|r| (r.id, r.full_at))
        .collect();
    let plan = consensus(&solutions, &expected_full);
    println!("consensus over {} scenarios:", solutions.len());
    for id in &plan.order {
        let marker = if plan.rejection_set.contains(id) {
            " [rejected in every scenario]"
        } else {
            ""
        };
        println!("  request {id}: score {}{marker}", plan.scores[id]);
    }
    println!(
        "serving order: {}",
        plan.order
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}
