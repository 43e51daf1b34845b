use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use anchorneg::carrier::CarrierKind;
use anchorneg::harness::{
    emit_results, emit_sweep, generate_unit, gtft_stream, read_results_csv, replay_file, run_c_sweep, run_grid,
    summarize_results_csv, ExperimentConfig, StrategyTotals,
};
use anchorneg::llm::{run_against_llm_carrier, run_bounded, AdapterLog, ChatClient, EndpointConfig, PersonaPrompt};
use anchorneg::pricing::ShiftBasis;
use anchorneg::strategy::BrokerStrategyKind;

#[derive(Parser)]
#[command(name = "anchorneg", version, about = "Seeded broker-carrier negotiation experiments")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the strategy × carrier × spread grid.
    Run(GridArgs),
    /// Re-run the two-index strategy for each calibration constant.
    SweepC {
        #[command(flatten)]
        grid: GridArgs,
        /// Calibration constants, comma separated.
        #[arg(long, value_delimiter = ',')]
        c_values: Option<Vec<f64>>,
    },
    /// Regenerate recorded negotiations and check they match byte for byte.
    Replay { transcript: PathBuf },
    /// Pool a results.csv into one row per strategy.
    Stats {
        results: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Play engine brokers against model-played carriers on a live endpoint.
    ///
    /// The endpoint is read from ANCHORNEG_LLM_BASE_URL, _MODEL, _API_KEY.
    LlmCarrier {
        #[command(flatten)]
        grid: GridArgs,
        /// Negotiations in flight at once.
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
    },
}

#[derive(Args, Clone)]
struct GridArgs {
    /// TOML experiment config. Keys set in the file take precedence over flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    loads_per_cell: Option<u64>,
    /// Spread values S in percent, comma separated.
    #[arg(long, value_delimiter = ',')]
    spreads: Option<Vec<f64>>,
    /// Strategy keys: boulware, linear, conceder, two-index, gtft, or beta=<x>.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<BrokerStrategyKind>>,
    /// Carrier keys: cooperative, hardliner, tft, deadline, anchoring.
    #[arg(long, value_delimiter = ',')]
    carriers: Option<Vec<CarrierKind>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// How a shift multiplier moves the target: range or rate.
    #[arg(long)]
    shift_basis: Option<ShiftBasis>,
    /// Calibration constant c for the two-index broker.
    #[arg(long)]
    c: Option<f64>,
    /// Full 350-loads-per-cell grid instead of the desk-scale default.
    #[arg(long)]
    full_scale: bool,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl GridArgs {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = if self.full_scale { ExperimentConfig::full_scale() } else { ExperimentConfig::default() };
        if let Some(v) = self.seed {
            cfg.master_seed = v;
        }
        if let Some(v) = self.loads_per_cell {
            cfg.loads_per_cell = v;
        }
        if let Some(v) = &self.spreads {
            cfg.spread_values = v.clone();
        }
        if let Some(v) = &self.strategies {
            cfg.strategies = v.clone();
        }
        if let Some(v) = &self.carriers {
            cfg.carriers = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = self.repetitions {
            cfg.repetitions = v;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = self.shift_basis {
            cfg.shift_basis = v;
        }
        if let Some(v) = self.c {
            cfg.protocol.calibration_constant = v;
        }
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let mut base: toml::Table = toml::from_str(&cfg.to_toml_string())?;
            merge(&mut base, file);
            cfg = ExperimentConfig::from_toml_str(&toml::to_string(&base)?)
                .with_context(|| format!("applying {}", path.display()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_table(rows: &[StrategyTotals]) {
    println!("{}", StrategyTotals::header());
    for r in rows {
        println!("{}", r.table_line());
    }
}

fn run(args: &GridArgs) -> anyhow::Result<()> {
    let cfg = args.config()?;
    log::info!("running {} negotiations", cfg.negotiation_count());
    let run = run_grid(&cfg)?;
    let files = emit_results(&run, &cfg.output_dir)?;
    let rows = summarize_results_csv(&read_results_csv(&files[0])?);
    print_table(&rows);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn sweep(args: &GridArgs, c_values: Option<Vec<f64>>) -> anyhow::Result<()> {
    let mut cfg = args.config()?;
    if let Some(cs) = c_values {
        cfg.c_values = Some(cs);
    }
    if cfg.c_values.is_none() {
        cfg.c_values = Some(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }
    let sweep = run_c_sweep(&cfg)?;
    println!("{:>4} {:>16} {:>16} {:>14} {:>7} {:>7}", "c", "Agree (%)", "Savings", "Rounds", "Retr.", "Holds");
    for (c, run) in &sweep {
        if let Some(m) = run.result.strategy(BrokerStrategyKind::TwoIndex) {
            println!(
                "{:>4} {:>16} {:>16} {:>14} {:>7.3} {:>7.3}",
                c,
                format!("{:.1} ± {:.1}", 100.0 * m.agreement_rate.value, 100.0 * m.agreement_rate.ci_half_width),
                format!("{:.3} ± {:.3}", m.mean_savings.value, m.mean_savings.ci_half_width),
                format!("{:.2} ± {:.2}", m.mean_rounds.value, m.mean_rounds.ci_half_width),
                m.retraction_rate.value,
                m.hold_stats.share.value,
            );
        }
    }
    for f in emit_sweep(&sweep, &cfg.output_dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn replay(path: &Path) -> anyhow::Result<bool> {
    let reports = replay_file(path)?;
    let bad: Vec<_> = reports.iter().filter(|r| !r.ok()).collect();
    for r in &bad {
        println!(
            "line {}: {} vs {} S={} load={} rep={} load_matches={} schedule_matches={} identical={}",
            r.line,
            r.strategy,
            r.carrier,
            r.spread_pct,
            r.load_index,
            r.repetition,
            r.load_matches,
            r.schedule_matches,
            r.identical
        );
    }
    println!("{} of {} transcripts replayed identically", reports.len() - bad.len(), reports.len());
    Ok(bad.is_empty())
}

fn stats(path: &Path, json: bool) -> anyhow::Result<()> {
    let rows = summarize_results_csv(&read_results_csv(path)?);
    if json {
        println!("{}", serde_json::to_string_pretty(&rows)?);
    } else {
        print_table(&rows);
    }
    Ok(())
}

fn llm_carrier(args: &GridArgs, concurrency: usize) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let endpoint = EndpointConfig::from_env()?;
    let mut jobs = Vec::new();
    for &spread in &cfg.spread_values {
        for load_index in 0..cfg.loads_per_cell {
            for repetition in 0..cfg.repetitions {
                for &strategy in &cfg.strategies {
                    for &carrier in &cfg.carriers {
                        jobs.push((spread, load_index, repetition, strategy, carrier));
                    }
                }
            }
        }
    }
    if jobs.is_empty() {
        bail!("nothing to run");
    }
    let log = AdapterLog::default();
    let transcripts = run_bounded(jobs, concurrency, |(spread, load_index, repetition, strategy, carrier)| {
        let unit = generate_unit(&cfg, spread, load_index, repetition)?;
        let t = run_against_llm_carrier(
            ChatClient::http(endpoint.clone()),
            PersonaPrompt::for_kind(carrier),
            &unit.load,
            strategy,
            &unit.schedule,
            &cfg.protocol,
            cfg.shift_basis,
            gtft_stream(&cfg, &unit, carrier),
            log.clone(),
        )?;
        Ok(serde_json::to_string(&t)?)
    })?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join("llm_transcripts.jsonl");
    std::fs::write(&path, transcripts.join("\n") + "\n")?;
    let adapter = cfg.output_dir.join("adapter_log.jsonl");
    let lines: Vec<String> = log.entries().iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
    std::fs::write(&adapter, lines.join("\n") + "\n")?;
    let foreign = log.foreign_outbound_rates();
    println!("wrote {} and {}", path.display(), adapter.display());
    if !foreign.is_empty() {
        bail!("outbound messages carried rates the engine did not produce: {foreign:?}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match &cli.command {
        Command::Run(args) => run(args).map(|_| true),
        Command::SweepC { grid, c_values } => sweep(grid, c_values.clone()).map(|_| true),
        Command::Replay { transcript } => replay(transcript),
        Command::Stats { results, json } => stats(results, *json).map(|_| true),
        Command::LlmCarrier { grid, concurrency } => llm_carrier(grid, *concurrency).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
