use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use dragonfly_sim::config::{self, merge_layers, parse_config_text};
use dragonfly_sim::harness;

/// Dragonfly interconnect simulator.
#[derive(Parser)]
#[command(name = "simulate", version, about)]
struct Args {
    /// Configuration file (`key = value` lines, `#` comments).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override a single key, e.g. --set load=0.8 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Named preset applied under the file and overrides.
    #[arg(long)]
    preset: Option<String>,

    /// Output directory for CSV results.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Worker threads for sweep cells (1 = run serially).
    #[arg(long, default_value_t = 1)]
    parallel: usize,

    /// Print every resolved cell configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

fn run(args: &Args) -> Result<(), dragonfly_sim::SimError> {
    let preset_pairs = match &args.preset {
        Some(name) => config::preset(name)?,
        None => Vec::new(),
    };
    let file_map = match &args.config {
        Some(path) => parse_config_text(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let mut overrides = Vec::with_capacity(args.set.len());
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            dragonfly_sim::SimError::InvalidConfig(format!("--set expects KEY=VALUE, got '{kv}'"))
        })?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }

    let map = merge_layers(&preset_pairs, &file_map, &overrides);
    let cfgs = harness::resolve_cells(&map)?;
    if args.dump_config {
        for (i, cfg) in cfgs.iter().enumerate() {
            println!("# cell {i} (hash {:016x})", cfg.hash);
            print!("{}", cfg.canonical);
        }
        return Ok(());
    }

    let n = cfgs.len();
    let results = harness::run_cells(cfgs, args.parallel)?;
    harness::write_outputs(&args.out, &results)?;
    for (cfg, out) in &results {
        let s = &out.summary;
        println!(
            "{} load={} {} seed={}: mean={:.1} ns p99={} ns throughput={:.4} delivered={}",
            cfg.pattern.name(),
            cfg.load,
            cfg.routing.name(),
            cfg.seed,
            s.mean_ns,
            s.p99_ns,
            s.throughput,
            s.delivered
        );
    }
    println!("{n} cell(s) written to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
