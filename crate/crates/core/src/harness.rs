//! Sweep execution and CSV emission. Cell order is the expansion order
//! (patterns x loads x routings x seeds) regardless of parallelism, and all
//! output is byte-deterministic for a given configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{expand_cells, resolve, RunConfig};
use crate::error::SimError;
use crate::sim::{run, RunOutput};
use crate::topology::Topology;

pub type CellResult = (RunConfig, RunOutput);

/// Resolves every cell of a (possibly sweeping) key map.
pub fn resolve_cells(map: &BTreeMap<String, String>) -> Result<Vec<RunConfig>, SimError> {
    expand_cells(map)?.iter().map(resolve).collect()
}

/// Runs all cells, optionally across a worker pool. Results come back in
/// cell order either way.
pub fn run_cells(cfgs: Vec<RunConfig>, parallel: usize) -> Result<Vec<CellResult>, SimError> {
    if parallel <= 1 {
        return cfgs
            .into_iter()
            .map(|cfg| run(&cfg).map(|out| (cfg, out)))
            .collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| SimError::InvalidConfig(format!("worker pool: {e}")))?;
    pool.install(|| {
        cfgs.into_par_iter()
            .map(|cfg| run(&cfg).map(|out| (cfg, out)))
            .collect()
    })
}

fn cell_prefix(cfg: &RunConfig) -> String {
    format!(
        "{},{},{},{}",
        cfg.pattern.name(),
        cfg.load,
        cfg.routing.name(),
        cfg.seed
    )
}

pub fn summary_csv(results: &[CellResult]) -> String {
    let mut out = String::from(
        "pattern,load,routing,seed,mean_ns,p50_ns,p95_ns,p99_ns,q1_ns,q3_ns,mean_hops,\
         throughput,converge_ns,inflight_count,config_hash\n",
    );
    for (cfg, r) in results {
        let s = &r.summary;
        let converge = s.converge_ns.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{:.3},{},{},{},{},{},{:.4},{:.6},{},{},{:016x}",
            cell_prefix(cfg),
            s.mean_ns,
            s.p50_ns,
            s.p95_ns,
            s.p99_ns,
            s.q1_ns,
            s.q3_ns,
            s.mean_hops,
            s.throughput,
            converge,
            s.inflight,
            cfg.hash
        )
        .unwrap();
    }
    out
}

pub fn timeseries_csv(results: &[CellResult]) -> String {
    let mut out =
        String::from("pattern,load,routing,seed,t0_ns,mean_ns,throughput,mean_hops,config_hash\n");
    for (cfg, r) in results {
        for w in &r.windows {
            writeln!(
                out,
                "{},{},{:.3},{:.6},{:.4},{:016x}",
                cell_prefix(cfg),
                w.t0_ns,
                w.mean_ns,
                w.throughput,
                w.mean_hops,
                cfg.hash
            )
            .unwrap();
        }
    }
    out
}

pub fn packets_csv(r: &RunOutput) -> String {
    let mut out = String::from("packet_id,src,dst,gen_ns,deliver_ns,hops,path\n");
    for rec in &r.packets {
        let path: Vec<String> = rec.path.iter().map(|p| p.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            rec.id,
            rec.src,
            rec.dst,
            rec.gen_ns,
            rec.deliver_ns,
            rec.hops,
            path.join("-")
        )
        .unwrap();
    }
    out
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_alphanumeric() || c == '.' { c } else { '_' }).collect()
}

/// Writes the full output set for a finished sweep.
pub fn write_outputs(out_dir: &Path, results: &[CellResult]) -> Result<(), SimError> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("summary.csv"), summary_csv(results))?;
    fs::write(out_dir.join("timeseries.csv"), timeseries_csv(results))?;
    if let Some((cfg, _)) = results.iter().find(|(cfg, _)| cfg.dump_topology) {
        let topo = Topology::build(cfg.params)?;
        fs::write(out_dir.join("topology.csv"), topo.dump_csv())?;
    }
    for (cfg, r) in results {
        let tag = sanitize(&format!(
            "{}_{}_{}_{}",
            cfg.pattern.name(),
            cfg.load,
            cfg.routing.name(),
            cfg.seed
        ));
        if cfg.dump_packets {
            fs::write(out_dir.join(format!("packets_{tag}.csv")), packets_csv(r))?;
        }
        for snap in &r.snapshots {
            let name = format!("qtable_{tag}_t{}_r{}.csv", snap.t_ns, snap.router);
            fs::write(out_dir.join(name), &snap.csv)?;
        }
    }
    Ok(())
}
