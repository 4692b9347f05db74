//! Flat key-value run configuration with CLI overrides, presets, sweep
//! expansion, and config hashing.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::SimError;
use crate::qlearn::QHyperParams;
use crate::topology::{DragonflyParams, PortKind};
use crate::traffic::PatternSpec;

/// Link timing constants. Defaults model 128 B single-flit packets on
/// 4 GB/s links with 30 ns local / 300 ns global propagation; host links
/// run at local-link speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub packet_bytes: u64,
    pub bw_bytes_per_ns: u64,
    pub local_ns: u64,
    pub global_ns: u64,
    pub host_ns: u64,
    pub router_ns: u64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            packet_bytes: 128,
            bw_bytes_per_ns: 4,
            local_ns: 30,
            global_ns: 300,
            host_ns: 30,
            router_ns: 0,
        }
    }
}

impl Timing {
    /// Serialization time of one packet on any link (32 ns at defaults).
    pub fn ser_ns(&self) -> u64 {
        self.packet_bytes / self.bw_bytes_per_ns
    }

    pub fn latency_ns(&self, kind: PortKind) -> u64 {
        match kind {
            PortKind::Host => self.host_ns,
            PortKind::Local => self.local_ns,
            PortKind::Global => self.global_ns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    Min,
    Valg,
    Valn,
    Ugalg,
    Ugaln,
    Par,
    Qrouting,
    Qadaptive,
}

impl Algo {
    pub const ALL: [Algo; 8] = [
        Algo::Min,
        Algo::Valg,
        Algo::Valn,
        Algo::Ugalg,
        Algo::Ugaln,
        Algo::Par,
        Algo::Qrouting,
        Algo::Qadaptive,
    ];

    pub fn parse(s: &str) -> Result<Self, SimError> {
        Ok(match s {
            "min" => Algo::Min,
            "valg" => Algo::Valg,
            "valn" => Algo::Valn,
            "ugalg" => Algo::Ugalg,
            "ugaln" => Algo::Ugaln,
            "par" => Algo::Par,
            "qrouting" => Algo::Qrouting,
            "qadaptive" => Algo::Qadaptive,
            _ => {
                return Err(SimError::InvalidConfig(format!(
                    "routing: unknown algorithm '{s}' \
                     (expected min|valg|valn|ugalg|ugaln|par|qrouting|qadaptive)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Min => "min",
            Algo::Valg => "valg",
            Algo::Valn => "valn",
            Algo::Ugalg => "ugalg",
            Algo::Ugaln => "ugaln",
            Algo::Par => "par",
            Algo::Qrouting => "qrouting",
            Algo::Qadaptive => "qadaptive",
        }
    }

    /// Maximum router-to-router hops; also the VC count (vc = hop index).
    pub fn hop_cap(&self, maxq: usize) -> usize {
        match self {
            Algo::Min => 3,
            Algo::Valg | Algo::Ugalg | Algo::Qadaptive => 5,
            Algo::Valn | Algo::Ugaln => 6,
            Algo::Par => 7,
            Algo::Qrouting => maxq + 3,
        }
    }

    pub fn uses_qtable(&self) -> bool {
        matches!(self, Algo::Qrouting | Algo::Qadaptive)
    }
}

/// A fully resolved single-run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: DragonflyParams,
    pub routing: Algo,
    pub ugal_bias: f64,
    pub maxq: usize,
    pub hp: QHyperParams,
    pub pattern: PatternSpec,
    /// Nominal offered load (the `load` key, used for CSV reporting).
    pub load: f64,
    /// Piecewise-constant (start_ns, load) schedule; defaults to the flat load.
    pub load_schedule: Vec<(u64, f64)>,
    pub timing: Timing,
    pub vc_buffer: usize,
    pub seed: u64,
    pub warmup_ns: u64,
    pub measure_ns: u64,
    pub window_ns: u64,
    pub converge_tolerance: f64,
    pub converge_hold: usize,
    pub audit: bool,
    pub dump_topology: bool,
    pub dump_packets: bool,
    pub qtable_snapshot_ns: Vec<u64>,
    pub qtable_snapshot_routers: Vec<usize>,
    /// Canonical `key = value` dump of the resolved configuration.
    pub canonical: String,
    /// FNV-1a hash of `canonical`; carried on every CSV row.
    pub hash: u64,
}

impl RunConfig {
    pub fn t_end_ns(&self) -> u64 {
        self.warmup_ns + self.measure_ns
    }

    pub fn vc_count(&self) -> usize {
        self.routing.hop_cap(self.maxq)
    }
}

fn default_map() -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    let mut put = |k: &str, v: &str| {
        m.insert(k.to_string(), v.to_string());
    };
    put("p", "2");
    put("a", "4");
    put("h", "2");
    put("routing", "min");
    put("pattern", "ur");
    put("load", "0.5");
    put("seed", "1");
    put("alpha", "0.2");
    put("beta", "0.04");
    put("epsilon", "0.001");
    put("q_thld1", "0.2");
    put("q_thld2", "0.35");
    put("maxq", "6");
    put("ugal_bias", "0");
    put("packet_bytes", "128");
    put("link_bw_gbps", "4");
    put("local_latency_ns", "30");
    put("global_latency_ns", "300");
    put("host_latency_ns", "30");
    put("router_latency_ns", "0");
    put("vc_buffer", "20");
    put("warmup_ns", "100000");
    put("measure_ns", "100000");
    put("window_ns", "10000");
    put("converge_tolerance", "0.1");
    put("converge_hold", "5");
    put("audit", "true");
    put("dump_topology", "false");
    put("dump_packets", "false");
    m
}

/// Built-in presets; returned as key-value overlays.
pub fn preset(name: &str) -> Result<Vec<(&'static str, &'static str)>, SimError> {
    Ok(match name {
        // Table 1, first column: 1,056-node system with its hyperparameters.
        "paper-1056" => vec![("p", "4"), ("a", "8"), ("h", "4")],
        // Table 1, second column: 2,550-node system; thresholds retuned.
        "paper-2550" => {
            vec![("p", "5"), ("a", "10"), ("h", "5"), ("q_thld1", "0.05"), ("q_thld2", "0.4")]
        }
        // Desk-scale 72-node instance used by the acceptance suite.
        "desk-72" => vec![("p", "2"), ("a", "4"), ("h", "2")],
        // Throughput/latency-vs-load grid at desk scale.
        "figure5" => vec![
            ("p", "2"),
            ("a", "4"),
            ("h", "2"),
            ("patterns", "ur,adv:1,adv:4"),
            ("loads", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"),
            ("routings", "min,valn,ugalg,ugaln,par,qadaptive"),
            ("warmup_ns", "300000"),
            ("measure_ns", "100000"),
        ],
        // Latency-distribution operating points at desk scale.
        "figure6" => vec![
            ("p", "2"),
            ("a", "4"),
            ("h", "2"),
            ("patterns", "ur,adv:1,adv:4"),
            ("loads", "0.45"),
            ("routings", "min,valn,ugalg,ugaln,par,qadaptive"),
            ("warmup_ns", "300000"),
            ("measure_ns", "100000"),
        ],
        _ => {
            return Err(SimError::InvalidConfig(format!(
                "unknown preset '{name}' \
                 (expected paper-1056|paper-2550|desk-72|figure5|figure6)"
            )))
        }
    })
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, SimError> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            SimError::InvalidConfig(format!("line {}: expected 'key = value'", lineno + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Layered configuration: defaults, then preset, then file, then --set pairs.
pub fn merge_layers(
    preset_pairs: &[(&str, &str)],
    file: &BTreeMap<String, String>,
    overrides: &[(String, String)],
) -> BTreeMap<String, String> {
    let mut map = default_map();
    for (k, v) in preset_pairs {
        map.insert(k.to_string(), v.to_string());
    }
    for (k, v) in file {
        map.insert(k.clone(), v.clone());
    }
    for (k, v) in overrides {
        map.insert(k.clone(), v.clone());
    }
    map
}

const KNOWN_KEYS: &[&str] = &[
    "p", "a", "h", "routing", "routings", "pattern", "patterns", "load", "loads",
    "load_schedule", "seed", "seeds", "alpha", "beta", "epsilon", "q_thld1", "q_thld2",
    "maxq", "ugal_bias", "packet_bytes", "link_bw_gbps", "local_latency_ns",
    "global_latency_ns", "host_latency_ns", "router_latency_ns", "vc_buffer",
    "warmup_ns", "measure_ns", "window_ns", "converge_tolerance", "converge_hold",
    "audit", "dump_topology", "dump_packets", "qtable_snapshot_ns",
    "qtable_snapshot_routers",
];

fn check_known(map: &BTreeMap<String, String>) -> Result<(), SimError> {
    for k in map.keys() {
        if !KNOWN_KEYS.contains(&k.as_str()) {
            return Err(SimError::InvalidConfig(format!("unknown config key '{k}'")));
        }
    }
    Ok(())
}

fn get_parsed<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T, SimError> {
    let raw = map
        .get(key)
        .ok_or_else(|| SimError::InvalidConfig(format!("missing config key '{key}'")))?;
    raw.parse::<T>()
        .map_err(|_| SimError::InvalidConfig(format!("{key}: cannot parse '{raw}'")))
}

fn get_bool(map: &BTreeMap<String, String>, key: &str) -> Result<bool, SimError> {
    match map.get(key).map(String::as_str) {
        Some("true") | Some("1") => Ok(true),
        Some("false") | Some("0") => Ok(false),
        Some(other) => Err(SimError::InvalidConfig(format!("{key}: expected true/false, got '{other}'"))),
        None => Err(SimError::InvalidConfig(format!("missing config key '{key}'"))),
    }
}

fn parse_list<T: std::str::FromStr>(raw: &str, key: &str) -> Result<Vec<T>, SimError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| SimError::InvalidConfig(format!("{key}: cannot parse element '{s}'")))
        })
        .collect()
}

fn parse_load_schedule(raw: &str) -> Result<Vec<(u64, f64)>, SimError> {
    let mut sched = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (t, l) = item.split_once(':').ok_or_else(|| {
            SimError::InvalidConfig(format!("load_schedule: expected 't_ns:load', got '{item}'"))
        })?;
        let t: u64 = t.trim().parse().map_err(|_| {
            SimError::InvalidConfig(format!("load_schedule: bad start time '{t}'"))
        })?;
        let l: f64 = l.trim().parse().map_err(|_| {
            SimError::InvalidConfig(format!("load_schedule: bad load '{l}'"))
        })?;
        sched.push((t, l));
    }
    if sched.is_empty() {
        return Err(SimError::InvalidConfig("load_schedule: empty".into()));
    }
    for w in sched.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(SimError::InvalidConfig(
                "load_schedule: segment starts must be strictly increasing".into(),
            ));
        }
    }
    for &(_, l) in &sched {
        if !(0.0..=1.0).contains(&l) {
            return Err(SimError::InvalidConfig(format!("load_schedule: load {l} outside [0,1]")));
        }
    }
    Ok(sched)
}

fn canonical_dump(map: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    for (k, v) in map {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

fn fnv1a(data: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Resolves one fully-singular key map into a validated RunConfig.
pub fn resolve(map: &BTreeMap<String, String>) -> Result<RunConfig, SimError> {
    check_known(map)?;
    for plural in ["routings", "patterns", "loads", "seeds"] {
        if map.contains_key(plural) {
            return Err(SimError::InvalidConfig(format!(
                "'{plural}' is a sweep key; expand cells before resolving a single run"
            )));
        }
    }

    let params = DragonflyParams::new(
        get_parsed(map, "p")?,
        get_parsed(map, "a")?,
        get_parsed(map, "h")?,
    )?;
    let routing = Algo::parse(map.get("routing").map(String::as_str).unwrap_or(""))?;
    let pattern = PatternSpec::parse(map.get("pattern").map(String::as_str).unwrap_or(""))?;
    pattern.validate(&params)?;

    let load: f64 = get_parsed(map, "load")?;
    if !(0.0..=1.0).contains(&load) {
        return Err(SimError::InvalidConfig(format!("load: {load} outside [0,1]")));
    }
    let load_schedule = match map.get("load_schedule") {
        Some(raw) => parse_load_schedule(raw)?,
        None => vec![(0, load)],
    };

    let hp = QHyperParams {
        alpha: get_parsed(map, "alpha")?,
        beta: get_parsed(map, "beta")?,
        epsilon: get_parsed(map, "epsilon")?,
        q_thld1: get_parsed(map, "q_thld1")?,
        q_thld2: get_parsed(map, "q_thld2")?,
    };
    hp.validate().map_err(SimError::InvalidConfig)?;

    let timing = Timing {
        packet_bytes: get_parsed(map, "packet_bytes")?,
        bw_bytes_per_ns: get_parsed(map, "link_bw_gbps")?,
        local_ns: get_parsed(map, "local_latency_ns")?,
        global_ns: get_parsed(map, "global_latency_ns")?,
        host_ns: get_parsed(map, "host_latency_ns")?,
        router_ns: get_parsed(map, "router_latency_ns")?,
    };
    if timing.packet_bytes == 0 || timing.bw_bytes_per_ns == 0 || timing.ser_ns() == 0 {
        return Err(SimError::InvalidConfig(
            "packet_bytes/link_bw_gbps: serialization time must be a positive integer".into(),
        ));
    }

    let vc_buffer: usize = get_parsed(map, "vc_buffer")?;
    if vc_buffer == 0 {
        return Err(SimError::InvalidConfig("vc_buffer: must be >= 1".into()));
    }
    let window_ns: u64 = get_parsed(map, "window_ns")?;
    if window_ns == 0 {
        return Err(SimError::InvalidConfig("window_ns: must be >= 1".into()));
    }

    let canonical = canonical_dump(map);
    let hash = fnv1a(canonical.as_bytes());

    Ok(RunConfig {
        params,
        routing,
        ugal_bias: get_parsed(map, "ugal_bias")?,
        maxq: get_parsed(map, "maxq")?,
        hp,
        pattern,
        load,
        load_schedule,
        timing,
        vc_buffer,
        seed: get_parsed(map, "seed")?,
        warmup_ns: get_parsed(map, "warmup_ns")?,
        measure_ns: get_parsed(map, "measure_ns")?,
        window_ns,
        converge_tolerance: get_parsed(map, "converge_tolerance")?,
        converge_hold: get_parsed(map, "converge_hold")?,
        audit: get_bool(map, "audit")?,
        dump_topology: get_bool(map, "dump_topology")?,
        dump_packets: get_bool(map, "dump_packets")?,
        qtable_snapshot_ns: match map.get("qtable_snapshot_ns") {
            Some(raw) => parse_list(raw, "qtable_snapshot_ns")?,
            None => Vec::new(),
        },
        qtable_snapshot_routers: match map.get("qtable_snapshot_routers") {
            Some(raw) => parse_list(raw, "qtable_snapshot_routers")?,
            None => Vec::new(),
        },
        canonical,
        hash,
    })
}

/// Expands sweep keys (patterns x loads x routings x seeds, in that nesting
/// order) into singular cell maps. A config without sweep keys yields one cell.
pub fn expand_cells(map: &BTreeMap<String, String>) -> Result<Vec<BTreeMap<String, String>>, SimError> {
    check_known(map)?;
    let take_list = |plural: &str, singular: &str| -> Vec<String> {
        match map.get(plural) {
            Some(raw) => raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
            None => vec![map.get(singular).cloned().unwrap_or_default()],
        }
    };
    let patterns = take_list("patterns", "pattern");
    let loads = take_list("loads", "load");
    let routings = take_list("routings", "routing");
    let seeds = take_list("seeds", "seed");

    let mut cells = Vec::new();
    for pat in &patterns {
        for load in &loads {
            for routing in &routings {
                for seed in &seeds {
                    let mut cell = map.clone();
                    for plural in ["patterns", "loads", "routings", "seeds"] {
                        cell.remove(plural);
                    }
                    cell.insert("pattern".into(), pat.clone());
                    cell.insert("load".into(), load.clone());
                    cell.insert("routing".into(), routing.clone());
                    cell.insert("seed".into(), seed.clone());
                    cells.push(cell);
                }
            }
        }
    }
    Ok(cells)
}
