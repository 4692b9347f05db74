//! Synthetic workload generation: destination selection for the five
//! traffic patterns and exact piecewise-constant offered-load pacing.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::Timing;
use crate::error::SimError;
use crate::topology::{DragonflyParams, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternSpec {
    /// Uniform random destination, redrawn per message.
    Ur,
    /// Every node in group G targets a random node of group (G+i) mod g.
    Adv(usize),
    /// Nodes on an X*Y*Z grid exchange with their up-to-6 axis neighbors.
    Stencil3d(usize, usize, usize),
    /// Z-axis communicators perform all-to-all exchanges.
    ManyToMany(usize, usize, usize),
    /// Fixed random target set of size uniform in [min, max].
    RandNeighbors(usize, usize),
}

impl PatternSpec {
    pub fn parse(s: &str) -> Result<Self, SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if s == "ur" {
            return Ok(PatternSpec::Ur);
        }
        if let Some(arg) = s.strip_prefix("adv:") {
            return match arg.parse::<usize>() {
                Ok(i) => Ok(PatternSpec::Adv(i)),
                Err(_) => bad(format!("pattern: bad adversarial offset '{arg}'")),
            };
        }
        let parse_grid = |arg: &str| -> Option<(usize, usize, usize)> {
            let mut it = arg.split('x').map(|v| v.parse::<usize>());
            match (it.next(), it.next(), it.next(), it.next()) {
                (Some(Ok(x)), Some(Ok(y)), Some(Ok(z)), None) => Some((x, y, z)),
                _ => None,
            }
        };
        if let Some(arg) = s.strip_prefix("stencil3d:") {
            return match parse_grid(arg) {
                Some((x, y, z)) => Ok(PatternSpec::Stencil3d(x, y, z)),
                None => bad(format!("pattern: expected stencil3d:<X>x<Y>x<Z>, got '{s}'")),
            };
        }
        if let Some(arg) = s.strip_prefix("m2m:") {
            return match parse_grid(arg) {
                Some((x, y, z)) => Ok(PatternSpec::ManyToMany(x, y, z)),
                None => bad(format!("pattern: expected m2m:<X>x<Y>x<Z>, got '{s}'")),
            };
        }
        if let Some(arg) = s.strip_prefix("randneighbors:") {
            if let Some((lo, hi)) = arg.split_once('-') {
                if let (Ok(lo), Ok(hi)) = (lo.parse(), hi.parse()) {
                    return Ok(PatternSpec::RandNeighbors(lo, hi));
                }
            }
            return bad(format!("pattern: expected randneighbors:<min>-<max>, got '{s}'"));
        }
        bad(format!("pattern: unknown pattern '{s}'"))
    }

    pub fn name(&self) -> String {
        match self {
            PatternSpec::Ur => "ur".into(),
            PatternSpec::Adv(i) => format!("adv:{i}"),
            PatternSpec::Stencil3d(x, y, z) => format!("stencil3d:{x}x{y}x{z}"),
            PatternSpec::ManyToMany(x, y, z) => format!("m2m:{x}x{y}x{z}"),
            PatternSpec::RandNeighbors(lo, hi) => format!("randneighbors:{lo}-{hi}"),
        }
    }

    pub fn validate(&self, params: &DragonflyParams) -> Result<(), SimError> {
        let n = params.num_nodes();
        match *self {
            PatternSpec::Ur => {
                if n < 2 {
                    return Err(SimError::InvalidConfig("pattern ur: needs at least 2 nodes".into()));
                }
            }
            PatternSpec::Adv(i) => {
                if i == 0 || i >= params.g() {
                    return Err(SimError::InvalidConfig(format!(
                        "pattern adv:{i}: offset must satisfy 1 <= i < g = {}",
                        params.g()
                    )));
                }
            }
            PatternSpec::Stencil3d(x, y, z) | PatternSpec::ManyToMany(x, y, z) => {
                if x * y * z != n {
                    return Err(SimError::InvalidConfig(format!(
                        "pattern {}: grid {}x{}x{} has {} cells but the system has {} nodes",
                        self.name(),
                        x,
                        y,
                        z,
                        x * y * z,
                        n
                    )));
                }
                if let PatternSpec::ManyToMany(_, _, z) = *self {
                    if z < 2 {
                        return Err(SimError::InvalidConfig(
                            "pattern m2m: communicators need Z >= 2".into(),
                        ));
                    }
                }
            }
            PatternSpec::RandNeighbors(lo, hi) => {
                if lo < 1 || hi < lo || hi > n - 1 {
                    return Err(SimError::InvalidConfig(format!(
                        "pattern randneighbors:{lo}-{hi}: need 1 <= min <= max <= N-1 = {}",
                        n - 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Node id to grid coordinates: X-major, then Y, then Z.
fn grid_coords(n: NodeId, x: usize, y: usize) -> (usize, usize, usize) {
    (n % x, (n / x) % y, n / (x * y))
}

fn grid_id(cx: usize, cy: usize, cz: usize, x: usize, y: usize) -> NodeId {
    cx + cy * x + cz * x * y
}

/// Per-run traffic state: fixed target lists where the pattern requires them.
pub struct Traffic {
    spec: PatternSpec,
    num_nodes: usize,
    nodes_per_group: usize,
    groups: usize,
    /// Fixed per-node target lists (stencil/m2m/randneighbors); empty otherwise.
    targets: Vec<Vec<NodeId>>,
    /// Round-robin cursor per node (stencil/m2m).
    cursor: Vec<usize>,
}

impl Traffic {
    pub fn new(spec: PatternSpec, params: &DragonflyParams, rng: &mut ChaCha8Rng) -> Self {
        let n = params.num_nodes();
        let mut targets: Vec<Vec<NodeId>> = Vec::new();
        match spec {
            PatternSpec::Stencil3d(x, y, z) => {
                targets = (0..n)
                    .map(|node| {
                        let (cx, cy, cz) = grid_coords(node, x, y);
                        let mut list = Vec::with_capacity(6);
                        // Non-periodic grid: boundary nodes have fewer neighbors.
                        if cx > 0 {
                            list.push(grid_id(cx - 1, cy, cz, x, y));
                        }
                        if cx + 1 < x {
                            list.push(grid_id(cx + 1, cy, cz, x, y));
                        }
                        if cy > 0 {
                            list.push(grid_id(cx, cy - 1, cz, x, y));
                        }
                        if cy + 1 < y {
                            list.push(grid_id(cx, cy + 1, cz, x, y));
                        }
                        if cz > 0 {
                            list.push(grid_id(cx, cy, cz - 1, x, y));
                        }
                        if cz + 1 < z {
                            list.push(grid_id(cx, cy, cz + 1, x, y));
                        }
                        list
                    })
                    .collect();
            }
            PatternSpec::ManyToMany(x, y, z) => {
                targets = (0..n)
                    .map(|node| {
                        let (cx, cy, cz) = grid_coords(node, x, y);
                        (0..z)
                            .filter(|&oz| oz != cz)
                            .map(|oz| grid_id(cx, cy, oz, x, y))
                            .collect()
                    })
                    .collect();
            }
            PatternSpec::RandNeighbors(lo, hi) => {
                targets = (0..n)
                    .map(|node| {
                        let size = rng.gen_range(lo..=hi);
                        let mut set = Vec::with_capacity(size);
                        while set.len() < size {
                            let t = rng.gen_range(0..n);
                            if t != node && !set.contains(&t) {
                                set.push(t);
                            }
                        }
                        set
                    })
                    .collect();
            }
            PatternSpec::Ur | PatternSpec::Adv(_) => {}
        }
        let cursor = vec![0; if targets.is_empty() { 0 } else { n }];
        Self {
            spec,
            num_nodes: n,
            nodes_per_group: params.a * params.p,
            groups: params.g(),
            targets,
            cursor,
        }
    }

    /// Destination for the next message from `node`.
    pub fn pick_destination(&mut self, node: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
        match self.spec {
            PatternSpec::Ur => {
                // Uniform over the N-1 other nodes.
                let d = rng.gen_range(0..self.num_nodes - 1);
                if d >= node {
                    d + 1
                } else {
                    d
                }
            }
            PatternSpec::Adv(i) => {
                let group = node / self.nodes_per_group;
                let dst_group = (group + i) % self.groups;
                dst_group * self.nodes_per_group + rng.gen_range(0..self.nodes_per_group)
            }
            PatternSpec::Stencil3d(..) | PatternSpec::ManyToMany(..) => {
                let list = &self.targets[node];
                let c = self.cursor[node];
                self.cursor[node] = (c + 1) % list.len();
                list[c]
            }
            PatternSpec::RandNeighbors(..) => {
                let list = &self.targets[node];
                list[rng.gen_range(0..list.len())]
            }
        }
    }

    pub fn target_list(&self, node: NodeId) -> Option<&[NodeId]> {
        self.targets.get(node).map(Vec::as_slice)
    }
}

/// Exact offered-load pacing for one node: generation instants are the
/// times at which the integral of the piecewise-constant rate crosses
/// successive integers, with a uniformly random initial phase.
pub struct LoadGen {
    /// (start_ns, packets per ns) segments.
    segments: Vec<(u64, f64)>,
    seg_idx: usize,
    t: f64,
    /// Accumulated fractional packets in [0, 1).
    acc: f64,
}

impl LoadGen {
    pub fn new(schedule: &[(u64, f64)], timing: &Timing, phase: f64) -> Self {
        let per_ns = timing.bw_bytes_per_ns as f64 / timing.packet_bytes as f64;
        let segments: Vec<(u64, f64)> = schedule.iter().map(|&(t, l)| (t, l * per_ns)).collect();
        Self { segments, seg_idx: 0, t: 0.0, acc: phase }
    }

    /// Next generation instant in integer nanoseconds, or None when all
    /// remaining segments have zero rate.
    pub fn next_time(&mut self) -> Option<u64> {
        loop {
            let rate = self.segments[self.seg_idx].1;
            let seg_end = self
                .segments
                .get(self.seg_idx + 1)
                .map(|&(t, _)| t as f64)
                .unwrap_or(f64::INFINITY);
            if rate > 0.0 {
                let dt = (1.0 - self.acc) / rate;
                if self.t + dt < seg_end {
                    self.t += dt;
                    self.acc = 0.0;
                    return Some(self.t.round() as u64);
                }
            }
            // Accumulate through the rest of this segment, then advance.
            if self.seg_idx + 1 >= self.segments.len() {
                return None;
            }
            self.acc += rate * (seg_end - self.t);
            self.t = seg_end;
            self.seg_idx += 1;
        }
    }
}

/// Mean generation interval at a flat load (32/load ns at defaults).
pub fn generation_interval_ns(load: f64, timing: &Timing) -> f64 {
    timing.packet_bytes as f64 / (load * timing.bw_bytes_per_ns as f64)
}
