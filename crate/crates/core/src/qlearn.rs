//! Q-learning state: the two-level Q-table used by Q-adaptive routing, the
//! legacy per-destination-router table used by Q-routing, the hysteretic
//! value update, and zero-load initialization.
//!
//! Q-values are estimated remaining delivery times in nanoseconds, measured
//! from the moment a packet has fully arrived at the router that owns the
//! table, conditioned on the first outbound port.

use crate::config::Timing;
use crate::topology::{GroupId, PortId, PortKind, RouterId, Topology};

/// Hyperparameters for the hysteretic update and decision thresholds.
#[derive(Debug, Clone, Copy)]
pub struct QHyperParams {
    /// Learning rate applied when the estimate must come down (delta < 0).
    pub alpha: f64,
    /// Learning rate applied when the estimate must go up (delta >= 0).
    pub beta: f64,
    /// Exploration probability.
    pub epsilon: f64,
    /// Minimal-path bias threshold at the source router.
    pub q_thld1: f64,
    /// Minimal-path bias threshold at the first intermediate-group router.
    pub q_thld2: f64,
}

impl Default for QHyperParams {
    fn default() -> Self {
        Self { alpha: 0.2, beta: 0.04, epsilon: 0.001, q_thld1: 0.2, q_thld2: 0.35 }
    }
}

impl QHyperParams {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.alpha) || !unit(self.beta) || !unit(self.epsilon) {
            return Err(format!(
                "alpha, beta, epsilon must lie in [0,1]; got {}, {}, {}",
                self.alpha, self.beta, self.epsilon
            ));
        }
        if self.q_thld1 < 0.0 || self.q_thld2 < 0.0 {
            return Err("q_thld1 and q_thld2 must be non-negative".into());
        }
        Ok(())
    }
}

/// Dense row-major table of Q-values over the k-p non-host ports.
///
/// Two-level layout: row = dst_group * p + src_local (g*p rows).
/// Legacy layout: row = dst_router (m rows). Column = port - p.
#[derive(Debug, Clone)]
pub struct QTable {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry_count(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.cols + col] = v;
    }

    /// Column with the smallest value; ties break toward the lowest index.
    pub fn argmin_row(&self, row: usize) -> (usize, f64) {
        let slice = &self.values[row * self.cols..(row + 1) * self.cols];
        let mut best = 0;
        for (i, &v) in slice.iter().enumerate().skip(1) {
            if v < slice[best] {
                best = i;
            }
        }
        (best, slice[best])
    }

    /// Hysteretic update: delta = r + q_next - Q; alpha applies to
    /// improvements (delta < 0), beta to deteriorations.
    pub fn hysteretic_update(
        &mut self,
        row: usize,
        col: usize,
        reward_ns: f64,
        q_next: f64,
        alpha: f64,
        beta: f64,
    ) {
        let q = self.get(row, col);
        let delta = reward_ns + q_next - q;
        let rate = if delta < 0.0 { alpha } else { beta };
        self.set(row, col, q + rate * delta);
    }

    /// CSV snapshot: `row,port,value_ns`. `first_port` restores the port
    /// index from the column offset.
    pub fn dump_csv(&self, first_port: usize) -> String {
        let mut out = String::from("row,port,value_ns\n");
        for row in 0..self.rows {
            for col in 0..self.cols {
                out.push_str(&format!("{},{},{:.3}\n", row, col + first_port, self.get(row, col)));
            }
        }
        out
    }
}

/// Threshold selection between the minimal-path port and the
/// current best port: DeltaV = (q_min - q_best) / q_min; minimal wins while
/// DeltaV stays below the threshold. q_min <= 0 falls back to the minimal
/// port (defensive; estimates are positive under the timing model).
pub fn select_temp_port(
    q_min: f64,
    q_best: f64,
    min_port: PortId,
    best_port: PortId,
    threshold: f64,
) -> PortId {
    if q_min <= 0.0 {
        return min_port;
    }
    let delta_v = (q_min - q_best) / q_min;
    if delta_v < threshold {
        min_port
    } else {
        best_port
    }
}

/// Zero-load cost of one link: serialization plus propagation latency.
fn link_cost(timing: &Timing, kind: PortKind) -> f64 {
    (timing.ser_ns() + timing.latency_ns(kind)) as f64
}

/// Zero-load cost from fully-arrived at the destination router to delivered
/// at the node: ejection serialization plus host link latency.
pub fn delivery_cost(timing: &Timing) -> f64 {
    (timing.ser_ns() + timing.host_ns) as f64
}

/// Zero-load minimal remaining cost from router `from` to a generic node of
/// group `gdst`, assuming the destination router is reached by one local hop
/// after entering the group (the canonical minimal l-g-l shape). `via_global`
/// tells whether the packet would arrive at `from` over a global link, which
/// decides whether a local hop inside the destination group is still due.
fn remaining_to_group(
    topo: &Topology,
    timing: &Timing,
    from: RouterId,
    gdst: GroupId,
    via_global: bool,
) -> f64 {
    let c_local = link_cost(timing, PortKind::Local);
    let c_global = link_cost(timing, PortKind::Global);
    if topo.group_of(from) == gdst {
        // Entered the destination group: one generic local hop remains when
        // we came in over a global link, none when already moving locally.
        if via_global {
            c_local
        } else {
            0.0
        }
    } else {
        let (gw, _) = topo.gateway_to_group(from, gdst);
        let to_gw = if gw == from { 0.0 } else { c_local };
        to_gw + c_global + c_local
    }
}

/// Initializes a two-level table for `router` to the theoretical zero-load
/// delivery time through a minimal path. Entries are identical across the
/// src_local dimension at initialization.
pub fn init_two_level(topo: &Topology, timing: &Timing, router: RouterId) -> QTable {
    let params = topo.params();
    let (p, g, k) = (params.p, params.g(), params.k());
    let mut table = QTable::new(g * p, k - p);
    for gdst in 0..g {
        let mut row_vals = vec![0.0; k - p];
        for port in p..k {
            let kind = topo.port_kind(port);
            let (neighbor, _) = topo.neighbor_via_port(router, port);
            let rem = remaining_to_group(
                topo,
                timing,
                neighbor,
                gdst,
                matches!(kind, PortKind::Global),
            );
            row_vals[port - p] = link_cost(timing, kind) + rem + delivery_cost(timing);
        }
        for n in 0..p {
            for (col, v) in row_vals.iter().enumerate() {
                table.set(gdst * p + n, col, *v);
            }
        }
    }
    table
}

/// Zero-load minimal cost between routers (sum of link costs on the unique
/// minimal path).
pub fn zero_load_min_cost(topo: &Topology, timing: &Timing, src: RouterId, dst: RouterId) -> f64 {
    let mut cost = 0.0;
    let mut at = src;
    while let Some(port) = topo.next_hop_min(at, dst) {
        cost += link_cost(timing, topo.port_kind(port));
        at = topo.neighbor_via_port(at, port).0;
    }
    cost
}

/// Initializes a legacy per-destination-router table to exact zero-load
/// minimal delivery times.
pub fn init_legacy(topo: &Topology, timing: &Timing, router: RouterId) -> QTable {
    let params = topo.params();
    let (p, m, k) = (params.p, params.m(), params.k());
    let mut table = QTable::new(m, k - p);
    for dst in 0..m {
        for port in p..k {
            let (neighbor, _) = topo.neighbor_via_port(router, port);
            let v = link_cost(timing, topo.port_kind(port))
                + zero_load_min_cost(topo, timing, neighbor, dst)
                + delivery_cost(timing);
            table.set(dst, port - p, v);
        }
    }
    table
}
