//! Latency/throughput collection over fixed windows plus end-of-run
//! summary statistics.

use crate::engine::Time;

/// Nearest-rank percentile: the smallest element such that at least
/// `q * n` elements are <= it. `sorted` must be ascending and non-empty.
pub fn percentile(sorted: &[u64], q: f64) -> u64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let n = sorted.len();
    let rank = (q * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Per-window aggregates over the full run (used for convergence detection
/// and the timeseries output).
#[derive(Debug, Clone, Copy)]
pub struct WindowStats {
    pub t0_ns: Time,
    pub mean_ns: f64,
    pub throughput: f64,
    pub mean_hops: f64,
}

/// End-of-run summary over the measurement interval.
#[derive(Debug, Clone)]
pub struct Summary {
    pub delivered: u64,
    pub mean_ns: f64,
    pub p50_ns: u64,
    pub p95_ns: u64,
    pub p99_ns: u64,
    pub q1_ns: u64,
    pub q3_ns: u64,
    pub mean_hops: f64,
    /// Delivered bytes over the measurement interval, normalized by the
    /// aggregate injection bandwidth.
    pub throughput: f64,
    /// Earliest window start from which latency stays within tolerance of
    /// the settled value, or None if never converged.
    pub converge_ns: Option<Time>,
    /// Packets still in flight at the end of the run.
    pub inflight: u64,
}

pub struct MetricsCollector {
    window_ns: Time,
    measure_start: Time,
    measure_end: Time,
    num_nodes: usize,
    bytes_per_ns: f64,
    packet_bytes: u64,
    // Current window accumulators.
    cur_t0: Time,
    cur_count: u64,
    cur_lat_sum: u64,
    cur_hop_sum: u64,
    pub windows: Vec<WindowStats>,
    // Measurement-interval accumulators (packets generated in-interval).
    latencies: Vec<u64>,
    hop_sum: u64,
    delivered_bytes: u64,
}

impl MetricsCollector {
    pub fn new(
        window_ns: Time,
        measure_start: Time,
        measure_end: Time,
        num_nodes: usize,
        bytes_per_ns: f64,
        packet_bytes: u64,
    ) -> Self {
        Self {
            window_ns,
            measure_start,
            measure_end,
            num_nodes,
            bytes_per_ns,
            packet_bytes,
            cur_t0: 0,
            cur_count: 0,
            cur_lat_sum: 0,
            cur_hop_sum: 0,
            windows: Vec::new(),
            latencies: Vec::new(),
            hop_sum: 0,
            delivered_bytes: 0,
        }
    }

    /// Records a delivery. `deliver_ns` must be within the window that is
    /// currently open (the simulation ticks windows in order).
    pub fn record(&mut self, gen_ns: Time, deliver_ns: Time, hops: u8) {
        let lat = deliver_ns - gen_ns;
        self.cur_count += 1;
        self.cur_lat_sum += lat;
        self.cur_hop_sum += hops as u64;
        if gen_ns >= self.measure_start && gen_ns < self.measure_end {
            self.latencies.push(lat);
            self.hop_sum += hops as u64;
        }
        if deliver_ns >= self.measure_start && deliver_ns < self.measure_end {
            self.delivered_bytes += self.packet_bytes;
        }
    }

    /// Closes the window starting at `cur_t0` and opens the next one.
    pub fn close_window(&mut self) {
        let denom = self.window_ns as f64 * self.num_nodes as f64 * self.bytes_per_ns;
        self.windows.push(WindowStats {
            t0_ns: self.cur_t0,
            mean_ns: if self.cur_count > 0 {
                self.cur_lat_sum as f64 / self.cur_count as f64
            } else {
                0.0
            },
            throughput: (self.cur_count * self.packet_bytes) as f64 / denom,
            mean_hops: if self.cur_count > 0 {
                self.cur_hop_sum as f64 / self.cur_count as f64
            } else {
                0.0
            },
        });
        self.cur_t0 += self.window_ns;
        self.cur_count = 0;
        self.cur_lat_sum = 0;
        self.cur_hop_sum = 0;
    }

    pub fn finish(mut self, inflight: u64, tolerance: f64, hold: usize) -> (Summary, Vec<WindowStats>) {
        if self.cur_count > 0 {
            self.close_window();
        }
        let converge_ns = convergence_time(&self.windows, tolerance, hold);
        self.latencies.sort_unstable();
        let n = self.latencies.len();
        let measure_span = (self.measure_end - self.measure_start) as f64;
        let throughput = self.delivered_bytes as f64
            / (measure_span * self.num_nodes as f64 * self.bytes_per_ns);
        if n == 0 {
            let summary = Summary {
                delivered: 0,
                mean_ns: 0.0,
                p50_ns: 0,
                p95_ns: 0,
                p99_ns: 0,
                q1_ns: 0,
                q3_ns: 0,
                mean_hops: 0.0,
                throughput,
                converge_ns,
                inflight,
            };
            return (summary, self.windows);
        }
        let sum: u64 = self.latencies.iter().sum();
        let summary = Summary {
            delivered: n as u64,
            mean_ns: sum as f64 / n as f64,
            p50_ns: percentile(&self.latencies, 0.50),
            p95_ns: percentile(&self.latencies, 0.95),
            p99_ns: percentile(&self.latencies, 0.99),
            q1_ns: percentile(&self.latencies, 0.25),
            q3_ns: percentile(&self.latencies, 0.75),
            mean_hops: self.hop_sum as f64 / n as f64,
            throughput,
            converge_ns,
            inflight,
        };
        (summary, self.windows)
    }
}

/// Settled value = median of the mean latencies of the final 5 windows.
/// Convergence = earliest window start from which `hold` consecutive
/// windows all lie within `tolerance` (relative) of the settled value.
pub fn convergence_time(windows: &[WindowStats], tolerance: f64, hold: usize) -> Option<Time> {
    if windows.len() < hold + 5 {
        return None;
    }
    let mut tail: Vec<f64> = windows[windows.len() - 5..].iter().map(|w| w.mean_ns).collect();
    tail.sort_by(|a, b| a.total_cmp(b));
    let settled = tail[2];
    if settled <= 0.0 {
        return None;
    }
    let ok = |w: &WindowStats| (w.mean_ns - settled).abs() <= tolerance * settled;
    // Earliest window that begins a run of `hold` consecutive in-band windows.
    let mut run = 0usize;
    for (i, w) in windows.iter().enumerate() {
        if ok(w) {
            run += 1;
            if run == hold {
                return Some(windows[i + 1 - hold].t0_ns);
            }
        } else {
            run = 0;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_singleton_and_bounds() {
        assert_eq!(percentile(&[42], 0.5), 42);
        assert_eq!(percentile(&[42], 0.0), 42);
        assert_eq!(percentile(&[42], 1.0), 42);
    }

    #[test]
    fn percentile_nearest_rank_on_1_to_100() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 0.50), 50);
        assert_eq!(percentile(&v, 0.95), 95);
        assert_eq!(percentile(&v, 0.99), 99);
        assert_eq!(percentile(&v, 1.0), 100);
        assert_eq!(percentile(&v, 0.25), 25);
    }

    #[test]
    fn percentile_is_monotone_in_q() {
        let v = [3_u64, 7, 7, 12, 90, 91, 1000];
        let mut prev = 0;
        for i in 0..=100 {
            let q = i as f64 / 100.0;
            let x = percentile(&v, q);
            assert!(x >= prev);
            prev = x;
        }
    }

    fn win(t0: Time, mean: f64) -> WindowStats {
        WindowStats {
            t0_ns: t0,
            mean_ns: mean,
            throughput: 0.0,
            mean_hops: 0.0,
        }
    }

    #[test]
    fn convergence_on_step_series() {
        // High latency for 10 windows, then settles at 100 +- small noise.
        let mut w: Vec<WindowStats> = (0..10).map(|i| win(i * 10_000, 500.0)).collect();
        for i in 10..30 {
            let noise = if i % 2 == 0 { 3.0 } else { -3.0 };
            w.push(win(i * 10_000, 100.0 + noise));
        }
        assert_eq!(convergence_time(&w, 0.1, 5), Some(100_000));
        // A tiny tolerance on the same data never matches.
        assert_eq!(convergence_time(&w, 0.001, 5), None);
    }

    #[test]
    fn convergence_requires_hold_windows() {
        let mut w: Vec<WindowStats> = (0..8).map(|i| win(i * 10_000, 500.0)).collect();
        for i in 8..11 {
            w.push(win(i * 10_000, 100.0));
        }
        // Settled value is 100 but only the last 3 windows match it; with
        // hold 5 that suffix is too short.
        assert_eq!(convergence_time(&w, 0.1, 5), None);
    }

    #[test]
    fn collector_summary_and_windows() {
        let mut m = MetricsCollector::new(10_000, 0, 100_000, 4, 4.0, 128);
        // 10 deliveries in window 0, 10 in window 1; all gen within measure.
        for i in 0..10 {
            m.record(i * 100, i * 100 + 580, 3);
        }
        m.close_window();
        for i in 0..10 {
            m.record(10_000 + i * 100, 10_000 + i * 100 + 900, 5);
        }
        m.close_window();
        let (s, windows) = m.finish(2, 0.1, 5);
        assert_eq!(windows.len(), 2);
        assert_eq!(s.delivered, 20);
        assert_eq!(s.p50_ns, 580);
        assert_eq!(s.p99_ns, 900);
        assert!((s.mean_hops - 4.0).abs() < 1e-12);
        assert_eq!(s.inflight, 2);
        // 20 packets * 128 B over 100 us * 4 nodes * 4 B/ns.
        let expect = 20.0 * 128.0 / (100_000.0 * 4.0 * 4.0);
        assert!((s.throughput - expect).abs() < 1e-12);
    }
}
