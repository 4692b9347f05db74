//! The discrete-event simulation proper: node injection, router pipeline
//! (input VC buffers, round-robin arbitration, output serialization),
//! credit flow control, Q-learning feedback, and run-level accounting.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Algo, RunConfig};
use crate::engine::{rng_stream, EventQueue, StreamId, Time};
use crate::error::SimError;
use crate::metrics::{MetricsCollector, Summary, WindowStats};
use crate::qlearn::{delivery_cost, init_legacy, init_two_level, QTable};
use crate::router::{IntGroupFlag, Packet, Phase, RouterState};
use crate::routing::{decide, RoutingCtx};
use crate::topology::{NodeId, PortId, PortKind, RouterId, Topology};
use crate::traffic::{LoadGen, Traffic};

enum Ev {
    Gen { node: NodeId },
    NodeSerDone { node: NodeId },
    NodeCredit { node: NodeId },
    Arrive { router: RouterId, pkt: Box<Packet> },
    TryForward { router: RouterId },
    SerDone { router: RouterId, port: PortId },
    Deliver { pkt: Box<Packet> },
    Credit { router: RouterId, port: PortId, vc: u8 },
    Feedback { router: RouterId, row: u32, col: u8, reward: f64, q_next: f64 },
    Tick,
    Snapshot,
}

struct NodeState {
    backlog: VecDeque<(Time, NodeId)>,
    /// Credits toward the source router's host-port input buffer.
    credits: u32,
    serializing: bool,
    loadgen: LoadGen,
}

#[derive(Debug, Clone)]
pub struct PacketRecord {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub gen_ns: Time,
    pub deliver_ns: Time,
    pub hops: u8,
    pub path: Vec<PortId>,
}

#[derive(Debug, Clone)]
pub struct QSnapshot {
    pub t_ns: Time,
    pub router: RouterId,
    pub csv: String,
}

pub struct RunOutput {
    pub summary: Summary,
    pub windows: Vec<WindowStats>,
    pub snapshots: Vec<QSnapshot>,
    pub packets: Vec<PacketRecord>,
}

pub struct Sim {
    cfg: RunConfig,
    topo: Topology,
    queue: EventQueue<Ev>,
    routers: Vec<RouterState>,
    qtables: Vec<QTable>,
    nodes: Vec<NodeState>,
    /// Input slots whose new head still needs a routing decision.
    pending: Vec<Vec<u32>>,
    tf_time: Vec<Time>,
    traffic: Traffic,
    traffic_rng: ChaCha8Rng,
    routing_rng: ChaCha8Rng,
    val_rng: ChaCha8Rng,
    metrics: MetricsCollector,
    t_end: Time,
    generated: u64,
    delivered: u64,
    granted: u64,
    next_packet_id: u64,
    packets: Vec<PacketRecord>,
    snapshots: Vec<QSnapshot>,
    last_delivery: Option<(Time, u8)>,
    // Stall detector state, sampled at window ticks.
    stall_ticks: u32,
    tick_delivered: u64,
    tick_granted: u64,
}

impl Sim {
    pub fn new(cfg: RunConfig) -> Result<Self, SimError> {
        Self::build(cfg, true)
    }

    /// A simulator with traffic generation disabled; packets are injected
    /// with `inject_one`. Used for zero-load probes.
    pub fn new_quiet(cfg: RunConfig) -> Result<Self, SimError> {
        Self::build(cfg, false)
    }

    fn build(cfg: RunConfig, generate: bool) -> Result<Self, SimError> {
        let topo = Topology::build(cfg.params)?;
        let params = topo.params();
        let (n, m, k, p) = (params.num_nodes(), params.m(), params.k(), params.p);
        let vcs = cfg.vc_count();
        let mut traffic_rng = rng_stream(cfg.seed, StreamId::Traffic);
        let traffic = Traffic::new(cfg.pattern, params, &mut traffic_rng);
        let mut queue = EventQueue::new();
        let t_end = cfg.t_end_ns();

        let mut nodes = Vec::with_capacity(n);
        for node in 0..n {
            let phase = traffic_rng.gen::<f64>();
            let mut loadgen = LoadGen::new(&cfg.load_schedule, &cfg.timing, phase);
            if generate {
                if let Some(t0) = loadgen.next_time() {
                    if t0 <= t_end {
                        queue.schedule(t0, Ev::Gen { node })?;
                    }
                }
            }
            nodes.push(NodeState {
                backlog: VecDeque::new(),
                credits: cfg.vc_buffer as u32,
                serializing: false,
                loadgen,
            });
        }

        let qtables = if cfg.routing.uses_qtable() {
            (0..m)
                .map(|r| match cfg.routing {
                    Algo::Qadaptive => init_two_level(&topo, &cfg.timing, r),
                    _ => init_legacy(&topo, &cfg.timing, r),
                })
                .collect()
        } else {
            Vec::new()
        };

        if cfg.window_ns <= t_end {
            queue.schedule(cfg.window_ns, Ev::Tick)?;
        }
        for &t in &cfg.qtable_snapshot_ns {
            if t <= t_end {
                queue.schedule(t, Ev::Snapshot)?;
            }
        }

        let metrics = MetricsCollector::new(
            cfg.window_ns,
            cfg.warmup_ns,
            t_end,
            n,
            cfg.timing.bw_bytes_per_ns as f64,
            cfg.timing.packet_bytes,
        );

        Ok(Self {
            topo,
            queue,
            routers: (0..m).map(|r| RouterState::new(r, k, p, vcs, cfg.vc_buffer)).collect(),
            qtables,
            nodes,
            pending: vec![Vec::new(); m],
            tf_time: vec![0; m],
            traffic,
            traffic_rng,
            routing_rng: rng_stream(cfg.seed, StreamId::Routing),
            val_rng: rng_stream(cfg.seed, StreamId::ValIntermediate),
            metrics,
            t_end,
            generated: 0,
            delivered: 0,
            granted: 0,
            next_packet_id: 0,
            packets: Vec::new(),
            snapshots: Vec::new(),
            last_delivery: None,
            stall_ticks: 0,
            tick_delivered: 0,
            tick_granted: 0,
            cfg,
        })
    }

    /// Queues one packet for injection at `node` (quiet-simulator support).
    pub fn inject_one(&mut self, node: NodeId, dst: NodeId, t: Time) -> Result<(), SimError> {
        self.generated += 1;
        self.nodes[node].backlog.push_back((t, dst));
        self.queue.schedule(t, Ev::NodeSerDone { node })
    }

    /// Runs to completion and produces the run output.
    pub fn run(mut self) -> Result<RunOutput, SimError> {
        while self.step()? {}
        self.finish()
    }

    /// Runs until the first delivery; returns (latency_ns, hops).
    pub fn run_until_first_delivery(mut self) -> Result<(Time, u8), SimError> {
        while self.last_delivery.is_none() && self.step()? {}
        self.last_delivery.ok_or_else(|| {
            SimError::InvariantViolation("probe packet was never delivered".into())
        })
    }

    fn finish(self) -> Result<RunOutput, SimError> {
        let (summary, windows) = self.metrics.finish(
            self.generated - self.delivered,
            self.cfg.converge_tolerance,
            self.cfg.converge_hold,
        );
        Ok(RunOutput { summary, windows, snapshots: self.snapshots, packets: self.packets })
    }

    /// Processes one event; false once the horizon is reached or the queue
    /// is empty.
    fn step(&mut self) -> Result<bool, SimError> {
        let Some((t, ev)) = self.queue.pop() else { return Ok(false) };
        if t > self.t_end {
            return Ok(false);
        }
        match ev {
            Ev::Gen { node } => self.on_gen(node)?,
            Ev::NodeSerDone { node } => {
                self.nodes[node].serializing = false;
                self.try_inject(node)?;
            }
            Ev::NodeCredit { node } => {
                let st = &mut self.nodes[node];
                if st.credits as usize >= self.cfg.vc_buffer {
                    return Err(SimError::InvariantViolation(format!(
                        "node {node}: host-link credit overflow"
                    )));
                }
                st.credits += 1;
                self.try_inject(node)?;
            }
            Ev::Arrive { router, pkt } => self.on_arrive(router, pkt)?,
            Ev::TryForward { router } => self.try_forward(router)?,
            Ev::SerDone { router, port } => self.on_ser_done(router, port)?,
            Ev::Deliver { pkt } => self.on_deliver(*pkt),
            Ev::Credit { router, port, vc } => {
                self.routers[router].return_credit(port, vc)?;
                self.schedule_tf(router, self.queue.clock())?;
            }
            Ev::Feedback { router, row, col, reward, q_next } => {
                let hp = &self.cfg.hp;
                let (alpha, beta) = match self.cfg.routing {
                    Algo::Qadaptive => (hp.alpha, hp.beta),
                    _ => (hp.alpha, hp.alpha),
                };
                self.qtables[router].hysteretic_update(
                    row as usize,
                    col as usize,
                    reward,
                    q_next,
                    alpha,
                    beta,
                );
            }
            Ev::Tick => self.on_tick()?,
            Ev::Snapshot => {
                let t = self.queue.clock();
                let p = self.topo.params().p;
                for &r in &self.cfg.qtable_snapshot_routers {
                    self.snapshots.push(QSnapshot {
                        t_ns: t,
                        router: r,
                        csv: self.qtables[r].dump_csv(p),
                    });
                }
            }
        }
        Ok(true)
    }

    fn on_gen(&mut self, node: NodeId) -> Result<(), SimError> {
        let t = self.queue.clock();
        self.generated += 1;
        let dst = self.traffic.pick_destination(node, &mut self.traffic_rng);
        self.nodes[node].backlog.push_back((t, dst));
        if let Some(next) = self.nodes[node].loadgen.next_time() {
            if next <= self.t_end {
                self.queue.schedule(next, Ev::Gen { node })?;
            }
        }
        self.try_inject(node)
    }

    fn try_inject(&mut self, node: NodeId) -> Result<(), SimError> {
        let t = self.queue.clock();
        let st = &mut self.nodes[node];
        if st.serializing || st.credits == 0 || st.backlog.is_empty() {
            return Ok(());
        }
        let (gen_ns, dst) = st.backlog.pop_front().unwrap();
        st.credits -= 1;
        st.serializing = true;
        let ser = self.cfg.timing.ser_ns();
        self.queue.schedule(t + ser, Ev::NodeSerDone { node })?;
        let pkt = Packet {
            id: self.next_packet_id,
            src_node: node,
            dst_node: dst,
            gen_ns,
            hops: 0,
            vc: 0,
            arrival_ns: 0,
            prev_arrival_ns: 0,
            in_port: self.topo.host_index(node),
            phase: Phase::None,
            int_group: IntGroupFlag::NotYet,
            decided_port: None,
            trace: self.cfg.dump_packets.then(Vec::new),
        };
        self.next_packet_id += 1;
        let router = self.topo.router_of(node);
        self.queue
            .schedule(t + ser + self.cfg.timing.host_ns, Ev::Arrive { router, pkt: Box::new(pkt) })
    }

    fn on_arrive(&mut self, r: RouterId, mut pkt: Box<Packet>) -> Result<(), SimError> {
        let t = self.queue.clock();
        let p = self.topo.params().p;
        let timing = self.cfg.timing;
        pkt.arrival_ns = t;
        if pkt.in_port < p {
            pkt.prev_arrival_ns = t;
        }
        let dst_router = self.topo.router_of(pkt.dst_node);

        if r == dst_router {
            // Ejection is an infinite sink: release the inbound credit at
            // once and hand the packet to the host serializer.
            if pkt.in_port < p {
                let node = r * p + pkt.in_port;
                self.queue.schedule(t + timing.host_ns, Ev::NodeCredit { node })?;
            } else {
                let (u, uport) = self.topo.neighbor_via_port(r, pkt.in_port);
                let lat = timing.latency_ns(self.topo.port_kind(pkt.in_port));
                self.queue
                    .schedule(t + lat, Ev::Credit { router: u, port: uport, vc: pkt.vc })?;
                if self.cfg.routing.uses_qtable() {
                    let row = self.row_for(&pkt);
                    let reward = (t - pkt.prev_arrival_ns) as f64;
                    self.queue.schedule(
                        t + lat,
                        Ev::Feedback {
                            router: u,
                            row: row as u32,
                            col: (uport - p) as u8,
                            reward,
                            q_next: delivery_cost(&timing),
                        },
                    )?;
                }
            }
            let port = self.topo.host_index(pkt.dst_node);
            return self.enqueue_output(r, port, *pkt);
        }

        if self.cfg.routing == Algo::Qadaptive
            && pkt.int_group == IntGroupFlag::NotYet
            && pkt.in_port >= p
            && matches!(self.topo.port_kind(pkt.in_port), PortKind::Global)
            && self.topo.group_of(r) != self.topo.group_of(dst_router)
        {
            pkt.int_group = IntGroupFlag::Pending;
        }
        let slot = self.routers[r].slot(pkt.in_port, pkt.vc);
        if self.routers[r].enqueue(*pkt)? {
            self.pending[r].push(slot as u32);
        }
        self.schedule_tf(r, t + timing.router_ns)
    }

    fn schedule_tf(&mut self, r: RouterId, when: Time) -> Result<(), SimError> {
        if self.routers[r].tf_pending && self.tf_time[r] == when {
            return Ok(());
        }
        self.routers[r].tf_pending = true;
        self.tf_time[r] = when;
        self.queue.schedule(when, Ev::TryForward { router: r })
    }

    /// Decision plus arbitration fixpoint for one router. Each pass decides
    /// all newly headed packets and grants at most one packet per output.
    fn try_forward(&mut self, r: RouterId) -> Result<(), SimError> {
        self.routers[r].tf_pending = false;
        let p = self.topo.params().p;
        let k = self.topo.params().k();
        loop {
            let mut progress = false;
            let mut i = 0;
            while i < self.pending[r].len() {
                let slot = self.pending[r][i] as usize;
                i += 1;
                let decision = {
                    let state = &self.routers[r];
                    let pkt = state.head(slot).expect("pending decision on empty slot");
                    debug_assert!(pkt.decided_port.is_none());
                    let ctx = RoutingCtx {
                        topo: &self.topo,
                        algo: self.cfg.routing,
                        hp: &self.cfg.hp,
                        ugal_bias: self.cfg.ugal_bias,
                        maxq: self.cfg.maxq,
                    };
                    let qt = self.qtables.get(r);
                    decide(&ctx, state, qt, &mut self.routing_rng, &mut self.val_rng, pkt)
                };
                let head = self.routers[r].head_mut(slot).unwrap();
                head.decided_port = Some(decision.port);
                head.phase = decision.phase;
                if decision.consume_int {
                    head.int_group = IntGroupFlag::Consumed;
                }
                self.routers[r].push_request(decision.port, slot);
                progress = true;
            }
            self.pending[r].clear();
            for port in p..k {
                if let Some(slot) = self.routers[r].arbitrate(port) {
                    self.grant(r, slot, port)?;
                    progress = true;
                }
            }
            if !progress {
                return Ok(());
            }
        }
    }

    fn grant(&mut self, r: RouterId, slot: usize, port: PortId) -> Result<(), SimError> {
        let t = self.queue.clock();
        let p = self.topo.params().p;
        let timing = self.cfg.timing;
        let vc_next = self.routers[r].head(slot).unwrap().hops;
        if vc_next as usize >= self.cfg.vc_count() {
            return Err(SimError::InvariantViolation(format!(
                "router {r}: packet exceeded the {}-hop cap of {}",
                self.cfg.vc_count(),
                self.cfg.routing.name()
            )));
        }
        let mut pkt = self.routers[r].grant(slot, port, vc_next);
        self.granted += 1;

        // The freed input slot releases one upstream credit; forwarding a
        // packet also reports its measured per-hop cost upstream.
        if pkt.in_port < p {
            let node = r * p + pkt.in_port;
            self.queue.schedule(t + timing.host_ns, Ev::NodeCredit { node })?;
        } else {
            let (u, uport) = self.topo.neighbor_via_port(r, pkt.in_port);
            let lat = timing.latency_ns(self.topo.port_kind(pkt.in_port));
            self.queue.schedule(t + lat, Ev::Credit { router: u, port: uport, vc: pkt.vc })?;
            if self.cfg.routing.uses_qtable() {
                let row = self.row_for(&pkt);
                let q_next = self.qtables[r].get(row, port - p);
                let reward = (pkt.arrival_ns - pkt.prev_arrival_ns) as f64;
                self.queue.schedule(
                    t + lat,
                    Ev::Feedback {
                        router: u,
                        row: row as u32,
                        col: (uport - p) as u8,
                        reward,
                        q_next,
                    },
                )?;
            }
        }

        pkt.vc = vc_next;
        pkt.hops += 1;
        pkt.prev_arrival_ns = pkt.arrival_ns;
        pkt.decided_port = None;
        if let Some(trace) = pkt.trace.as_mut() {
            trace.push(port);
        }
        let (_, dport) = self.topo.neighbor_via_port(r, port);
        pkt.in_port = dport;
        self.enqueue_output(r, port, pkt)?;
        if self.routers[r].head(slot).is_some() {
            self.pending[r].push(slot as u32);
        }
        Ok(())
    }

    fn enqueue_output(&mut self, r: RouterId, port: PortId, pkt: Packet) -> Result<(), SimError> {
        let t = self.queue.clock();
        let out = &mut self.routers[r].out[port];
        out.queue.push_back(pkt);
        if !out.serializing {
            out.serializing = true;
            self.queue.schedule(t + self.cfg.timing.ser_ns(), Ev::SerDone { router: r, port })?;
        }
        Ok(())
    }

    fn on_ser_done(&mut self, r: RouterId, port: PortId) -> Result<(), SimError> {
        let t = self.queue.clock();
        let p = self.topo.params().p;
        let timing = self.cfg.timing;
        let out = &mut self.routers[r].out[port];
        let pkt = out.queue.pop_front().expect("serializer finished on empty queue");
        if out.queue.is_empty() {
            out.serializing = false;
        } else {
            self.queue.schedule(t + timing.ser_ns(), Ev::SerDone { router: r, port })?;
        }
        if port < p {
            self.queue.schedule(t + timing.host_ns, Ev::Deliver { pkt: Box::new(pkt) })
        } else {
            let (d, _) = self.topo.neighbor_via_port(r, port);
            let lat = timing.latency_ns(self.topo.port_kind(port));
            self.queue.schedule(t + lat, Ev::Arrive { router: d, pkt: Box::new(pkt) })
        }
    }

    fn on_deliver(&mut self, pkt: Packet) {
        let t = self.queue.clock();
        self.delivered += 1;
        self.metrics.record(pkt.gen_ns, t, pkt.hops);
        self.last_delivery = Some((t - pkt.gen_ns, pkt.hops));
        if self.cfg.dump_packets {
            self.packets.push(PacketRecord {
                id: pkt.id,
                src: pkt.src_node,
                dst: pkt.dst_node,
                gen_ns: pkt.gen_ns,
                deliver_ns: t,
                hops: pkt.hops,
                path: pkt.trace.unwrap_or_default(),
            });
        }
    }

    fn row_for(&self, pkt: &Packet) -> usize {
        let dst_router = self.topo.router_of(pkt.dst_node);
        match self.cfg.routing {
            Algo::Qadaptive => {
                self.topo.group_of(dst_router) * self.topo.params().p
                    + self.topo.host_index(pkt.src_node)
            }
            _ => dst_router,
        }
    }

    fn on_tick(&mut self) -> Result<(), SimError> {
        let t = self.queue.clock();
        self.metrics.close_window();
        if self.cfg.audit {
            self.audit()?;
        }
        // Stall tripwire: packets parked in the network with no grant and no
        // delivery for two full windows means flow control has wedged.
        let occupancy: usize = self
            .routers
            .iter()
            .map(|r| r.buffered + r.out.iter().map(|o| o.queue.len()).sum::<usize>())
            .sum();
        let moved = self.delivered != self.tick_delivered || self.granted != self.tick_granted;
        if !moved && occupancy > 0 {
            self.stall_ticks += 1;
        } else {
            self.stall_ticks = 0;
        }
        if self.stall_ticks >= 2 {
            return Err(SimError::Deadlock {
                clock_ns: t,
                in_flight: self.generated - self.delivered,
            });
        }
        self.tick_delivered = self.delivered;
        self.tick_granted = self.granted;
        let next = t + self.cfg.window_ns;
        if next <= self.t_end {
            self.queue.schedule(next, Ev::Tick)?;
        }
        Ok(())
    }

    /// Conservation audits: every generated packet is in exactly one place,
    /// and every consumed credit is attributable to a packet or a pending
    /// credit return.
    fn audit(&self) -> Result<(), SimError> {
        for r in &self.routers {
            r.audit_bounds()?;
        }
        let p = self.topo.params().p;
        let k = self.topo.params().k();
        let vcs = self.cfg.vc_count();
        let idx = |r: RouterId, o: PortId, vc: usize| (r * k + o) * vcs + vc;
        let mut used = vec![0u32; self.routers.len() * k * vcs];

        let mut count = self.delivered;
        count += self.nodes.iter().map(|n| n.backlog.len() as u64).sum::<u64>();
        for rs in &self.routers {
            count += rs.buffered as u64;
            count += rs.out.iter().map(|o| o.queue.len() as u64).sum::<u64>();
            for (o, out) in rs.out.iter().enumerate().skip(p) {
                for pkt in &out.queue {
                    used[idx(rs.id, o, pkt.vc as usize)] += 1;
                }
            }
            for pkt in rs.iter_buffered() {
                if pkt.in_port >= p {
                    let (u, uo) = self.topo.neighbor_via_port(rs.id, pkt.in_port);
                    used[idx(u, uo, pkt.vc as usize)] += 1;
                }
            }
        }
        for (_, ev) in self.queue.iter() {
            match ev {
                Ev::Arrive { router, pkt } => {
                    count += 1;
                    if pkt.in_port >= p {
                        let (u, uo) = self.topo.neighbor_via_port(*router, pkt.in_port);
                        used[idx(u, uo, pkt.vc as usize)] += 1;
                    }
                }
                Ev::Deliver { .. } => count += 1,
                Ev::Credit { router, port, vc } => used[idx(*router, *port, *vc as usize)] += 1,
                _ => {}
            }
        }

        if count != self.generated {
            return Err(SimError::InvariantViolation(format!(
                "packet conservation: generated {} but accounted {} at t={}",
                self.generated,
                count,
                self.queue.clock()
            )));
        }
        for rs in &self.routers {
            for o in p..k {
                for vc in 0..vcs {
                    let expect = used[idx(rs.id, o, vc)] as usize;
                    let got = rs.used_credits(o, vc as u8);
                    if got != expect {
                        return Err(SimError::InvariantViolation(format!(
                            "credit conservation: router {} port {o} vc {vc} holds {got} used \
                             credits but {expect} are attributable",
                            rs.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs one configuration end to end.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, SimError> {
    Sim::new(cfg.clone())?.run()
}
