//! Input-output-queued router state: per-VC input buffers, credit counters
//! toward downstream routers, output serialization queues, and the
//! round-robin arbitration bookkeeping.

use std::collections::VecDeque;

use crate::engine::Time;
use crate::error::SimError;
use crate::topology::{GroupId, NodeId, PortId, RouterId};

/// Routing-algorithm phase carried by a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// No commitment yet (fresh packet) or none needed (MIN, Q-family).
    None,
    /// Valiant-global waypoint: reach any router of this group first.
    ToGroup(GroupId),
    /// Valiant-node waypoint: reach this router first.
    ToRouter(RouterId),
    /// PAR committed minimal, revocable by source-group routers.
    ParMinimal,
    /// Committed minimal to the destination; no further re-evaluation.
    Final,
}

/// First-intermediate-group rerouting state (Q-adaptive rule 3).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntGroupFlag {
    NotYet,
    /// Crossed a global link into a non-destination group; the next routing
    /// decision at this router is the one-time rule-3 decision.
    Pending,
    Consumed,
}

/// One 128 B single-flit packet in flight.
#[derive(Debug, Clone)]
pub struct Packet {
    pub id: u64,
    pub src_node: NodeId,
    pub dst_node: NodeId,
    pub gen_ns: Time,
    /// Router-to-router hops taken so far.
    pub hops: u8,
    /// VC on the link it last traversed (vc = hops - 1; 0 on the host link).
    pub vc: u8,
    /// Arrival time at the current router.
    pub arrival_ns: Time,
    /// Arrival time at the upstream router (reward baseline).
    pub prev_arrival_ns: Time,
    /// Input port at the current router (a host port right after injection).
    pub in_port: PortId,
    pub phase: Phase,
    pub int_group: IntGroupFlag,
    /// Output port decided at this router; cleared on departure.
    pub decided_port: Option<PortId>,
    /// Output ports taken so far; populated only when packet tracing is on.
    pub trace: Option<Vec<PortId>>,
}

/// Output port: at most one packet serializes at a time; granted packets
/// wait in FIFO order (credits were consumed at grant time).
#[derive(Debug, Default)]
pub struct OutputPort {
    pub queue: VecDeque<Packet>,
    pub serializing: bool,
}

pub struct RouterState {
    pub id: RouterId,
    k: usize,
    p: usize,
    vcs: usize,
    vc_capacity: usize,
    /// Input buffers, indexed in_port * vcs + vc.
    in_buf: Vec<VecDeque<Packet>>,
    /// Credits toward the downstream buffer, indexed out_port * vcs + vc.
    /// Host out ports model infinite ejection capacity and have no credits.
    credits: Vec<u32>,
    pub out: Vec<OutputPort>,
    /// Per-output FIFO of input slots whose head requests that output.
    requests: Vec<VecDeque<u32>>,
    /// Number of packets held in input buffers.
    pub buffered: usize,
    /// Coalescing flag for TryForward events.
    pub tf_pending: bool,
}

impl RouterState {
    pub fn new(id: RouterId, k: usize, p: usize, vcs: usize, vc_capacity: usize) -> Self {
        Self {
            id,
            k,
            p,
            vcs,
            vc_capacity,
            in_buf: (0..k * vcs).map(|_| VecDeque::new()).collect(),
            credits: vec![vc_capacity as u32; k * vcs],
            out: (0..k).map(|_| OutputPort::default()).collect(),
            requests: (0..k).map(|_| VecDeque::new()).collect(),
            buffered: 0,
            tf_pending: false,
        }
    }

    #[inline]
    pub fn slot(&self, in_port: PortId, vc: u8) -> usize {
        in_port * self.vcs + vc as usize
    }

    pub fn slot_buffer(&self, slot: usize) -> &VecDeque<Packet> {
        &self.in_buf[slot]
    }

    pub fn head(&self, slot: usize) -> Option<&Packet> {
        self.in_buf[slot].front()
    }

    pub fn head_mut(&mut self, slot: usize) -> Option<&mut Packet> {
        self.in_buf[slot].front_mut()
    }

    /// Enqueues an arrived packet. Returns true when the packet became the
    /// head of its VC queue (and therefore needs a routing decision).
    pub fn enqueue(&mut self, pkt: Packet) -> Result<bool, SimError> {
        let slot = self.slot(pkt.in_port, pkt.vc);
        if self.in_buf[slot].len() >= self.vc_capacity {
            return Err(SimError::InvariantViolation(format!(
                "router {}: input buffer overflow on port {} vc {} (credit protocol bug)",
                self.id, pkt.in_port, pkt.vc
            )));
        }
        self.in_buf[slot].push_back(pkt);
        self.buffered += 1;
        Ok(self.in_buf[slot].len() == 1)
    }

    /// Registers the head of `slot` as a requester of `out_port`.
    pub fn push_request(&mut self, out_port: PortId, slot: usize) {
        self.requests[out_port].push_back(slot as u32);
    }

    /// Grants the head of `slot` onto `out_port` with downstream VC `vc`:
    /// consumes one credit and moves the packet to the output queue.
    pub fn grant(&mut self, slot: usize, out_port: PortId, vc: u8) -> Packet {
        let pkt = self.in_buf[slot].pop_front().expect("grant on empty slot");
        self.buffered -= 1;
        if out_port >= self.p {
            let c = &mut self.credits[out_port * self.vcs + vc as usize];
            debug_assert!(*c > 0, "grant without credit");
            *c -= 1;
        }
        pkt
    }

    #[inline]
    pub fn credit_available(&self, out_port: PortId, vc: u8) -> bool {
        out_port < self.p || self.credits[out_port * self.vcs + vc as usize] > 0
    }

    pub fn return_credit(&mut self, out_port: PortId, vc: u8) -> Result<(), SimError> {
        let c = &mut self.credits[out_port * self.vcs + vc as usize];
        if *c as usize >= self.vc_capacity {
            return Err(SimError::InvariantViolation(format!(
                "router {}: credit overflow on port {out_port} vc {vc}",
                self.id
            )));
        }
        *c += 1;
        Ok(())
    }

    pub fn used_credits(&self, out_port: PortId, vc: u8) -> usize {
        self.vc_capacity - self.credits[out_port * self.vcs + vc as usize] as usize
    }

    /// Congestion estimate for a non-host port: local output queue occupancy
    /// plus the used credit count summed over VCs.
    pub fn congestion_estimate(&self, port: PortId) -> usize {
        debug_assert!(port >= self.p);
        let out = &self.out[port];
        let queued = out.queue.len() + usize::from(out.serializing);
        let used: usize = (0..self.vcs)
            .map(|vc| self.vc_capacity - self.credits[port * self.vcs + vc] as usize)
            .sum();
        queued + used
    }

    /// One arbitration round for `out_port`: scans its requester FIFO and
    /// grants the first head with downstream credit. Served slots re-enter
    /// at the back when their next head is decided, which yields round-robin
    /// service among persistent contenders. Returns the granted slot.
    pub fn arbitrate(&mut self, out_port: PortId) -> Option<usize> {
        let n = self.requests[out_port].len();
        for _ in 0..n {
            let slot = self.requests[out_port].pop_front()? as usize;
            let head = match self.in_buf[slot].front() {
                Some(p) => p,
                None => continue, // stale entry
            };
            debug_assert_eq!(head.decided_port, Some(out_port));
            let vc = head.hops; // next-link VC = hop index
            if self.credit_available(out_port, vc) {
                return Some(slot);
            }
            self.requests[out_port].push_back(slot as u32);
        }
        None
    }

    pub fn vcs(&self) -> usize {
        self.vcs
    }

    pub fn vc_capacity(&self) -> usize {
        self.vc_capacity
    }

    pub fn ports(&self) -> usize {
        self.k
    }

    pub fn host_ports(&self) -> usize {
        self.p
    }

    /// Buffer/credit bound audit; conservation across links is checked at
    /// the simulation level.
    pub fn audit_bounds(&self) -> Result<(), SimError> {
        for (slot, buf) in self.in_buf.iter().enumerate() {
            if buf.len() > self.vc_capacity {
                return Err(SimError::InvariantViolation(format!(
                    "router {}: buffer occupancy {} exceeds capacity {} at slot {slot}",
                    self.id,
                    buf.len(),
                    self.vc_capacity
                )));
            }
        }
        for (i, &c) in self.credits.iter().enumerate() {
            if c as usize > self.vc_capacity {
                return Err(SimError::InvariantViolation(format!(
                    "router {}: credit count {c} exceeds capacity at index {i}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Iterates all buffered input packets (audit support).
    pub fn iter_buffered(&self) -> impl Iterator<Item = &Packet> {
        self.in_buf.iter().flat_map(|q| q.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(in_port: PortId, vc: u8, hops: u8) -> Packet {
        Packet {
            id: 0,
            src_node: 0,
            dst_node: 1,
            gen_ns: 0,
            hops,
            vc,
            arrival_ns: 0,
            prev_arrival_ns: 0,
            in_port,
            phase: Phase::None,
            int_group: IntGroupFlag::NotYet,
            decided_port: None,
            trace: None,
        }
    }

    #[test]
    fn enqueue_reports_new_head_and_overflows_at_capacity() {
        let mut r = RouterState::new(0, 7, 2, 3, 2);
        assert!(r.enqueue(packet(2, 0, 0)).unwrap());
        assert!(!r.enqueue(packet(2, 0, 0)).unwrap());
        assert!(r.enqueue(packet(2, 0, 0)).is_err());
        assert!(r.enqueue(packet(2, 1, 1)).unwrap());
        assert_eq!(r.buffered, 3);
    }

    #[test]
    fn congestion_estimate_sums_queue_and_used_credits() {
        let mut r = RouterState::new(0, 7, 2, 3, 20);
        assert_eq!(r.congestion_estimate(3), 0);
        // Queue 5 packets for port 3 and consume 3 credits.
        for _ in 0..5 {
            r.out[3].queue.push_back(packet(2, 0, 0));
        }
        for _ in 0..3 {
            let mut p = packet(2, 0, 0);
            p.decided_port = Some(3);
            let slot = r.slot(2, 0);
            r.enqueue(p).unwrap();
            r.grant(slot, 3, 0);
        }
        assert_eq!(r.congestion_estimate(3), 8);
    }

    #[test]
    fn arbitration_round_robin_alternates_between_contenders() {
        let mut r = RouterState::new(0, 7, 2, 3, 20);
        let (a, b) = (r.slot(2, 0), r.slot(4, 0));
        for _ in 0..3 {
            let mut p = packet(2, 0, 0);
            p.decided_port = Some(5);
            if r.enqueue(p).unwrap() {
                r.push_request(5, a);
            }
            let mut p = packet(4, 0, 0);
            p.decided_port = Some(5);
            if r.enqueue(p).unwrap() {
                r.push_request(5, b);
            }
        }
        let mut grants = Vec::new();
        for _ in 0..6 {
            let slot = r.arbitrate(5).unwrap();
            r.grant(slot, 5, 0);
            grants.push(slot);
            let has_next = r
                .head_mut(slot)
                .map(|next| next.decided_port = Some(5))
                .is_some();
            if has_next {
                r.push_request(5, slot);
            }
        }
        assert_eq!(grants, vec![a, b, a, b, a, b]);
        assert!(r.arbitrate(5).is_none());
        // Credits: 6 grants consumed 6 credits on (5, vc 0).
        assert_eq!(r.used_credits(5, 0), 6);
    }

    #[test]
    fn blocked_without_credit_until_return() {
        let mut r = RouterState::new(0, 7, 2, 3, 1);
        let mut p = packet(2, 0, 0);
        p.decided_port = Some(5);
        let slot = r.slot(2, 0);
        r.enqueue(p).unwrap();
        r.push_request(5, slot);
        let got = r.arbitrate(5).unwrap();
        r.grant(got, 5, 0);
        // Second packet finds zero credits.
        let mut p = packet(2, 0, 0);
        p.decided_port = Some(5);
        r.enqueue(p).unwrap();
        r.push_request(5, slot);
        assert!(r.arbitrate(5).is_none());
        r.return_credit(5, 0).unwrap();
        assert_eq!(r.arbitrate(5), Some(slot));
        // Credit overflow is a protocol violation.
        r.grant(slot, 5, 0);
        r.return_credit(5, 0).unwrap();
        assert!(r.return_credit(5, 0).is_err());
    }
}
