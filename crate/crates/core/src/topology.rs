//! All-to-all Dragonfly topology: identity arithmetic, deterministic wiring,
//! and minimal-path queries.
//!
//! Routers are numbered `group * a + local_index`, nodes `router * p + host_index`.
//! Ports on a router of radix `k = p + a - 1 + h` are laid out as
//! host `[0, p)`, local `[p, p + a - 1)`, global `[p + a - 1, k)`.

use std::fmt::Write as _;

use crate::error::SimError;

pub type RouterId = usize;
pub type NodeId = usize;
pub type GroupId = usize;
pub type PortId = usize;

/// The (p, a, h) parameterization of an all-to-all Dragonfly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DragonflyParams {
    /// Hosts per router.
    pub p: usize,
    /// Routers per group.
    pub a: usize,
    /// Global links per router.
    pub h: usize,
}

impl DragonflyParams {
    pub fn new(p: usize, a: usize, h: usize) -> Result<Self, SimError> {
        let params = Self { p, a, h };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.p < 1 || self.a < 2 || self.h < 1 {
            return Err(SimError::InvalidConfig(format!(
                "dragonfly params require p >= 1, a >= 2, h >= 1; got p={}, a={}, h={}",
                self.p, self.a, self.h
            )));
        }
        // All derived quantities must fit without overflow.
        let derived = (|| {
            let k = self.p.checked_add(self.a.checked_sub(1)?)?.checked_add(self.h)?;
            let g = self.a.checked_mul(self.h)?.checked_add(1)?;
            let m = g.checked_mul(self.a)?;
            let n = m.checked_mul(self.p)?;
            m.checked_mul(k)?; // neighbor-table size
            Some((k, g, m, n))
        })();
        if derived.is_none() {
            return Err(SimError::InvalidConfig(format!(
                "dragonfly params overflow usize: p={}, a={}, h={}",
                self.p, self.a, self.h
            )));
        }
        Ok(())
    }

    /// Ports per router: k = p + a - 1 + h.
    pub fn k(&self) -> usize {
        self.p + self.a - 1 + self.h
    }

    /// Number of groups: g = a*h + 1.
    pub fn g(&self) -> usize {
        self.a * self.h + 1
    }

    /// Routers in the system: m = g*a.
    pub fn m(&self) -> usize {
        self.g() * self.a
    }

    /// Nodes in the system: N = m*p.
    pub fn num_nodes(&self) -> usize {
        self.m() * self.p
    }

    /// True iff a = 2p = 2h, the load-balanced configuration.
    pub fn balanced(&self) -> bool {
        self.a == 2 * self.p && self.a == 2 * self.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortKind {
    Host,
    Local,
    Global,
}

/// Immutable wiring of an all-to-all Dragonfly. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct Topology {
    params: DragonflyParams,
    /// `neighbor[r * k + port]` = (peer router, peer port) for non-host ports.
    neighbor: Vec<(RouterId, PortId)>,
}

impl Topology {
    /// Builds the wiring. Each group is fully connected internally; every
    /// ordered pair of distinct groups shares exactly one bidirectional
    /// global link. In group G, local index i exposes global-link ordinal
    /// `l = i*h + q` on its q-th global port, connecting to group
    /// `(G + l + 1) mod g`; the far end sits at ordinal `a*h - 1 - l`.
    pub fn build(params: DragonflyParams) -> Result<Self, SimError> {
        params.validate()?;
        let (p, a, h) = (params.p, params.a, params.h);
        let k = params.k();
        let g = params.g();
        let m = params.m();
        let mut neighbor = vec![(usize::MAX, usize::MAX); m * k];

        for r in 0..m {
            let grp = r / a;
            let idx = r % a;
            // Local ports: slot s connects to group member j, skipping self.
            for s in 0..a - 1 {
                let j = if s < idx { s } else { s + 1 };
                let peer = grp * a + j;
                // Slot on the peer that points back at `idx`.
                let s_back = if idx < j { idx } else { idx - 1 };
                neighbor[r * k + p + s] = (peer, p + s_back);
            }
            // Global ports.
            for q in 0..h {
                let l = idx * h + q;
                let peer_grp = (grp + l + 1) % g;
                let l_far = a * h - 1 - l;
                let peer = peer_grp * a + l_far / h;
                let peer_port = p + a - 1 + l_far % h;
                neighbor[r * k + p + a - 1 + q] = (peer, peer_port);
            }
        }
        Ok(Self { params, neighbor })
    }

    pub fn params(&self) -> &DragonflyParams {
        &self.params
    }

    pub fn group_of(&self, r: RouterId) -> GroupId {
        r / self.params.a
    }

    pub fn router_of(&self, n: NodeId) -> RouterId {
        n / self.params.p
    }

    /// Host index of a node within its router; also the node's host port.
    pub fn host_index(&self, n: NodeId) -> usize {
        n % self.params.p
    }

    pub fn port_kind(&self, port: PortId) -> PortKind {
        let p = self.params.p;
        let a = self.params.a;
        if port < p {
            PortKind::Host
        } else if port < p + a - 1 {
            PortKind::Local
        } else {
            debug_assert!(port < self.params.k());
            PortKind::Global
        }
    }

    /// Peer (router, port) across a local or global link.
    pub fn neighbor_via_port(&self, r: RouterId, port: PortId) -> (RouterId, PortId) {
        debug_assert!(!matches!(self.port_kind(port), PortKind::Host));
        self.neighbor[r * self.params.k() + port]
    }

    /// Local port on `r` leading to `other` (same group, distinct routers).
    pub fn local_port_to(&self, r: RouterId, other: RouterId) -> PortId {
        let a = self.params.a;
        debug_assert_eq!(r / a, other / a);
        debug_assert_ne!(r, other);
        let idx = r % a;
        let j = other % a;
        let s = if j < idx { j } else { j - 1 };
        self.params.p + s
    }

    /// The router in `r`'s group holding the global link to `gdst`, and that
    /// link's port. Caller must not query the router's own group.
    pub fn gateway_to_group(&self, r: RouterId, gdst: GroupId) -> (RouterId, PortId) {
        let (a, h, g) = (self.params.a, self.params.h, self.params.g());
        let grp = self.group_of(r);
        assert_ne!(grp, gdst, "gateway_to_group queried for the router's own group");
        let l = (gdst + g - grp - 1) % g;
        debug_assert!(l < a * h);
        let gw = grp * a + l / h;
        let port = self.params.p + a - 1 + l % h;
        (gw, port)
    }

    /// Next output port on the unique minimal router-to-router path, or None
    /// when already at the destination router.
    pub fn next_hop_min(&self, at: RouterId, dst: RouterId) -> Option<PortId> {
        if at == dst {
            return None;
        }
        if self.group_of(at) == self.group_of(dst) {
            return Some(self.local_port_to(at, dst));
        }
        let (gw, gport) = self.gateway_to_group(at, self.group_of(dst));
        if at == gw {
            Some(gport)
        } else {
            Some(self.local_port_to(at, gw))
        }
    }

    /// Full minimal path as the ordered output ports taken at each router.
    pub fn minimal_path(&self, src: RouterId, dst: RouterId) -> Vec<PortId> {
        let mut path = Vec::with_capacity(3);
        let mut at = src;
        while let Some(port) = self.next_hop_min(at, dst) {
            path.push(port);
            at = self.neighbor_via_port(at, port).0;
        }
        debug_assert!(path.len() <= 3);
        path
    }

    pub fn min_hops(&self, src: RouterId, dst: RouterId) -> usize {
        if src == dst {
            0
        } else if self.group_of(src) == self.group_of(dst) {
            1
        } else {
            let (gw, gport) = self.gateway_to_group(src, self.group_of(dst));
            let (entry, _) = self.neighbor_via_port(gw, gport);
            1 + usize::from(src != gw) + usize::from(entry != dst)
        }
    }

    /// CSV dump (`router,port,kind,peer_router,peer_port`) for debugging and
    /// oracle cross-checks. Host ports list the attached node as the peer.
    pub fn dump_csv(&self) -> String {
        let mut out = String::from("router,port,kind,peer_router,peer_port\n");
        let k = self.params.k();
        for r in 0..self.params.m() {
            for port in 0..k {
                match self.port_kind(port) {
                    PortKind::Host => {
                        let node = r * self.params.p + port;
                        let _ = writeln!(out, "{r},{port},host,{node},0");
                    }
                    kind => {
                        let (pr, pp) = self.neighbor_via_port(r, port);
                        let tag = if matches!(kind, PortKind::Local) { "local" } else { "global" };
                        let _ = writeln!(out, "{r},{port},{tag},{pr},{pp}");
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::VecDeque;

    fn desk() -> Topology {
        Topology::build(DragonflyParams::new(2, 4, 2).unwrap()).unwrap()
    }

    #[test]
    fn table1_derived_quantities() {
        let sys1 = DragonflyParams::new(4, 8, 4).unwrap();
        assert_eq!(
            (sys1.k(), sys1.g(), sys1.m(), sys1.num_nodes()),
            (15, 33, 264, 1056)
        );
        assert!(sys1.balanced());
        let sys2 = DragonflyParams::new(5, 10, 5).unwrap();
        assert_eq!(
            (sys2.k(), sys2.g(), sys2.m(), sys2.num_nodes()),
            (19, 51, 510, 2550)
        );
        assert!(sys2.balanced());
        let desk = DragonflyParams::new(2, 4, 2).unwrap();
        assert_eq!(
            (desk.k(), desk.g(), desk.m(), desk.num_nodes()),
            (7, 9, 36, 72)
        );
        assert!(desk.balanced());
        assert!(!DragonflyParams::new(2, 5, 2).unwrap().balanced());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(DragonflyParams::new(0, 4, 2).is_err());
        assert!(DragonflyParams::new(2, 1, 2).is_err());
        assert!(DragonflyParams::new(2, 4, 0).is_err());
        assert!(DragonflyParams::new(usize::MAX / 2, 4, 2).is_err());
    }

    #[test]
    fn wiring_involution_all_ports() {
        let t = desk();
        let k = t.params().k();
        for r in 0..t.params().m() {
            for port in t.params().p..k {
                let (pr, pp) = t.neighbor_via_port(r, port);
                assert_eq!(t.neighbor_via_port(pr, pp), (r, port), "r={r} port={port}");
            }
        }
    }

    #[test]
    fn degree_and_port_partition() {
        let t = desk();
        let (p, a, h) = (t.params().p, t.params().a, t.params().h);
        let k = t.params().k();
        assert_eq!(k, p + (a - 1) + h);
        for r in 0..t.params().m() {
            let mut locals = 0;
            let mut globals = 0;
            for port in 0..k {
                match t.port_kind(port) {
                    PortKind::Host => {}
                    PortKind::Local => {
                        let (pr, _) = t.neighbor_via_port(r, port);
                        assert_eq!(t.group_of(pr), t.group_of(r));
                        assert_ne!(pr, r);
                        locals += 1;
                    }
                    PortKind::Global => {
                        let (pr, _) = t.neighbor_via_port(r, port);
                        assert_ne!(t.group_of(pr), t.group_of(r));
                        globals += 1;
                    }
                }
            }
            assert_eq!((locals, globals), (a - 1, h));
        }
    }

    #[test]
    fn each_group_pair_has_exactly_one_global_link() {
        let t = desk();
        let g = t.params().g();
        let mut count = vec![0usize; g * g];
        for r in 0..t.params().m() {
            for q in 0..t.params().h {
                let port = t.params().p + t.params().a - 1 + q;
                let (pr, _) = t.neighbor_via_port(r, port);
                count[t.group_of(r) * g + t.group_of(pr)] += 1;
            }
        }
        for ga in 0..g {
            for gb in 0..g {
                let expect = if ga == gb { 0 } else { 1 };
                assert_eq!(count[ga * g + gb], expect, "groups {ga}->{gb}");
            }
        }
    }

    #[test]
    fn gateway_lands_in_target_group_exhaustive() {
        let t = desk();
        for r in 0..t.params().m() {
            for gdst in 0..t.params().g() {
                if gdst == t.group_of(r) {
                    continue;
                }
                let (gw, port) = t.gateway_to_group(r, gdst);
                assert_eq!(t.group_of(gw), t.group_of(r));
                let (peer, _) = t.neighbor_via_port(gw, port);
                assert_eq!(t.group_of(peer), gdst);
            }
        }
    }

    #[test]
    fn gateway_group0_to_group1_is_ordinal_zero() {
        let t = desk();
        let (gw, port) = t.gateway_to_group(0, 1);
        // Ordinal l = 0: local index 0, first global port.
        assert_eq!(gw, 0);
        assert_eq!(port, t.params().p + t.params().a - 1);
    }

    /// Shortest hop counts under the minimal-routing rule: at most one
    /// global link per path. Raw shortest paths can chain two global links
    /// through a third group, but minimal routing never does.
    fn bfs_dist(t: &Topology, src: RouterId) -> Vec<usize> {
        let m = t.params().m();
        // State = (router, whether a global link was already taken).
        let mut dist = vec![[usize::MAX; 2]; m];
        dist[src][0] = 0;
        let mut q = VecDeque::from([(src, 0usize)]);
        while let Some((r, used)) = q.pop_front() {
            for port in t.params().p..t.params().k() {
                let global = matches!(t.port_kind(port), PortKind::Global);
                if global && used == 1 {
                    continue;
                }
                let next_used = used + usize::from(global);
                let (pr, _) = t.neighbor_via_port(r, port);
                if dist[pr][next_used] == usize::MAX {
                    dist[pr][next_used] = dist[r][used] + 1;
                    q.push_back((pr, next_used));
                }
            }
        }
        dist.iter().map(|d| d[0].min(d[1])).collect()
    }

    #[test]
    fn minimal_path_matches_bfs_oracle() {
        let t = desk();
        let m = t.params().m();
        for src in 0..m {
            let dist = bfs_dist(&t, src);
            for (dst, &d) in dist.iter().enumerate() {
                let path = t.minimal_path(src, dst);
                assert!(path.len() <= 3);
                assert_eq!(path.len(), d, "src={src} dst={dst}");
                assert_eq!(path.len(), t.min_hops(src, dst));
                // Walk the path and confirm it terminates at dst.
                let mut at = src;
                for &port in &path {
                    at = t.neighbor_via_port(at, port).0;
                }
                assert_eq!(at, dst);
            }
        }
    }

    #[test]
    fn minimal_path_trivial_cases() {
        let t = desk();
        assert!(t.minimal_path(5, 5).is_empty());
        // Same group, different router: exactly one local hop.
        let path = t.minimal_path(4, 6);
        assert_eq!(path.len(), 1);
        assert!(matches!(t.port_kind(path[0]), PortKind::Local));
    }

    #[test]
    fn balanced_two_level_rows_are_half_of_routers() {
        let params = DragonflyParams::new(4, 8, 4).unwrap();
        assert!(params.balanced());
        assert_eq!(params.g() * params.p * 2, params.m());
    }

    #[test]
    fn topology_csv_roundtrip_shape() {
        let t = desk();
        let dump = t.dump_csv();
        let lines: Vec<&str> = dump.trim_end().lines().collect();
        assert_eq!(lines.len(), 1 + t.params().m() * t.params().k());
        assert_eq!(lines[0], "router,port,kind,peer_router,peer_port");
    }
}
