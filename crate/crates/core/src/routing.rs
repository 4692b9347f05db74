//! Per-hop output-port selection for every routing algorithm. Decisions are
//! pure with respect to the simulator: they read topology, local router
//! state and the local Q-table, and report the chosen port plus the packet's
//! next phase.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::Algo;
use crate::qlearn::{select_temp_port, QHyperParams, QTable};
use crate::router::{IntGroupFlag, Packet, Phase, RouterState};
use crate::topology::{GroupId, PortId, RouterId, Topology};

pub struct RoutingCtx<'a> {
    pub topo: &'a Topology,
    pub algo: Algo,
    pub hp: &'a QHyperParams,
    pub ugal_bias: f64,
    pub maxq: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub port: PortId,
    pub phase: Phase,
    /// The one-shot intermediate-group decision was taken at this router.
    pub consume_int: bool,
}

impl Decision {
    fn minimal(port: PortId, phase: Phase) -> Self {
        Self { port, phase, consume_int: false }
    }
}

/// UGAL commit rule: minimal wins iff q_min < 2 * q_nm + bias (strict).
pub fn ugal_prefers_minimal(q_min: usize, q_nm: usize, bias: f64) -> bool {
    (q_min as f64) < 2.0 * q_nm as f64 + bias
}

/// First port of the minimal route from `at` toward `dst` (panics at dst).
fn min_port(topo: &Topology, at: RouterId, dst: RouterId) -> PortId {
    topo.next_hop_min(at, dst).expect("minimal decision at destination router")
}

/// First port of the minimal route from `at` toward any router of `gdst`.
fn port_toward_group(topo: &Topology, at: RouterId, gdst: GroupId) -> PortId {
    debug_assert_ne!(topo.group_of(at), gdst);
    let (gw, gport) = topo.gateway_to_group(at, gdst);
    if gw == at {
        gport
    } else {
        topo.local_port_to(at, gw)
    }
}

/// Draws an element of [0, n) distinct from every entry of `except`.
/// Caller guarantees at least one such element exists.
fn draw_excluding(rng: &mut ChaCha8Rng, n: usize, except: &[usize]) -> usize {
    loop {
        let x = rng.gen_range(0..n);
        if !except.contains(&x) {
            return x;
        }
    }
}

/// Uniform random intermediate group avoiding src and dst groups, or None
/// when no such group exists.
fn draw_group(rng: &mut ChaCha8Rng, topo: &Topology, gsrc: GroupId, gdst: GroupId) -> Option<GroupId> {
    let g = topo.params().g();
    let distinct = 1 + usize::from(gsrc != gdst);
    if g <= distinct {
        return None;
    }
    Some(draw_excluding(rng, g, &[gsrc, gdst]))
}

/// Uniform random intermediate router outside the src and dst groups.
fn draw_router(rng: &mut ChaCha8Rng, topo: &Topology, gsrc: GroupId, gdst: GroupId) -> Option<RouterId> {
    let a = topo.params().a;
    draw_group(rng, topo, gsrc, gdst).map(|grp| grp * a + rng.gen_range(0..a))
}

pub fn decide(
    ctx: &RoutingCtx,
    state: &RouterState,
    qtable: Option<&QTable>,
    routing_rng: &mut ChaCha8Rng,
    val_rng: &mut ChaCha8Rng,
    pkt: &Packet,
) -> Decision {
    let topo = ctx.topo;
    let here = state.id;
    let dst_router = topo.router_of(pkt.dst_node);
    debug_assert_ne!(here, dst_router, "decide called at destination router");
    let gsrc = topo.group_of(topo.router_of(pkt.src_node));
    let gdst = topo.group_of(dst_router);
    let at_source = pkt.hops == 0 && here == topo.router_of(pkt.src_node);

    // Committed phases are algorithm-independent: head for the waypoint,
    // then fall through to minimal routing.
    match pkt.phase {
        Phase::ToGroup(grp) => {
            if topo.group_of(here) != grp {
                return Decision::minimal(port_toward_group(topo, here, grp), pkt.phase);
            }
            return Decision::minimal(min_port(topo, here, dst_router), Phase::Final);
        }
        Phase::ToRouter(r) => {
            if here != r {
                return Decision::minimal(min_port(topo, here, r), pkt.phase);
            }
            return Decision::minimal(min_port(topo, here, dst_router), Phase::Final);
        }
        Phase::Final => {
            return Decision::minimal(min_port(topo, here, dst_router), Phase::Final);
        }
        Phase::ParMinimal if ctx.algo == Algo::Par => {
            if topo.group_of(here) == gsrc {
                return decide_par(ctx, state, routing_rng, here, dst_router, gsrc, gdst);
            }
            return Decision::minimal(min_port(topo, here, dst_router), Phase::Final);
        }
        Phase::ParMinimal | Phase::None => {}
    }

    match ctx.algo {
        Algo::Min => Decision::minimal(min_port(topo, here, dst_router), Phase::None),
        Algo::Valg => {
            debug_assert!(at_source);
            match draw_group(val_rng, topo, gsrc, gdst) {
                Some(grp) => {
                    Decision::minimal(port_toward_group(topo, here, grp), Phase::ToGroup(grp))
                }
                None => Decision::minimal(min_port(topo, here, dst_router), Phase::Final),
            }
        }
        Algo::Valn => {
            debug_assert!(at_source);
            match draw_router(val_rng, topo, gsrc, gdst) {
                Some(r) => Decision::minimal(min_port(topo, here, r), Phase::ToRouter(r)),
                None => Decision::minimal(min_port(topo, here, dst_router), Phase::Final),
            }
        }
        Algo::Ugalg => {
            debug_assert!(at_source);
            let mp = min_port(topo, here, dst_router);
            let q_min = state.congestion_estimate(mp);
            let mut cand: Option<(usize, GroupId, PortId)> = None;
            for _ in 0..2 {
                if let Some(grp) = draw_group(routing_rng, topo, gsrc, gdst) {
                    let port = port_toward_group(topo, here, grp);
                    let q = state.congestion_estimate(port);
                    if cand.is_none_or(|(best, _, _)| q < best) {
                        cand = Some((q, grp, port));
                    }
                }
            }
            match cand {
                Some((q_nm, grp, port)) if !ugal_prefers_minimal(q_min, q_nm, ctx.ugal_bias) => {
                    Decision::minimal(port, Phase::ToGroup(grp))
                }
                _ => Decision::minimal(mp, Phase::Final),
            }
        }
        Algo::Ugaln => {
            debug_assert!(at_source);
            let mp = min_port(topo, here, dst_router);
            let q_min = state.congestion_estimate(mp);
            match best_router_candidate(ctx, state, routing_rng, here, gsrc, gdst) {
                Some((q_nm, r, port)) if !ugal_prefers_minimal(q_min, q_nm, ctx.ugal_bias) => {
                    Decision::minimal(port, Phase::ToRouter(r))
                }
                _ => Decision::minimal(mp, Phase::Final),
            }
        }
        Algo::Par => decide_par(ctx, state, routing_rng, here, dst_router, gsrc, gdst),
        Algo::Qrouting => decide_qrouting(ctx, state, qtable.expect("q-table"), routing_rng, pkt, dst_router),
        Algo::Qadaptive => {
            decide_qadaptive(ctx, state, qtable.expect("q-table"), routing_rng, pkt, dst_router, at_source)
        }
    }
}

/// Best of two independent intermediate-router draws, by congestion of the
/// first port toward the candidate.
fn best_router_candidate(
    ctx: &RoutingCtx,
    state: &RouterState,
    rng: &mut ChaCha8Rng,
    here: RouterId,
    gsrc: GroupId,
    gdst: GroupId,
) -> Option<(usize, RouterId, PortId)> {
    let mut cand: Option<(usize, RouterId, PortId)> = None;
    for _ in 0..2 {
        if let Some(r) = draw_router(rng, ctx.topo, gsrc, gdst) {
            let port = min_port(ctx.topo, here, r);
            let q = state.congestion_estimate(port);
            if cand.is_none_or(|(best, _, _)| q < best) {
                cand = Some((q, r, port));
            }
        }
    }
    cand
}

/// PAR decision, taken at the source router and re-taken at every later
/// router of the source group while the packet is still minimally routed.
fn decide_par(
    ctx: &RoutingCtx,
    state: &RouterState,
    routing_rng: &mut ChaCha8Rng,
    here: RouterId,
    dst_router: RouterId,
    gsrc: GroupId,
    gdst: GroupId,
) -> Decision {
    let mp = min_port(ctx.topo, here, dst_router);
    let q_min = state.congestion_estimate(mp);
    match best_router_candidate(ctx, state, routing_rng, here, gsrc, gdst) {
        Some((q_nm, r, port)) if !ugal_prefers_minimal(q_min, q_nm, ctx.ugal_bias) => {
            Decision::minimal(port, Phase::ToRouter(r))
        }
        _ => Decision::minimal(mp, Phase::ParMinimal),
    }
}

fn decide_qrouting(
    ctx: &RoutingCtx,
    state: &RouterState,
    qtable: &QTable,
    rng: &mut ChaCha8Rng,
    pkt: &Packet,
    dst_router: RouterId,
) -> Decision {
    let p = ctx.topo.params().p;
    if pkt.hops as usize >= ctx.maxq {
        return Decision::minimal(min_port(ctx.topo, state.id, dst_router), Phase::None);
    }
    let (best_col, _) = qtable.argmin_row(dst_router);
    let port = if rng.gen::<f64>() < ctx.hp.epsilon {
        p + rng.gen_range(0..state.ports() - p)
    } else {
        p + best_col
    };
    Decision::minimal(port, Phase::None)
}

fn decide_qadaptive(
    ctx: &RoutingCtx,
    state: &RouterState,
    qtable: &QTable,
    rng: &mut ChaCha8Rng,
    pkt: &Packet,
    dst_router: RouterId,
    at_source: bool,
) -> Decision {
    let topo = ctx.topo;
    let params = topo.params();
    let (p, a) = (params.p, params.a);
    let here = state.id;
    let gdst = topo.group_of(dst_router);

    // Rule 1: inside the destination group the minimal path is one local hop.
    if topo.group_of(here) == gdst {
        return Decision::minimal(min_port(topo, here, dst_router), Phase::None);
    }

    let row = gdst * p + topo.host_index(pkt.src_node);

    // Rule 2: full-table decision at the source router.
    if at_source {
        let (best_col, q_best) = qtable.argmin_row(row);
        let mp = min_port(topo, here, dst_router);
        let q_min = qtable.get(row, mp - p);
        let temp = select_temp_port(q_min, q_best, mp, best_col + p, ctx.hp.q_thld1);
        let port = if rng.gen::<f64>() < ctx.hp.epsilon {
            p + rng.gen_range(0..state.ports() - p)
        } else {
            temp
        };
        return Decision::minimal(port, Phase::None);
    }

    // Rule 3: one-shot rerouting at the first intermediate-group router.
    if pkt.int_group == IntGroupFlag::Pending {
        let (gw, gport) = topo.gateway_to_group(here, gdst);
        let port = if gw == here {
            gport
        } else {
            let mp = topo.local_port_to(here, gw);
            let others: Vec<PortId> =
                (p..p + a - 1).filter(|&l| l != mp && l != pkt.in_port).collect();
            let temp = match others.as_slice() {
                [] => mp,
                alts => {
                    let alt = alts[rng.gen_range(0..alts.len())];
                    let q_min = qtable.get(row, mp - p);
                    let q_alt = qtable.get(row, alt - p);
                    select_temp_port(q_min, q_alt, mp, alt, ctx.hp.q_thld2)
                }
            };
            if rng.gen::<f64>() < ctx.hp.epsilon {
                p + rng.gen_range(0..a - 1)
            } else {
                temp
            }
        };
        return Decision { port, phase: Phase::None, consume_int: true };
    }

    // Rule 4: minimal everywhere else.
    Decision::minimal(min_port(topo, here, dst_router), Phase::None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Timing;
    use crate::engine::{rng_stream, StreamId};
    use crate::qlearn::init_two_level;
    use crate::topology::DragonflyParams;

    fn desk() -> Topology {
        Topology::build(DragonflyParams::new(2, 4, 2).unwrap()).unwrap()
    }

    fn ctx<'a>(topo: &'a Topology, algo: Algo, hp: &'a QHyperParams) -> RoutingCtx<'a> {
        RoutingCtx { topo, algo, hp, ugal_bias: 0.0, maxq: 6 }
    }

    fn fresh_packet(topo: &Topology, src: usize, dst: usize) -> Packet {
        Packet {
            id: 0,
            src_node: src,
            dst_node: dst,
            gen_ns: 0,
            hops: 0,
            vc: 0,
            arrival_ns: 0,
            prev_arrival_ns: 0,
            in_port: topo.host_index(src),
            phase: Phase::None,
            int_group: IntGroupFlag::NotYet,
            decided_port: None,
            trace: None,
        }
    }

    fn rngs() -> (ChaCha8Rng, ChaCha8Rng) {
        (rng_stream(7, StreamId::Routing), rng_stream(7, StreamId::ValIntermediate))
    }

    #[test]
    fn ugal_rule_hand_cases() {
        assert!(!ugal_prefers_minimal(0, 0, 0.0)); // empty net goes non-minimal
        assert!(ugal_prefers_minimal(3, 2, 0.0)); // 3 < 4
        assert!(!ugal_prefers_minimal(8, 3, 0.0)); // 8 < 6 fails
        assert!(ugal_prefers_minimal(0, 0, 1.0)); // bias rescues the empty net
    }

    #[test]
    fn min_follows_minimal_path_port_by_port() {
        let topo = desk();
        let hp = QHyperParams::default();
        let c = ctx(&topo, Algo::Min, &hp);
        let (mut r1, mut r2) = rngs();
        // Node 0 (router 0, group 0) to a node in group 5.
        let dst = 5 * 4 * 2 + 3; // router 21
        let path = topo.minimal_path(0, topo.router_of(dst));
        let mut pkt = fresh_packet(&topo, 0, dst);
        let mut at = 0;
        for (i, &expect) in path.iter().enumerate() {
            let state = RouterState::new(at, topo.params().k(), 2, 3, 20);
            let d = decide(&c, &state, None, &mut r1, &mut r2, &pkt);
            assert_eq!(d.port, expect);
            let (next, in_port) = topo.neighbor_via_port(at, d.port);
            pkt.hops = (i + 1) as u8;
            pkt.in_port = in_port;
            at = next;
        }
        assert_eq!(at, topo.router_of(dst));
    }

    #[test]
    fn valg_waypoint_distribution_and_hop_cap() {
        let topo = desk();
        let hp = QHyperParams::default();
        let c = ctx(&topo, Algo::Valg, &hp);
        let (mut r1, mut r2) = rngs();
        let g = topo.params().g();
        let mut seen = vec![0usize; g];
        for trial in 0..4000 {
            let src = trial % 8; // group 0
            let dst = topo.params().num_nodes() - 1 - (trial % 8); // group 8
            let mut pkt = fresh_packet(&topo, src, dst);
            let state = RouterState::new(topo.router_of(src), topo.params().k(), 2, 3, 20);
            let d = decide(&c, &state, None, &mut r1, &mut r2, &pkt);
            let Phase::ToGroup(grp) = d.phase else {
                panic!("valg must commit a waypoint group")
            };
            assert_ne!(grp, 0);
            assert_ne!(grp, 8);
            seen[grp] += 1;
            // Walk to delivery counting hops.
            pkt.phase = d.phase;
            let mut at = topo.router_of(src);
            let mut port = d.port;
            let mut hops = 0;
            while {
                let (next, in_port) = topo.neighbor_via_port(at, port);
                hops += 1;
                at = next;
                pkt.in_port = in_port;
                pkt.hops = hops;
                at != topo.router_of(dst)
            } {
                let state = RouterState::new(at, topo.params().k(), 2, 3, 20);
                let d = decide(&c, &state, None, &mut r1, &mut r2, &pkt);
                pkt.phase = d.phase;
                port = d.port;
                assert!(hops < 5, "valg exceeded hop cap");
            }
            assert!(hops <= 5);
        }
        // Every eligible group drawn roughly uniformly (4000 / 7 each).
        for (grp, &n) in seen.iter().enumerate().take(8).skip(1) {
            assert!(n > 400, "group {grp} drawn {n} times");
        }
        assert_eq!(seen[0] + seen[8], 0);
    }

    #[test]
    fn valn_routes_via_waypoint_router_within_six_hops() {
        let topo = desk();
        let hp = QHyperParams::default();
        let c = ctx(&topo, Algo::Valn, &hp);
        let (mut r1, mut r2) = rngs();
        for trial in 0..2000 {
            let src = trial % 8;
            let dst = 64 + (trial % 8); // group 8
            let mut pkt = fresh_packet(&topo, src, dst);
            let state = RouterState::new(topo.router_of(src), topo.params().k(), 2, 3, 20);
            let d = decide(&c, &state, None, &mut r1, &mut r2, &pkt);
            let Phase::ToRouter(w) = d.phase else {
                panic!("valn must commit a waypoint router")
            };
            assert!(topo.group_of(w) != 0 && topo.group_of(w) != 8);
            let mut at = topo.router_of(src);
            let mut port = d.port;
            let mut hops = 0;
            let mut via_waypoint = false;
            pkt.phase = d.phase;
            loop {
                let (next, in_port) = topo.neighbor_via_port(at, port);
                hops += 1;
                at = next;
                via_waypoint |= at == w;
                if at == topo.router_of(dst) {
                    break;
                }
                pkt.in_port = in_port;
                pkt.hops = hops;
                let state = RouterState::new(at, topo.params().k(), 2, 3, 20);
                let d = decide(&c, &state, None, &mut r1, &mut r2, &pkt);
                pkt.phase = d.phase;
                port = d.port;
                assert!(hops < 6, "valn exceeded hop cap");
            }
            assert!(hops <= 6);
            assert!(via_waypoint, "path must pass through the waypoint router");
        }
    }

    #[test]
    fn ugal_empty_network_goes_nonminimal_and_bias_flips_it() {
        let topo = desk();
        let hp = QHyperParams::default();
        let (mut r1, mut r2) = rngs();
        let pkt = fresh_packet(&topo, 0, 64);
        let state = RouterState::new(0, topo.params().k(), 2, 3, 20);
        let c = ctx(&topo, Algo::Ugalg, &hp);
        let d = decide(&c, &state, None, &mut r1, &mut r2, &pkt);
        assert!(matches!(d.phase, Phase::ToGroup(_)));
        let biased = RoutingCtx { ugal_bias: 1.0, ..ctx(&topo, Algo::Ugalg, &hp) };
        let d = decide(&biased, &state, None, &mut r1, &mut r2, &pkt);
        assert_eq!(d.phase, Phase::Final);
        assert_eq!(d.port, topo.minimal_path(0, topo.router_of(64))[0]);
    }

    #[test]
    fn ugal_congested_minimal_port_diverts() {
        let topo = desk();
        let hp = QHyperParams::default();
        let c = ctx(&topo, Algo::Ugaln, &hp);
        let (mut r1, mut r2) = rngs();
        let pkt = fresh_packet(&topo, 0, 64);
        let mut state = RouterState::new(0, topo.params().k(), 2, 3, 20);
        let mp = topo.minimal_path(0, topo.router_of(64))[0];
        for _ in 0..10 {
            state.out[mp].queue.push_back(fresh_packet(&topo, 0, 64));
        }
        let d = decide(&c, &state, None, &mut r1, &mut r2, &pkt);
        assert!(matches!(d.phase, Phase::ToRouter(_)));
        assert_ne!(d.port, mp);
    }

    #[test]
    fn par_reroutes_at_gateway_but_not_after_leaving_source_group() {
        let topo = desk();
        let hp = QHyperParams::default();
        let c = ctx(&topo, Algo::Par, &hp);
        let (mut r1, mut r2) = rngs();
        // Source router 0 commits minimal under a heavy bias.
        let biased = RoutingCtx { ugal_bias: 100.0, ..ctx(&topo, Algo::Par, &hp) };
        let dst = 64;
        let pkt = fresh_packet(&topo, 0, dst);
        let state = RouterState::new(0, topo.params().k(), 2, 3, 20);
        let d = decide(&biased, &state, None, &mut r1, &mut r2, &pkt);
        assert_eq!(d.phase, Phase::ParMinimal);

        // At the source-group gateway the congested minimal port diverts.
        let (gw, gport) = topo.gateway_to_group(0, 8);
        let mut pkt2 = fresh_packet(&topo, 0, dst);
        pkt2.phase = Phase::ParMinimal;
        pkt2.hops = 1;
        let mut gw_state = RouterState::new(gw, topo.params().k(), 2, 3, 20);
        for _ in 0..10 {
            gw_state.out[gport].queue.push_back(fresh_packet(&topo, 0, dst));
        }
        let d = decide(&c, &gw_state, None, &mut r1, &mut r2, &pkt2);
        assert!(matches!(d.phase, Phase::ToRouter(_)));

        // Outside the source group ParMinimal hardens to Final even under
        // congestion.
        let mut pkt3 = fresh_packet(&topo, 0, dst);
        pkt3.phase = Phase::ParMinimal;
        pkt3.hops = 2;
        let far = 4 * 4; // a router of group 4
        let mut far_state = RouterState::new(far, topo.params().k(), 2, 3, 20);
        let far_mp = topo.minimal_path(far, topo.router_of(dst))[0];
        for _ in 0..10 {
            far_state.out[far_mp].queue.push_back(fresh_packet(&topo, 0, dst));
        }
        let d = decide(&c, &far_state, None, &mut r1, &mut r2, &pkt3);
        assert_eq!(d.phase, Phase::Final);
        assert_eq!(d.port, far_mp);
    }

    #[test]
    fn qadaptive_zero_congestion_follows_minimal() {
        let topo = desk();
        let timing = Timing::default();
        let hp = QHyperParams { epsilon: 0.0, ..QHyperParams::default() };
        let c = ctx(&topo, Algo::Qadaptive, &hp);
        let (mut r1, mut r2) = rngs();
        // With the zero-load-initialized table and no congestion, every
        // source-router decision matches the minimal path.
        for dst in [17_usize, 40, 63, 71] {
            let pkt = fresh_packet(&topo, 0, dst);
            let qt = init_two_level(&topo, &timing, 0);
            let state = RouterState::new(0, topo.params().k(), 2, 3, 20);
            let d = decide(&c, &state, Some(&qt), &mut r1, &mut r2, &pkt);
            assert_eq!(d.port, topo.minimal_path(0, topo.router_of(dst))[0]);
            assert!(!d.consume_int);
        }
    }

    #[test]
    fn qadaptive_rule3_gateway_takes_direct_global_port() {
        let topo = desk();
        let timing = Timing::default();
        let hp = QHyperParams { epsilon: 0.0, ..QHyperParams::default() };
        let c = ctx(&topo, Algo::Qadaptive, &hp);
        let (mut r1, mut r2) = rngs();
        // Find an intermediate-group router that is itself a gateway to the
        // destination group.
        let dst = 64; // group 8
        let mid_group = 3;
        let (gw, gport) = topo.gateway_to_group(mid_group * 4, 8);
        let mut pkt = fresh_packet(&topo, 0, dst);
        pkt.hops = 2;
        pkt.int_group = IntGroupFlag::Pending;
        pkt.in_port = topo.params().p + topo.params().a - 1; // some global port
        let qt = init_two_level(&topo, &timing, gw);
        let state = RouterState::new(gw, topo.params().k(), 2, 3, 20);
        let d = decide(&c, &state, Some(&qt), &mut r1, &mut r2, &pkt);
        assert_eq!(d.port, gport);
        assert!(d.consume_int);
    }

    #[test]
    fn qadaptive_rule1_in_destination_group_is_minimal() {
        let topo = desk();
        let timing = Timing::default();
        let hp = QHyperParams { epsilon: 0.0, ..QHyperParams::default() };
        let c = ctx(&topo, Algo::Qadaptive, &hp);
        let (mut r1, mut r2) = rngs();
        let dst = 64; // router 32, group 8
        let here = 33; // same group, different router
        let mut pkt = fresh_packet(&topo, 0, dst);
        pkt.hops = 2;
        pkt.int_group = IntGroupFlag::Pending; // rule 1 must win over rule 3
        let qt = init_two_level(&topo, &timing, here);
        let state = RouterState::new(here, topo.params().k(), 2, 3, 20);
        let d = decide(&c, &state, Some(&qt), &mut r1, &mut r2, &pkt);
        assert_eq!(d.port, topo.local_port_to(here, 32));
        assert!(!d.consume_int);
    }

    #[test]
    fn qrouting_respects_maxq_fallback() {
        let topo = desk();
        let hp = QHyperParams { epsilon: 0.0, ..QHyperParams::default() };
        let c = ctx(&topo, Algo::Qrouting, &hp);
        let (mut r1, mut r2) = rngs();
        let dst = 64;
        let mut qt = QTable::new(topo.params().m(), topo.params().k() - topo.params().p);
        // Poison the table so the greedy choice would bounce the packet.
        for col in 0..qt.cols() {
            qt.set(topo.router_of(dst), col, if col == 0 { 1.0 } else { 2.0 });
        }
        let mut pkt = fresh_packet(&topo, 0, dst);
        pkt.hops = 6;
        let state = RouterState::new(0, topo.params().k(), 2, 3, 20);
        let d = decide(&c, &state, Some(&qt), &mut r1, &mut r2, &pkt);
        assert_eq!(d.port, topo.minimal_path(0, topo.router_of(dst))[0]);
        // Below the cap the greedy column wins.
        pkt.hops = 2;
        let d = decide(&c, &state, Some(&qt), &mut r1, &mut r2, &pkt);
        assert_eq!(d.port, topo.params().p);
    }
}
