//! Slot-by-slot fluid transport for both tiers.
//!
//! Secondary packets move in the intra-secondary subframe, primary packets
//! travel as bundles of `N` segments in the primary-relay subframe and are
//! handed to their primary destinations in the delivery subframe. Every
//! active, unblocked cell forwards at most one packet per S-D path per
//! active secondary slot.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::geometry::{CellCoord, Deployment, NodeId, Point, Tier};
use crate::phy::{min_rate_audit, tx_power, AirtimeSnapshot, LinkCategory, RateReport, Transmission};
use crate::rng::{stream, Stream};
use crate::routing::{hv_path, next_hop, paths_through_cell, RelayAssignment};
use crate::schedule::{cell_slot, GridPair, SlotIndex, SlotSchedule, Subframe, SUBFRAMES, TDMA_SLOTS};

/// Segments per primary packet: `max(1, floor(sqrt(m / ln m)))`.
pub fn relay_count(m: f64) -> usize {
    if !(m > 1.0) {
        return 1;
    }
    ((m / m.ln()).sqrt().floor() as usize).max(1)
}

/// The `N` relays and intermediate destination that carry one primary packet
/// through the secondary tier.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentBundle {
    pub packet: u32,
    pub relays: Vec<NodeId>,
    pub intermediate: NodeId,
    /// Primary cell of the final destination.
    pub sink: CellCoord,
    /// First and last secondary cell of the shared segment path.
    pub entry: CellCoord,
    pub target: CellCoord,
    /// Secondary-clock value when the segments may first move.
    pub eligible_at: u64,
    pub arrivals: Vec<Option<u64>>,
    /// Primary slot at whose start the bundle is reassembled.
    pub complete_at: Option<u64>,
}

impl SegmentBundle {
    pub fn is_reassembled(&self) -> bool {
        self.arrivals.iter().all(Option::is_some)
    }

    /// Spread between first and last segment arrival, in secondary slots.
    pub fn sync_gap(&self) -> Option<u64> {
        let arrived: Vec<u64> = self.arrivals.iter().flatten().copied().collect();
        if arrived.len() != self.arrivals.len() || arrived.is_empty() {
            return None;
        }
        Some(arrived.iter().max().unwrap() - arrived.iter().min().unwrap())
    }
}

/// Picks `n_relays` distinct secondary nodes of `relay_cell` as relays for a
/// packet headed to `intermediate`. `None` when the relay cell is too sparse.
pub fn broadcast_and_segment<R: Rng + ?Sized>(
    packet: u32,
    deployment: &Deployment,
    relay_cell: CellCoord,
    intermediate: NodeId,
    sink: CellCoord,
    n_relays: usize,
    rng: &mut R,
) -> Option<SegmentBundle> {
    let occ = &deployment.occupancy.secondary_by_pcell;
    let pool = occ.members(deployment.primary_grid.index(relay_cell));
    if pool.len() < n_relays || n_relays == 0 {
        return None;
    }
    let relays: Vec<NodeId> =
        index::sample(rng, pool.len(), n_relays).into_iter().map(|i| NodeId(pool[i])).collect();
    let entry = segment_entry(deployment, relay_cell, &relays);
    Some(SegmentBundle {
        packet,
        intermediate,
        sink,
        entry,
        target: deployment.secondary_cell_of(intermediate),
        eligible_at: 0,
        arrivals: vec![None; relays.len()],
        relays,
        complete_at: None,
    })
}

/// Secondary cell of the relay closest to the relay-cell centre; all
/// segments of a bundle leave from there along one shared path.
fn segment_entry(deployment: &Deployment, relay_cell: CellCoord, relays: &[NodeId]) -> CellCoord {
    let centre = deployment.primary_grid.center(relay_cell);
    let best = relays
        .iter()
        .min_by(|a, b| {
            let da = deployment.position(**a).dist2(centre);
            let db = deployment.position(**b).dist2(centre);
            da.total_cmp(&db).then(a.cmp(b))
        })
        .expect("at least one relay");
    deployment.secondary_cell_of(*best)
}

/// Secondary node of `pcell` nearest `to`.
pub fn nearest_secondary(deployment: &Deployment, pcell: CellCoord, to: Point) -> Option<NodeId> {
    let members = deployment.occupancy.secondary_by_pcell.members(deployment.primary_grid.index(pcell));
    members
        .iter()
        .map(|&id| NodeId(id))
        .min_by(|a, b| {
            let da = deployment.position(*a).dist2(to);
            let db = deployment.position(*b).dist2(to);
            da.total_cmp(&db).then(a.cmp(b))
        })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SecondaryFlow {
    src: NodeId,
    dst: NodeId,
    src_cell: CellCoord,
    dst_cell: CellCoord,
    phase: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SecondaryPacket {
    flow: u32,
    created: u64,
    delivered: Option<u64>,
    hops: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Carriage {
    /// Destination in the source cell or the next cell on the data path.
    Direct,
    Relayed(u32),
    Dropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct PrimaryPacket {
    pair: u32,
    created: u64,
    delivered: Option<u64>,
    carriage: Carriage,
    path_len: u32,
}

/// Windows and switches of one transport run, in primary slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunWindow {
    pub measure_start: u64,
    pub inject_end: u64,
    pub hard_end: u64,
    pub audit_start: u64,
    pub audit_end: u64,
}

impl RunWindow {
    pub fn from_config(cfg: &SimConfig) -> Self {
        let slots = TDMA_SLOTS as u64;
        let measure_start = cfg.warmup_frames as u64 * slots;
        let audit_start = measure_start.div_ceil(SUBFRAMES) * SUBFRAMES;
        let inject_end = cfg.frames as u64 * slots;
        Self {
            measure_start,
            inject_end,
            hard_end: (cfg.frames + cfg.drain_frames) as u64 * slots,
            audit_start,
            audit_end: match cfg.audit_frames {
                Some(f) => (audit_start + f as u64 * SUBFRAMES).min(inject_end),
                None => inject_end,
            },
        }
    }

    fn measures(&self, t: u64) -> bool {
        (self.measure_start..self.inject_end).contains(&t)
    }
}

/// Counters for the exact invariants, all expected to stay zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InvariantCounters {
    pub conservation_violations: u64,
    pub reassembly_violations: u64,
    pub quota_violations: u64,
    pub exclusion_violations: u64,
    pub fifo_violations: u64,
    pub delay_bound_violations: u64,
    pub collection_overlaps: u64,
    /// Slots at which conservation was checked.
    pub checks: u64,
}

impl InvariantCounters {
    pub fn all_clear(&self) -> bool {
        self.conservation_violations == 0
            && self.reassembly_violations == 0
            && self.quota_violations == 0
            && self.exclusion_violations == 0
            && self.fifo_violations == 0
            && self.delay_bound_violations == 0
            && self.collection_overlaps == 0
    }
}

/// One row of the optional per-packet trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PacketRecord {
    pub id: u64,
    pub tier: Tier,
    /// Primary slots for primary packets, secondary slots for secondary ones.
    pub creation_slot: u64,
    pub delivery_slot: Option<u64>,
    pub path_length: u32,
    pub segments: u32,
}

/// Raw per-run measurements before packet-size normalisation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RawMetrics {
    pub secondary_pairs: usize,
    pub secondary_pairs_simulated: usize,
    pub primary_pairs: usize,
    /// Secondary slots in the measurement window.
    pub secondary_window_slots: u64,
    /// Primary slots in the measurement window.
    pub primary_window_slots: u64,
    pub secondary_created_in_window: u64,
    pub secondary_delivered_from_window: u64,
    pub primary_created_in_window: u64,
    pub primary_delivered_from_window: u64,
    pub primary_dropped: u64,
    pub primary_direct: u64,
    /// Mean secondary delay, secondary slots.
    pub secondary_delay: Option<f64>,
    /// Mean primary delay, primary slots.
    pub primary_delay: Option<f64>,
    /// Mean delay of primary packets carried by the secondary tier.
    pub relayed_delay: Option<f64>,
    /// Mean secondary slots the relayed bundles spent moving.
    pub segment_traversal: Option<f64>,
    /// Mean of `delay - 3/64 * traversal` over relayed packets.
    pub additive_constant: Option<f64>,
    /// Mean primary slots between reassembly and delivery.
    pub delivery_wait: Option<f64>,
    pub max_sync_gap: u64,
    pub bundles_within_frame: u64,
    pub bundles_reassembled: u64,
    /// Largest number of S-D paths covering one secondary cell.
    pub max_secondary_load: u32,
    /// Largest number of primary sources in one primary cell.
    pub max_primary_sources: u32,
    pub low_confidence: bool,
    pub undrained: u64,
    pub invariants: InvariantCounters,
}

impl RawMetrics {
    /// Secondary throughput per pair per secondary slot.
    pub fn secondary_throughput(&self) -> f64 {
        if self.secondary_pairs_simulated == 0 || self.secondary_window_slots == 0 {
            return 0.0;
        }
        let packet = 1.0 / self.max_secondary_load.max(1) as f64;
        self.secondary_delivered_from_window as f64 * packet
            / (self.secondary_pairs_simulated as f64 * self.secondary_window_slots as f64)
    }

    /// Primary throughput per pair per primary slot.
    pub fn primary_throughput(&self) -> f64 {
        if self.primary_pairs == 0 || self.primary_window_slots == 0 {
            return 0.0;
        }
        let packet = 1.0 / self.max_primary_sources.max(1) as f64;
        self.primary_delivered_from_window as f64 * packet
            / (self.primary_pairs as f64 * self.primary_window_slots as f64)
    }

    pub fn primary_drop_rate(&self) -> f64 {
        if self.primary_created_in_window == 0 {
            0.0
        } else {
            self.primary_dropped as f64 / self.primary_created_in_window as f64
        }
    }
}

/// Minimum delivered packets per tier for metrics to count as confident.
pub const MIN_CONFIDENT_PACKETS: u64 = 30;

/// Transport state machine for one deployment.
pub struct Transport<'a> {
    dep: &'a Deployment,
    relays: &'a RelayAssignment,
    grids: GridPair,
    window: RunWindow,
    n_relays: usize,
    primary_power: f64,
    secondary_power: f64,
    secondary_injection_period: u64,
    primary_injection_period: u64,

    flows: Vec<SecondaryFlow>,
    flows_by_slot: Vec<Vec<u32>>,
    load: Vec<u32>,
    sec_cells_by_slot: Vec<Vec<u32>>,
    sec_queues: Vec<BTreeMap<u32, VecDeque<u32>>>,
    sec_packets: Vec<SecondaryPacket>,
    last_delivered: Vec<Option<u64>>,

    pairs_by_slot: Vec<Vec<u32>>,
    pair_phase: Vec<u32>,
    pri_packets: Vec<PrimaryPacket>,
    bundles: Vec<SegmentBundle>,
    seg_queues: Vec<BTreeSet<u32>>,
    /// Reassembled bundles waiting per sink cell and destination node.
    pending: BTreeMap<u32, BTreeMap<u32, VecDeque<u32>>>,
    id_cache: BTreeMap<(u32, u32), Option<NodeId>>,
    seg_rng: rand_chacha::ChaCha8Rng,

    counters: InvariantCounters,
    primary_injected: u64,
    primary_delivered: u64,
    secondary_injected: u64,
    secondary_delivered: u64,
    window_outstanding: u64,

    check_every_slot: bool,
    snapshots: Vec<AirtimeSnapshot>,
    rates: RateReport,
    script: Option<BTreeMap<u64, Vec<u32>>>,
}

struct Broadcast {
    src_cell: CellCoord,
    packet: u32,
}

impl<'a> Transport<'a> {
    pub fn new(dep: &'a Deployment, relays: &'a RelayAssignment) -> Self {
        let cfg = &dep.config;
        let grids = GridPair::new(dep.primary_grid, dep.secondary_grid);
        let window = RunWindow::from_config(cfg);
        let sgrid = dep.secondary_grid;

        let all_pairs: Vec<(CellCoord, CellCoord)> = dep
            .secondary_pairs
            .iter()
            .map(|&(s, d)| (dep.secondary_cell_of(s), dep.secondary_cell_of(d)))
            .collect();
        let load = paths_through_cell(&all_pairs, &sgrid);

        let mut probe_rng = stream(cfg.seed, Stream::Probes);
        let chosen: Vec<usize> = match cfg.secondary_probe_pairs {
            Some(cap) if cap < all_pairs.len() => {
                let mut v = index::sample(&mut probe_rng, all_pairs.len(), cap).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..all_pairs.len()).collect(),
        };
        let mut phase_rng = stream(cfg.seed, Stream::Phases);
        let sec_period = cfg.secondary_injection_period;
        let flows: Vec<SecondaryFlow> = chosen
            .iter()
            .map(|&i| {
                let (src, dst) = dep.secondary_pairs[i];
                SecondaryFlow {
                    src,
                    dst,
                    src_cell: all_pairs[i].0,
                    dst_cell: all_pairs[i].1,
                    phase: phase_rng.random_range(0..sec_period),
                }
            })
            .collect();
        let mut flows_by_slot = vec![Vec::new(); TDMA_SLOTS as usize];
        for (i, f) in flows.iter().enumerate() {
            flows_by_slot[cell_slot(f.src_cell) as usize].push(i as u32);
        }
        let mut sec_cells_by_slot = vec![Vec::new(); TDMA_SLOTS as usize];
        for (i, c) in sgrid.cells().enumerate() {
            sec_cells_by_slot[cell_slot(c) as usize].push(i as u32);
        }

        let pri_period = cfg.primary_injection_period;
        let mut pairs_by_slot = vec![Vec::new(); TDMA_SLOTS as usize];
        let mut pair_phase = Vec::with_capacity(dep.primary_pairs.len());
        for (i, &(src, _)) in dep.primary_pairs.iter().enumerate() {
            pairs_by_slot[cell_slot(dep.primary_cell_of(src)) as usize].push(i as u32);
            pair_phase.push(phase_rng.random_range(0..pri_period));
        }

        Self {
            dep,
            relays,
            grids,
            window,
            n_relays: relay_count(cfg.m()),
            primary_power: tx_power(dep.primary_grid.cell_area(), cfg.power_const, cfg.alpha),
            secondary_power: tx_power(sgrid.cell_area(), cfg.power_const, cfg.alpha),
            secondary_injection_period: sec_period as u64,
            primary_injection_period: pri_period as u64,
            last_delivered: vec![None; flows.len()],
            flows,
            flows_by_slot,
            load,
            sec_cells_by_slot,
            sec_queues: vec![BTreeMap::new(); sgrid.cell_count()],
            sec_packets: Vec::new(),
            pairs_by_slot,
            pair_phase,
            pri_packets: Vec::new(),
            bundles: Vec::new(),
            seg_queues: vec![BTreeSet::new(); sgrid.cell_count()],
            pending: BTreeMap::new(),
            id_cache: BTreeMap::new(),
            seg_rng: stream(cfg.seed, Stream::Segments),
            counters: InvariantCounters::default(),
            primary_injected: 0,
            primary_delivered: 0,
            secondary_injected: 0,
            secondary_delivered: 0,
            window_outstanding: 0,
            check_every_slot: true,
            snapshots: Vec::new(),
            rates: RateReport::default(),
            script: None,
        }
    }

    /// Overrides the measurement and injection windows.
    pub fn with_window(mut self, window: RunWindow) -> Self {
        self.window = window;
        self
    }

    pub fn check_every_slot(mut self, on: bool) -> Self {
        self.check_every_slot = on;
        self
    }

    pub fn relay_count(&self) -> usize {
        self.n_relays
    }

    /// Per-category SINR minima over every audited secondary slot.
    pub fn rate_report(&self) -> RateReport {
        self.rates
    }

    /// Replaces random traffic by the given `(primary slot, primary pair)`
    /// injections. Secondary sources stay silent.
    pub fn with_script(mut self, injections: &[(u64, u32)]) -> Self {
        let mut script: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
        for &(t, pair) in injections {
            script.entry(t).or_default().push(pair);
        }
        self.script = Some(script);
        self
    }

    pub fn counters(&self) -> InvariantCounters {
        self.counters
    }

    pub fn bundles(&self) -> &[SegmentBundle] {
        &self.bundles
    }

    pub fn in_flight(&self) -> (u64, u64) {
        let sec: usize = self.sec_queues.iter().flat_map(|m| m.values()).map(VecDeque::len).sum();
        let seg: usize = self.seg_queues.iter().map(BTreeSet::len).sum();
        let waiting: usize = self.pending.values().flat_map(|m| m.values()).map(VecDeque::len).sum();
        (sec as u64, (seg + waiting) as u64)
    }

    /// Runs injection, measurement and drain to completion.
    pub fn run(&mut self) {
        let mut t = 0;
        while t < self.window.hard_end {
            if t >= self.window.inject_end && self.window_outstanding == 0 {
                break;
            }
            self.step_primary_slot(t);
            t += 1;
        }
    }

    /// Advances the whole network by one primary slot.
    pub fn step_primary_slot(&mut self, t: u64) {
        let slot = SlotIndex(t);
        let inject = t < self.window.inject_end;
        let broadcasts = if inject { self.inject_primary(slot) } else { Vec::new() };
        let tx_cells: BTreeSet<CellCoord> = broadcasts.iter().map(|b| b.src_cell).collect();
        let mut sched = SlotSchedule::new(slot, self.grids, |c| tx_cells.contains(&c));
        let audit = (self.window.audit_start..self.window.audit_end).contains(&t);

        match slot.subframe() {
            Subframe::IntraSecondary => {
                for s in 0..TDMA_SLOTS {
                    if inject {
                        self.inject_secondary(slot, s);
                    }
                    let moved = self.step_secondary_slot(&sched, s);
                    if audit {
                        self.snapshot(&sched, s, &broadcasts, moved, &[]);
                    }
                }
            }
            Subframe::PrimaryRelay => {
                for s in 0..TDMA_SLOTS {
                    let moved = self.step_segment_slot(&sched, s);
                    if audit {
                        self.snapshot(&sched, s, &broadcasts, moved, &[]);
                    }
                }
            }
            Subframe::Delivery => {
                let delivered = self.step_delivery_subframe(&mut sched);
                if audit {
                    for s in 0..TDMA_SLOTS {
                        self.snapshot(&sched, s, &broadcasts, Vec::new(), &delivered);
                    }
                }
            }
        }

        if audit {
            let alpha = self.dep.config.alpha;
            let noise = self.dep.config.noise;
            let report = min_rate_audit(&self.snapshots, alpha, noise);
            self.rates = self.rates.merge(report);
            self.snapshots.clear();
        }
        self.enqueue_broadcasts(t, &broadcasts);
        if self.check_every_slot {
            self.check_conservation();
        }
    }

    fn inject_primary(&mut self, slot: SlotIndex) -> Vec<Broadcast> {
        let t = slot.0;
        let frame = slot.primary_frame();
        let mut out = Vec::new();
        let scripted = self.script.as_ref().map(|s| s.get(&t).cloned().unwrap_or_default());
        let pairs = match &scripted {
            Some(list) => list.clone(),
            None => std::mem::take(&mut self.pairs_by_slot[slot.primary_slot() as usize]),
        };
        for &pair in &pairs {
            let due = (frame + self.pair_phase[pair as usize] as u64) % self.primary_injection_period == 0;
            if scripted.is_none() && !due {
                continue;
            }
            let (src, dst) = self.dep.primary_pairs[pair as usize];
            let (src_cell, dst_cell) = (self.dep.primary_cell_of(src), self.dep.primary_cell_of(dst));
            let path = hv_path(src_cell, dst_cell, &self.dep.primary_grid);
            let id = self.pri_packets.len() as u32;
            let carriage = if path.len() <= 2 {
                Carriage::Direct
            } else {
                let relay_cell = path.cells[1];
                let id_cell = path.cells[path.len() - 2];
                match self.make_bundle(id, relay_cell, id_cell, dst_cell) {
                    Some(b) => Carriage::Relayed(b),
                    None => Carriage::Dropped,
                }
            };
            let delivered = (carriage == Carriage::Direct).then_some(t + 1);
            self.pri_packets.push(PrimaryPacket {
                pair,
                created: t,
                delivered,
                carriage,
                path_len: path.len() as u32,
            });
            self.primary_injected += 1;
            match carriage {
                Carriage::Direct => self.primary_delivered += 1,
                Carriage::Dropped => {}
                Carriage::Relayed(_) => {
                    if self.window.measures(t) {
                        self.window_outstanding += 1;
                    }
                }
            }
            out.push(Broadcast { src_cell, packet: id });
        }
        if scripted.is_none() {
            self.pairs_by_slot[slot.primary_slot() as usize] = pairs;
        }
        out
    }

    fn make_bundle(&mut self, packet: u32, relay_cell: CellCoord, id_cell: CellCoord, sink: CellCoord) -> Option<u32> {
        let pg = self.dep.primary_grid;
        let key = (pg.index(id_cell) as u32, pg.index(sink) as u32);
        let dep = self.dep;
        let intermediate =
            (*self.id_cache.entry(key).or_insert_with(|| nearest_secondary(dep, id_cell, pg.center(sink))))?;
        let bundle =
            broadcast_and_segment(packet, dep, relay_cell, intermediate, sink, self.n_relays, &mut self.seg_rng)?;
        self.bundles.push(bundle);
        Some(self.bundles.len() as u32 - 1)
    }

    /// Relays hold the broadcast packets once the primary slot is over.
    fn enqueue_broadcasts(&mut self, t: u64, broadcasts: &[Broadcast]) {
        let next_relay = t + 1 + (SUBFRAMES + 1 - (t + 1) % SUBFRAMES) % SUBFRAMES;
        let eligible_at = SlotIndex(next_relay).secondary_clock(0);
        for b in broadcasts {
            let Carriage::Relayed(bi) = self.pri_packets[b.packet as usize].carriage else {
                continue;
            };
            let bundle = &mut self.bundles[bi as usize];
            bundle.eligible_at = eligible_at;
            if bundle.entry == bundle.target {
                bundle.arrivals.iter_mut().for_each(|a| *a = Some(eligible_at));
                bundle.complete_at = Some(t + 1);
                self.push_pending(bi);
            } else {
                let cell = self.dep.secondary_grid.index(bundle.entry);
                self.seg_queues[cell].insert(bi);
            }
        }
    }

    fn push_pending(&mut self, bundle: u32) {
        let b = &self.bundles[bundle as usize];
        let pkt = self.pri_packets[b.packet as usize];
        let dst = self.dep.primary_pairs[pkt.pair as usize].1;
        let sink = self.dep.primary_grid.index(b.sink) as u32;
        self.pending.entry(sink).or_default().entry(dst.0).or_default().push_back(bundle);
    }

    fn inject_secondary(&mut self, slot: SlotIndex, s: u32) {
        let frame = slot.secondary_frame();
        let clock = slot.secondary_clock(s);
        let measures = self.window.measures(slot.0);
        if self.script.is_some() {
            return;
        }
        let flows = std::mem::take(&mut self.flows_by_slot[s as usize]);
        for &fi in &flows {
            let flow = self.flows[fi as usize];
            if (frame + flow.phase as u64) % self.secondary_injection_period != 0 {
                continue;
            }
            let id = self.sec_packets.len() as u32;
            self.secondary_injected += 1;
            if measures {
                self.window_outstanding += 1;
            }
            self.sec_packets.push(SecondaryPacket { flow: fi, created: clock, delivered: None, hops: 0 });
            if flow.src_cell == flow.dst_cell {
                self.deliver_secondary(id, clock + 1);
            } else {
                let cell = self.dep.secondary_grid.index(flow.src_cell);
                self.sec_queues[cell].entry(fi).or_default().push_back(id);
            }
        }
        self.flows_by_slot[s as usize] = flows;
    }

    fn deliver_secondary(&mut self, id: u32, at: u64) {
        let created;
        {
            let p = &mut self.sec_packets[id as usize];
            p.delivered = Some(at);
            created = p.created;
            let flow = self.flows[p.flow as usize];
            let bound = crate::routing::hop_count(flow.src_cell, flow.dst_cell) as u64;
            if at - p.created < bound {
                self.counters.delay_bound_violations += 1;
            }
            if let Some(prev) = self.last_delivered[p.flow as usize] {
                if prev > p.created {
                    self.counters.fifo_violations += 1;
                }
            }
            self.last_delivered[p.flow as usize] = Some(p.created);
        }
        self.secondary_delivered += 1;
        if self.window.measures(self.clock_to_primary(created)) {
            self.window_outstanding -= 1;
        }
    }

    /// Primary slot of the intra-secondary subframe holding a secondary-clock value.
    fn clock_to_primary(&self, clock: u64) -> u64 {
        clock / TDMA_SLOTS as u64 * SUBFRAMES
    }

    /// Next cell along the HV path that has a designated secondary relay.
    fn next_relay_cell(&self, from: CellCoord, dst: CellCoord) -> CellCoord {
        let sgrid = &self.dep.secondary_grid;
        let mut cur = from;
        while let Some(next) = next_hop(cur, dst) {
            if next == dst || self.relays.secondary[sgrid.index(next)].is_some() {
                return next;
            }
            cur = next;
        }
        dst
    }

    fn relay_position(&self, cell: CellCoord) -> Option<Point> {
        self.relays.secondary[self.dep.secondary_grid.index(cell)].map(|id| self.dep.position(id))
    }

    /// Exclusion re-check in continuous coordinates, independent of the
    /// blocked-cell lookup used for scheduling.
    fn check_exclusion(&mut self, sched: &SlotSchedule, cell: CellCoord) {
        let Some(p) = self.relay_position(cell) else { return };
        let ks = self.dep.secondary_grid.side;
        if sched.preservation.iter().any(|r| r.secondary_cells.contains_point(ks, p)) {
            self.counters.exclusion_violations += 1;
        }
    }

    /// Intra-secondary subframe, secondary slot `s`. Returns the forwarding
    /// cells and the cell each one sent to.
    pub fn step_secondary_slot(&mut self, sched: &SlotSchedule, s: u32) -> Vec<(CellCoord, CellCoord)> {
        let clock = sched.slot.secondary_clock(s);
        let sgrid = self.dep.secondary_grid;
        let mut moves: Vec<(usize, u32, u32)> = Vec::new();
        let mut deliveries: Vec<u32> = Vec::new();
        let mut senders = Vec::new();
        let cells = std::mem::take(&mut self.sec_cells_by_slot[s as usize]);
        for &ci in &cells {
            let ci = ci as usize;
            if self.sec_queues[ci].is_empty() {
                continue;
            }
            let cell = sgrid.coord(ci);
            if sched.is_blocked(cell) {
                continue;
            }
            self.check_exclusion(sched, cell);
            let mut queues = std::mem::take(&mut self.sec_queues[ci]);
            let before = moves.len() + deliveries.len();
            let mut first_next = None;
            for (&fi, q) in queues.iter_mut() {
                let pid = q.pop_front().expect("empty queues are removed");
                let flow = self.flows[fi as usize];
                let next = self.next_relay_cell(cell, flow.dst_cell);
                first_next.get_or_insert(next);
                self.sec_packets[pid as usize].hops += 1;
                if next == flow.dst_cell {
                    deliveries.push(pid);
                } else {
                    moves.push((sgrid.index(next), fi, pid));
                }
            }
            let sent = moves.len() + deliveries.len() - before;
            if sent != queues.len() {
                self.counters.quota_violations += 1;
            }
            queues.retain(|_, q| !q.is_empty());
            self.sec_queues[ci] = queues;
            if let Some(next) = first_next {
                senders.push((cell, next));
            }
        }
        self.sec_cells_by_slot[s as usize] = cells;
        for pid in deliveries {
            self.deliver_secondary(pid, clock + 1);
        }
        for (ci, fi, pid) in moves {
            self.sec_queues[ci].entry(fi).or_default().push_back(pid);
        }
        senders
    }

    /// Primary-relay subframe, secondary slot `s`.
    pub fn step_segment_slot(&mut self, sched: &SlotSchedule, s: u32) -> Vec<(CellCoord, CellCoord)> {
        let clock = sched.slot.secondary_clock(s);
        let sgrid = self.dep.secondary_grid;
        let mut moves = Vec::new();
        let mut arrived = Vec::new();
        let mut senders = Vec::new();
        let cells = std::mem::take(&mut self.sec_cells_by_slot[s as usize]);
        for &ci in &cells {
            let ci = ci as usize;
            if self.seg_queues[ci].is_empty() {
                continue;
            }
            let cell = sgrid.coord(ci);
            if sched.is_blocked(cell) {
                continue;
            }
            self.check_exclusion(sched, cell);
            let here = std::mem::take(&mut self.seg_queues[ci]);
            let mut first_next = None;
            for &bi in &here {
                let target = self.bundles[bi as usize].target;
                let next = self.next_relay_cell(cell, target);
                first_next.get_or_insert(next);
                if next == target {
                    arrived.push(bi);
                } else {
                    moves.push((sgrid.index(next), bi));
                }
            }
            if let Some(next) = first_next {
                senders.push((cell, next));
            }
        }
        self.sec_cells_by_slot[s as usize] = cells;
        for (ci, bi) in moves {
            if !self.seg_queues[ci].insert(bi) {
                self.counters.quota_violations += 1;
            }
        }
        for bi in arrived {
            let b = &mut self.bundles[bi as usize];
            b.arrivals.iter_mut().for_each(|a| *a = Some(clock + 1));
            b.complete_at = Some(sched.slot.0 + 1);
            self.push_pending(bi);
        }
        senders
    }

    /// Delivery subframe: admits collection regions oldest-first and hands one
    /// reassembled packet to each waiting destination of every admitted sink.
    /// Returns `(intermediate, destination)` pairs served.
    pub fn step_delivery_subframe(&mut self, sched: &mut SlotSchedule) -> Vec<(NodeId, NodeId)> {
        let t = sched.slot.0;
        let pg = self.dep.primary_grid;
        let mut requests: Vec<(u64, u32)> = self
            .pending
            .iter()
            .filter_map(|(&sink, dsts)| {
                dsts.values()
                    .filter_map(|q| q.front())
                    .map(|&bi| self.pri_packets[self.bundles[bi as usize].packet as usize].created)
                    .min()
                    .map(|oldest| (oldest, sink))
            })
            .collect();
        requests.sort_unstable();
        let sinks: Vec<CellCoord> = requests.iter().map(|&(_, s)| pg.coord(s as usize)).collect();
        sched.admit_collections(&sinks);
        for (i, a) in sched.collections.iter().enumerate() {
            let clash = sched.preservation.iter().chain(&sched.collections[i + 1..]).any(|r| r.overlaps(a));
            if clash {
                self.counters.collection_overlaps += 1;
            }
        }

        let mut served = Vec::new();
        let admitted: Vec<u32> = sched.collections.iter().map(|r| pg.index(r.center) as u32).collect();
        for sink in admitted {
            let Some(dsts) = self.pending.get_mut(&sink) else { continue };
            let mut handed = Vec::new();
            for (&dst, q) in dsts.iter_mut() {
                if let Some(bi) = q.pop_front() {
                    handed.push((dst, bi));
                }
            }
            dsts.retain(|_, q| !q.is_empty());
            if dsts.is_empty() {
                self.pending.remove(&sink);
            }
            for (dst, bi) in handed {
                let bundle = &self.bundles[bi as usize];
                if !bundle.is_reassembled() || bundle.complete_at.is_none_or(|c| c > t) {
                    self.counters.reassembly_violations += 1;
                }
                served.push((bundle.intermediate, NodeId(dst)));
                let pi = bundle.packet as usize;
                self.pri_packets[pi].delivered = Some(t + 1);
                self.primary_delivered += 1;
                if self.window.measures(self.pri_packets[pi].created) {
                    self.window_outstanding -= 1;
                }
            }
        }
        served
    }

    fn check_conservation(&mut self) {
        self.counters.checks += 1;
        let (sec_in_flight, pri_in_flight) = self.in_flight();
        let dropped = self.pri_packets.iter().filter(|p| p.carriage == Carriage::Dropped).count() as u64;
        if self.secondary_injected != self.secondary_delivered + sec_in_flight {
            self.counters.conservation_violations += 1;
        }
        if self.primary_injected != self.primary_delivered + pri_in_flight + dropped {
            self.counters.conservation_violations += 1;
        }
    }

    fn snapshot(
        &mut self,
        sched: &SlotSchedule,
        s: u32,
        broadcasts: &[Broadcast],
        senders: Vec<(CellCoord, CellCoord)>,
        deliveries: &[(NodeId, NodeId)],
    ) {
        let dep = self.dep;
        let mut tx = Vec::new();

        // Sources of one primary cell take turns inside the slot.
        let mut by_cell: BTreeMap<CellCoord, Vec<u32>> = BTreeMap::new();
        for b in broadcasts {
            by_cell.entry(b.src_cell).or_default().push(b.packet);
        }
        for packets in by_cell.values() {
            let pkt = self.pri_packets[packets[s as usize % packets.len()] as usize];
            let (src, dst) = dep.primary_pairs[pkt.pair as usize];
            let receivers = match pkt.carriage {
                Carriage::Relayed(bi) => {
                    self.bundles[bi as usize].relays.iter().map(|&r| (r, dep.position(r))).collect()
                }
                _ => vec![(dst, dep.position(dst))],
            };
            tx.push(Transmission {
                category: LinkCategory::PrimaryReception,
                tx_node: src,
                tx: dep.position(src),
                power: self.primary_power,
                receivers,
            });
        }

        match sched.slot.subframe() {
            Subframe::IntraSecondary | Subframe::PrimaryRelay => {
                let own_traffic = sched.slot.subframe() == Subframe::IntraSecondary;
                let mut on_air: BTreeMap<CellCoord, CellCoord> = senders.into_iter().collect();
                if own_traffic {
                    // Unsimulated flows still occupy every loaded cell.
                    for c in sched.active_secondary(s) {
                        if self.load[dep.secondary_grid.index(c)] > 0 && !sched.is_blocked(c) {
                            on_air.entry(c).or_insert_with(|| fallback_neighbor(c, dep.secondary_grid.side));
                        }
                    }
                }
                for (from, to) in on_air {
                    let (Some(a), Some(b)) = (
                        self.relays.secondary[dep.secondary_grid.index(from)],
                        self.relays.secondary[dep.secondary_grid.index(to)],
                    ) else {
                        continue;
                    };
                    tx.push(Transmission {
                        category: LinkCategory::IntraSecondary,
                        tx_node: a,
                        tx: dep.position(a),
                        power: self.secondary_power,
                        receivers: vec![(b, dep.position(b))],
                    });
                }
            }
            Subframe::Delivery => {
                let sinks: BTreeMap<CellCoord, Vec<(NodeId, NodeId)>> =
                    deliveries.iter().fold(BTreeMap::new(), |mut acc, &(from, to)| {
                        acc.entry(dep.primary_cell_of(to)).or_insert_with(Vec::new).push((from, to));
                        acc
                    });
                for list in sinks.values() {
                    let (from, to) = list[s as usize % list.len()];
                    tx.push(Transmission {
                        category: LinkCategory::Delivery,
                        tx_node: from,
                        tx: dep.position(from),
                        power: self.primary_power,
                        receivers: vec![(to, dep.position(to))],
                    });
                }
            }
        }
        self.snapshots.push(AirtimeSnapshot { primary_slot: sched.slot.0, secondary_slot: s, transmissions: tx });
    }

    pub fn measure(&self) -> RawMetrics {
        let w = self.window;
        let measure_frames = (w.measure_start.div_ceil(SUBFRAMES)..w.inject_end.div_ceil(SUBFRAMES)).count() as u64;

        let mut sec_created = 0u64;
        let mut sec_delivered = 0u64;
        let mut sec_delay = 0f64;
        for p in &self.sec_packets {
            if !w.measures(self.clock_to_primary(p.created)) {
                continue;
            }
            sec_created += 1;
            if let Some(d) = p.delivered {
                sec_delivered += 1;
                sec_delay += (d - p.created) as f64;
            }
        }

        let mut pri_created = 0u64;
        let mut pri_delivered = 0u64;
        let mut dropped = 0u64;
        let mut direct = 0u64;
        let mut delay = 0f64;
        let mut relayed_delay = 0f64;
        let mut relayed = 0u64;
        let mut traversal = 0f64;
        let mut additive = 0f64;
        let mut wait = 0f64;
        let mut max_gap = 0u64;
        let mut within = 0u64;
        let mut reassembled = 0u64;
        for p in &self.pri_packets {
            if !w.measures(p.created) {
                continue;
            }
            pri_created += 1;
            match p.carriage {
                Carriage::Dropped => dropped += 1,
                Carriage::Direct => direct += 1,
                Carriage::Relayed(bi) => {
                    let b = &self.bundles[bi as usize];
                    if let Some(gap) = b.sync_gap() {
                        reassembled += 1;
                        max_gap = max_gap.max(gap);
                        within += (gap <= TDMA_SLOTS as u64) as u64;
                    }
                    if let (Some(d), Some(arr)) = (p.delivered, b.arrivals.iter().flatten().max()) {
                        let dp = (d - p.created) as f64;
                        let tr = (arr - b.eligible_at) as f64;
                        relayed += 1;
                        relayed_delay += dp;
                        traversal += tr;
                        additive += dp - 3.0 / 64.0 * tr;
                        wait += (d - b.complete_at.unwrap_or(d)) as f64;
                    }
                }
            }
            if let Some(d) = p.delivered {
                pri_delivered += 1;
                delay += (d - p.created) as f64;
            }
        }

        let mut sources = vec![0u32; self.dep.primary_grid.cell_count()];
        for &(src, _) in &self.dep.primary_pairs {
            sources[self.dep.primary_grid.index(self.dep.primary_cell_of(src))] += 1;
        }

        let mean = |sum: f64, n: u64| (n > 0).then(|| sum / n as f64);
        let undrained = (sec_created - sec_delivered) + (pri_created - pri_delivered - dropped);
        RawMetrics {
            secondary_pairs: self.dep.secondary_pairs.len(),
            secondary_pairs_simulated: self.flows.len(),
            primary_pairs: self.dep.primary_pairs.len(),
            secondary_window_slots: measure_frames * TDMA_SLOTS as u64,
            primary_window_slots: w.inject_end - w.measure_start,
            secondary_created_in_window: sec_created,
            secondary_delivered_from_window: sec_delivered,
            primary_created_in_window: pri_created,
            primary_delivered_from_window: pri_delivered,
            primary_dropped: dropped,
            primary_direct: direct,
            secondary_delay: mean(sec_delay, sec_delivered),
            primary_delay: mean(delay, pri_delivered),
            relayed_delay: mean(relayed_delay, relayed),
            segment_traversal: mean(traversal, relayed),
            additive_constant: mean(additive, relayed),
            delivery_wait: mean(wait, relayed),
            max_sync_gap: max_gap,
            bundles_within_frame: within,
            bundles_reassembled: reassembled,
            max_secondary_load: self.load.iter().copied().max().unwrap_or(0),
            max_primary_sources: sources.into_iter().max().unwrap_or(0),
            low_confidence: sec_delivered < MIN_CONFIDENT_PACKETS
                || pri_delivered < MIN_CONFIDENT_PACKETS
                || undrained > 0,
            undrained,
            invariants: self.counters,
        }
    }

    pub fn packet_records(&self) -> Vec<PacketRecord> {
        let dep = self.dep;
        let mut out = Vec::with_capacity(self.pri_packets.len() + self.sec_packets.len());
        for (i, p) in self.pri_packets.iter().enumerate() {
            let segments = match p.carriage {
                Carriage::Relayed(bi) => self.bundles[bi as usize].relays.len() as u32,
                Carriage::Direct => 1,
                Carriage::Dropped => 0,
            };
            out.push(PacketRecord {
                id: i as u64,
                tier: Tier::Primary,
                creation_slot: p.created,
                delivery_slot: p.delivered,
                path_length: p.path_len,
                segments,
            });
        }
        let base = self.pri_packets.len() as u64;
        for (i, p) in self.sec_packets.iter().enumerate() {
            let f = self.flows[p.flow as usize];
            out.push(PacketRecord {
                id: base + i as u64,
                tier: Tier::Secondary,
                creation_slot: p.created,
                delivery_slot: p.delivered,
                path_length: crate::routing::hop_count(f.src_cell, f.dst_cell) + 1,
                segments: 1,
            });
        }
        let _ = dep;
        out
    }
}

fn fallback_neighbor(c: CellCoord, side: u32) -> CellCoord {
    if c.col + 1 < side {
        CellCoord::new(c.col + 1, c.row)
    } else if c.col > 0 {
        CellCoord::new(c.col - 1, c.row)
    } else if c.row + 1 < side {
        CellCoord::new(c.col, c.row + 1)
    } else {
        CellCoord::new(c.col, c.row.saturating_sub(1))
    }
}

/// Writes trace rows as CSV: `id,tier,creation_slot,delivery_slot,path_length,segments`.
pub fn write_trace<W: Write>(records: &[PacketRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "id,tier,creation_slot,delivery_slot,path_length,segments")?;
    for r in records {
        let tier = match r.tier {
            Tier::Primary => "primary",
            Tier::Secondary => "secondary",
        };
        let delivery = r.delivery_slot.map(|d| d.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{},{}", r.id, tier, r.creation_slot, delivery, r.path_length, r.segments)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::{hop_count, select_relays};

    #[test]
    fn relay_count_values() {
        assert_eq!(relay_count(1e4), 32);
        assert_eq!(relay_count(std::f64::consts::E), 1);
        assert_eq!(relay_count(1e8), 2329);
        assert_eq!(relay_count(0.5), 1);
        assert_eq!(relay_count(4096.0), 22);
        assert_eq!(relay_count(1_048_576.0), 275);
    }

    fn deployment(n: f64, seed: u64) -> Deployment {
        Deployment::build(&SimConfig { n, seed, ..Default::default() }).unwrap()
    }

    #[test]
    fn segments_go_to_distinct_relays_of_the_relay_cell() {
        let dep = deployment(128.0, 1);
        let mut rng = stream(9, Stream::Segments);
        let relay_cell = CellCoord::new(1, 1);
        let sink = CellCoord::new(2, 2);
        let id = nearest_secondary(&dep, CellCoord::new(2, 1), dep.primary_grid.center(sink)).unwrap();
        let b = broadcast_and_segment(0, &dep, relay_cell, id, sink, 41, &mut rng).unwrap();
        let mut ids: Vec<_> = b.relays.clone();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 41);
        assert!(b.relays.iter().all(|&r| dep.primary_cell_of(r) == relay_cell));
        assert_eq!(dep.primary_cell_of(id), CellCoord::new(2, 1));
        assert!(!b.is_reassembled());
        assert_eq!(b.sync_gap(), None);

        let too_many = dep.occupancy.secondary_by_pcell.count(dep.primary_grid.index(relay_cell)) + 1;
        assert!(broadcast_and_segment(0, &dep, relay_cell, id, sink, too_many, &mut rng).is_none());
    }

    #[test]
    fn intermediate_destination_is_nearest_to_the_sink_centre() {
        let dep = deployment(64.0, 2);
        let (id_cell, sink) = (CellCoord::new(0, 1), CellCoord::new(1, 1));
        let centre = dep.primary_grid.center(sink);
        let id = nearest_secondary(&dep, id_cell, centre).unwrap();
        let best = dep.position(id).dist(centre);
        for &other in dep.occupancy.secondary_by_pcell.members(dep.primary_grid.index(id_cell)) {
            assert!(dep.position(NodeId(other)).dist(centre) >= best);
        }
    }

    fn window_all(slots: u64) -> RunWindow {
        RunWindow { measure_start: 0, inject_end: slots, hard_end: slots, audit_start: 0, audit_end: 0 }
    }

    /// A relayed pair and the first slot its source cell is active.
    fn relayed_pairs(dep: &Deployment) -> Vec<(u32, u64)> {
        dep.primary_pairs
            .iter()
            .enumerate()
            .filter(|(_, (s, d))| hop_count(dep.primary_cell_of(*s), dep.primary_cell_of(*d)) >= 2)
            .map(|(i, (s, _))| (i as u32, cell_slot(dep.primary_cell_of(*s)) as u64))
            .collect()
    }

    #[test]
    fn idle_network_delivers_nothing() {
        let dep = deployment(64.0, 0);
        let relays = select_relays(&dep, 0);
        let mut t = Transport::new(&dep, &relays).with_window(window_all(256)).with_script(&[]);
        t.run();
        let m = t.measure();
        assert_eq!(m.primary_delivered_from_window, 0);
        assert_eq!(m.secondary_delivered_from_window, 0);
        assert_eq!(m.primary_throughput(), 0.0);
        assert_eq!(m.primary_delay, None);
        assert_eq!(m.secondary_delay, None);
        assert!(m.low_confidence);
        assert!(m.invariants.all_clear());
    }

    #[test]
    fn single_packet_delay_is_traversal_plus_constant() {
        let dep = deployment(512.0, 4);
        let relays = select_relays(&dep, 4);
        let mut constants = Vec::new();
        let mut traversals = Vec::new();
        for (pair, slot) in relayed_pairs(&dep).into_iter().take(12) {
            let mut t = Transport::new(&dep, &relays).with_window(window_all(64 * 40)).with_script(&[(slot, pair)]);
            t.run();
            let rec = &t.packet_records()[0];
            let b = &t.bundles()[0];
            let delay = (rec.delivery_slot.unwrap() - rec.creation_slot) as f64;
            let arrival = b.arrivals[0].unwrap();
            assert_eq!(b.sync_gap(), Some(0));
            assert!(b.is_reassembled());
            let traversal = (arrival - b.eligible_at) as f64;
            assert!(traversal >= hop_count(b.entry, b.target) as f64);
            let c = delay - 3.0 / 64.0 * traversal;
            constants.push(c);
            traversals.push(traversal);
            assert!(delay >= rec.path_length as f64 - 1.0);
            assert!(t.counters().all_clear());
        }
        // Broadcast, wait for the relay subframe, wait for the delivery subframe.
        for &c in &constants {
            assert!(c > 0.0 && c <= 8.0, "C = {c}");
        }
        let spread = traversals.iter().cloned().fold(f64::MIN, f64::max) - traversals.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 64.0, "traversal spread {spread}");
    }

    #[test]
    fn same_sink_bundles_are_delivered_together() {
        // Two packets from one source cell to two destinations of one sink
        // cell share the intermediate destination and the segment path.
        let dep = deployment(256.0, 6);
        let relays = select_relays(&dep, 6);
        let pairs = relayed_pairs(&dep);
        let mut found = false;
        'outer: for (i, &(a, slot)) in pairs.iter().enumerate() {
            for &(b, _) in &pairs[i + 1..] {
                let (sa, da) = dep.primary_pairs[a as usize];
                let (sb, db) = dep.primary_pairs[b as usize];
                if dep.primary_cell_of(sa) != dep.primary_cell_of(sb) || dep.primary_cell_of(da) != dep.primary_cell_of(db) {
                    continue;
                }
                let mut t =
                    Transport::new(&dep, &relays).with_window(window_all(64 * 30)).with_script(&[(slot, a), (slot, b)]);
                t.run();
                let bundles = t.bundles();
                if bundles[0].entry != bundles[1].entry {
                    continue;
                }
                assert_eq!(bundles[0].target, bundles[1].target);
                let recs = t.packet_records();
                assert!(recs[0].delivery_slot.is_some());
                assert_eq!(recs[0].delivery_slot, recs[1].delivery_slot);
                found = true;
                break 'outer;
            }
        }
        assert!(found);
    }

    #[test]
    fn steady_run_keeps_every_invariant() {
        let cfg = SimConfig { n: 128.0, seed: 5, frames: 8, warmup_frames: 2, ..Default::default() };
        let dep = Deployment::build(&cfg).unwrap();
        let relays = select_relays(&dep, 5);
        let mut t = Transport::new(&dep, &relays);
        t.run();
        let m = t.measure();
        assert!(m.invariants.all_clear(), "{:?}", m.invariants);
        assert!(m.invariants.checks > 0);
        assert_eq!(m.undrained, 0);
        assert!(m.primary_delivered_from_window >= MIN_CONFIDENT_PACKETS);
        assert!(m.secondary_delivered_from_window >= MIN_CONFIDENT_PACKETS);
        assert_eq!(t.in_flight(), (0, 0));
        assert!(m.bundles_within_frame == m.bundles_reassembled);
        let r = t.rate_report();
        assert!(r.snapshots > 0 && r.secondary.links > 0 && r.primary.links > 0);
    }

    #[test]
    fn run_window_from_config() {
        let cfg = SimConfig { frames: 10, warmup_frames: 4, drain_frames: 6, audit_frames: Some(5), ..Default::default() };
        let w = RunWindow::from_config(&cfg);
        assert_eq!(w.measure_start, 256);
        assert_eq!(w.inject_end, 640);
        assert_eq!(w.hard_end, 1024);
        assert_eq!(w.audit_start, 258);
        assert_eq!(w.audit_end, 273);
        let full = RunWindow::from_config(&SimConfig { audit_frames: None, ..cfg });
        assert_eq!(full.audit_end, 640);
    }

    #[test]
    fn trace_rows() {
        let rows = vec![
            PacketRecord { id: 0, tier: Tier::Primary, creation_slot: 3, delivery_slot: Some(20), path_length: 4, segments: 41 },
            PacketRecord { id: 1, tier: Tier::Secondary, creation_slot: 7, delivery_slot: None, path_length: 9, segments: 1 },
        ];
        let mut buf = Vec::new();
        write_trace(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "id,tier,creation_slot,delivery_slot,path_length,segments");
        assert_eq!(lines[1], "0,primary,3,20,4,41");
        assert_eq!(lines[2], "1,secondary,7,,9,1");
    }
}
