//! Two-tier deployment: Poisson node placement, primary and secondary cell
//! grids, source-destination pairing and per-cell occupancy.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

/// Side length of a TDMA cluster in cells; a cluster holds 64 cells.
pub const CLUSTER_SIDE: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Primary,
    Secondary,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist2(self, other: Point) -> f64 {
        let (dx, dy) = (self.x - other.x, self.y - other.y);
        dx * dx + dy * dy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub tier: Tier,
    pub position: Point,
    pub sd_peer: Option<NodeId>,
}

/// Column/row address of a cell. Column grows with `x`, row with `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellCoord {
    pub col: u32,
    pub row: u32,
}

impl CellCoord {
    pub const fn new(col: u32, row: u32) -> Self {
        Self { col, row }
    }

    /// Chebyshev distance in cells.
    pub fn chebyshev(self, other: CellCoord) -> u32 {
        self.col.abs_diff(other.col).max(self.row.abs_diff(other.row))
    }

    pub fn is_adjacent(self, other: CellCoord) -> bool {
        self.col.abs_diff(other.col) + self.row.abs_diff(other.row) == 1
    }
}

/// Square tessellation of the unit square into `side x side` cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellGrid {
    pub side: u32,
    pub tier: Tier,
}

impl CellGrid {
    pub fn new(side: u32, tier: Tier) -> Self {
        assert!(side > 0, "grid needs at least one cell");
        Self { side, tier }
    }

    pub fn cell_area(&self) -> f64 {
        let k = self.side as f64;
        1.0 / (k * k)
    }

    pub fn cell_side(&self) -> f64 {
        1.0 / self.side as f64
    }

    pub fn cell_count(&self) -> usize {
        (self.side as usize) * (self.side as usize)
    }

    pub fn contains(&self, c: CellCoord) -> bool {
        c.col < self.side && c.row < self.side
    }

    pub fn index(&self, c: CellCoord) -> usize {
        debug_assert!(self.contains(c));
        c.row as usize * self.side as usize + c.col as usize
    }

    pub fn coord(&self, index: usize) -> CellCoord {
        let k = self.side as usize;
        CellCoord::new((index % k) as u32, (index / k) as u32)
    }

    pub fn cell_of(&self, p: Point) -> CellCoord {
        let k = self.side as f64;
        let clamp = |v: f64| ((v * k).floor().max(0.0) as u32).min(self.side - 1);
        CellCoord::new(clamp(p.x), clamp(p.y))
    }

    pub fn center(&self, c: CellCoord) -> Point {
        let s = self.cell_side();
        Point::new((c.col as f64 + 0.5) * s, (c.row as f64 + 0.5) * s)
    }

    pub fn cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        (0..self.cell_count()).map(move |i| self.coord(i))
    }
}

/// Draws a homogeneous Poisson point process of the given intensity on the
/// unit square.
pub fn sample_ppp<R: Rng + ?Sized>(density: f64, rng: &mut R) -> Result<Vec<Point>> {
    if !(density > 0.0) {
        return Err(Error::Domain(format!("PPP density must be positive, got {density}")));
    }
    let poisson = Poisson::new(density)
        .map_err(|e| Error::Domain(format!("PPP density {density}: {e}")))?;
    let count = poisson.sample(rng) as usize;
    Ok((0..count)
        .map(|_| Point::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect())
}

/// Primary grid from the minimum connectivity area `ap_scale * 2 ln n / n`.
///
/// Side counts of 8 or more are rounded down to a multiple of 8 so clusters
/// tile exactly. Below 8 the grid is a single partial cluster; fewer than two
/// cells per side cannot host a neighbouring relay cell and is rejected.
pub fn primary_cell_area(n: f64, ap_scale: f64) -> Result<(f64, CellGrid)> {
    if !(n > std::f64::consts::E) {
        return Err(Error::Config(format!("primary density n = {n} must exceed e")));
    }
    if !(ap_scale >= 1.0) {
        return Err(Error::Config(format!("ap_scale = {ap_scale} must be at least 1")));
    }
    let target = ap_scale * 2.0 * n.ln() / n;
    let mut k = (1.0 / target.sqrt()).floor() as u32;
    while k > 0 && 1.0 / ((k as f64) * (k as f64)) < target {
        k -= 1;
    }
    if k >= CLUSTER_SIDE {
        k -= k % CLUSTER_SIDE;
    }
    if k < 2 {
        return Err(Error::Config(format!(
            "primary cell area {target:.4} leaves fewer than 2 cells per side"
        )));
    }
    Ok((target, CellGrid::new(k, Tier::Primary)))
}

/// Secondary grid sized so the secondary tier carries the primary load, an
/// exact `q`-fold refinement of the primary grid.
///
/// Returns the target area, the grid and the refinement factor `q`.
pub fn secondary_cell_area(n: f64, beta: f64, primary: &CellGrid) -> Result<(f64, CellGrid, u32)> {
    let m = n.powf(beta);
    if !(m > std::f64::consts::E) {
        return Err(Error::Config(format!("secondary density m = {m} must exceed e")));
    }
    let a_p = primary.cell_area();
    let target = beta * beta * n * n * a_p * a_p / (2.0 * m * m.ln());
    let mut q = (a_p / target).sqrt().floor() as u32;
    while q > 0 && {
        let ks = (primary.side * q) as f64;
        1.0 / (ks * ks) < target
    } {
        q -= 1;
    }
    if q < 1 {
        return Err(Error::Config(format!(
            "secondary cell area {target:.3e} exceeds the primary cell area {a_p:.3e}"
        )));
    }
    Ok((target, CellGrid::new(primary.side * q, Tier::Secondary), q))
}

/// Uniform random matching of `count` nodes into ordered (source,
/// destination) pairs of local indices. With an odd count one uniformly
/// chosen node stays unpaired.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Pairing {
    pub pairs: Vec<(u32, u32)>,
    pub unpaired: Option<u32>,
}

pub fn pair_sd<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Pairing {
    if count < 2 {
        return Pairing { pairs: Vec::new(), unpaired: (count == 1).then_some(0) };
    }
    let mut order: Vec<u32> = (0..count as u32).collect();
    order.shuffle(rng);
    let unpaired = (count % 2 == 1).then(|| order.pop().unwrap());
    let pairs = order.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    Pairing { pairs, unpaired }
}

/// Node ids grouped by cell, stored as one flat array with offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellMembers {
    offsets: Vec<u32>,
    ids: Vec<u32>,
}

impl CellMembers {
    pub fn build(cells: usize, assignment: impl Iterator<Item = (usize, u32)> + Clone) -> Self {
        let mut offsets = vec![0u32; cells + 1];
        for (cell, _) in assignment.clone() {
            offsets[cell + 1] += 1;
        }
        for i in 0..cells {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut ids = vec![0u32; offsets[cells] as usize];
        for (cell, id) in assignment {
            ids[fill[cell] as usize] = id;
            fill[cell] += 1;
        }
        Self { offsets, ids }
    }

    pub fn members(&self, cell: usize) -> &[u32] {
        &self.ids[self.offsets[cell] as usize..self.offsets[cell + 1] as usize]
    }

    pub fn count(&self, cell: usize) -> usize {
        (self.offsets[cell + 1] - self.offsets[cell]) as usize
    }

    pub fn cells(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total(&self) -> usize {
        self.ids.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Occupancy {
    /// Primary node ids per primary cell.
    pub primary_by_pcell: CellMembers,
    /// Secondary node ids per primary cell.
    pub secondary_by_pcell: CellMembers,
    /// Secondary node ids per secondary cell.
    pub secondary_by_scell: CellMembers,
}

/// An immutable two-tier deployment built from one [`SimConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct Deployment {
    pub config: SimConfig,
    pub primary_nodes: Vec<Node>,
    pub secondary_nodes: Vec<Node>,
    pub primary_grid: CellGrid,
    pub secondary_grid: CellGrid,
    /// Secondary cells per primary cell side.
    pub refinement: u32,
    pub primary_target_area: f64,
    pub secondary_target_area: f64,
    pub primary_pairs: Vec<(NodeId, NodeId)>,
    pub secondary_pairs: Vec<(NodeId, NodeId)>,
    pub occupancy: Occupancy,
}

impl Deployment {
    pub fn build(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let (primary_target_area, primary_grid) = primary_cell_area(config.n, config.ap_scale)?;
        let (secondary_target_area, secondary_grid, refinement) =
            secondary_cell_area(config.n, config.beta, &primary_grid)?;

        let primary_points = sample_ppp(config.n, &mut stream(config.seed, Stream::PrimaryPpp))?;
        let secondary_points =
            sample_ppp(config.m(), &mut stream(config.seed, Stream::SecondaryPpp))?;
        let offset = primary_points.len() as u32;

        let mut primary_nodes = make_nodes(&primary_points, Tier::Primary, 0);
        let mut secondary_nodes = make_nodes(&secondary_points, Tier::Secondary, offset);

        let primary_pairs = link_pairs(
            &mut primary_nodes,
            pair_sd(primary_points.len(), &mut stream(config.seed, Stream::PrimaryPairs)),
            0,
        );
        let secondary_pairs = link_pairs(
            &mut secondary_nodes,
            pair_sd(secondary_points.len(), &mut stream(config.seed, Stream::SecondaryPairs)),
            offset,
        );

        let occupancy = Occupancy {
            primary_by_pcell: CellMembers::build(
                primary_grid.cell_count(),
                primary_nodes
                    .iter()
                    .map(|nd| (primary_grid.index(primary_grid.cell_of(nd.position)), nd.id.0)),
            ),
            secondary_by_pcell: CellMembers::build(
                primary_grid.cell_count(),
                secondary_nodes
                    .iter()
                    .map(|nd| (primary_grid.index(primary_grid.cell_of(nd.position)), nd.id.0)),
            ),
            secondary_by_scell: CellMembers::build(
                secondary_grid.cell_count(),
                secondary_nodes.iter().map(|nd| {
                    (secondary_grid.index(secondary_grid.cell_of(nd.position)), nd.id.0)
                }),
            ),
        };

        Ok(Self {
            config: config.clone(),
            primary_nodes,
            secondary_nodes,
            primary_grid,
            secondary_grid,
            refinement,
            primary_target_area,
            secondary_target_area,
            primary_pairs,
            secondary_pairs,
            occupancy,
        })
    }

    pub fn node(&self, id: NodeId) -> &Node {
        let offset = self.primary_nodes.len() as u32;
        if id.0 < offset {
            &self.primary_nodes[id.0 as usize]
        } else {
            &self.secondary_nodes[(id.0 - offset) as usize]
        }
    }

    pub fn position(&self, id: NodeId) -> Point {
        self.node(id).position
    }

    pub fn node_count(&self) -> usize {
        self.primary_nodes.len() + self.secondary_nodes.len()
    }

    pub fn primary_cell_of(&self, id: NodeId) -> CellCoord {
        self.primary_grid.cell_of(self.position(id))
    }

    pub fn secondary_cell_of(&self, id: NodeId) -> CellCoord {
        self.secondary_grid.cell_of(self.position(id))
    }

    /// Secondary cell that contains the given point of a primary cell's
    /// sub-grid, `(sub_col, sub_row)` in `0..q`.
    pub fn secondary_sub_cell(&self, pcell: CellCoord, sub_col: u32, sub_row: u32) -> CellCoord {
        let q = self.refinement;
        CellCoord::new(pcell.col * q + sub_col.min(q - 1), pcell.row * q + sub_row.min(q - 1))
    }

    /// Primary cell enclosing a secondary cell.
    pub fn enclosing_primary(&self, scell: CellCoord) -> CellCoord {
        CellCoord::new(scell.col / self.refinement, scell.row / self.refinement)
    }
}

fn make_nodes(points: &[Point], tier: Tier, offset: u32) -> Vec<Node> {
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| Node { id: NodeId(offset + i as u32), tier, position: p, sd_peer: None })
        .collect()
}

fn link_pairs(nodes: &mut [Node], pairing: Pairing, offset: u32) -> Vec<(NodeId, NodeId)> {
    pairing
        .pairs
        .into_iter()
        .map(|(s, d)| {
            let (src, dst) = (NodeId(offset + s), NodeId(offset + d));
            nodes[s as usize].sd_peer = Some(dst);
            nodes[d as usize].sd_peer = Some(src);
            (src, dst)
        })
        .collect()
}

/// Per-cell counts with connectivity flags.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyReport {
    pub primary_per_pcell: Vec<usize>,
    pub secondary_per_pcell: Vec<usize>,
    pub secondary_per_scell: Vec<usize>,
    pub empty_primary_cell: bool,
    pub empty_secondary_cell: bool,
    /// Some primary cell holds fewer than `relay_count` secondary nodes.
    pub short_relay_cell: bool,
}

impl OccupancyReport {
    /// Fraction of primary cells whose primary count lies in
    /// `[lo, hi] * expected`.
    pub fn primary_concentration(&self, expected: f64, lo: f64, hi: f64) -> f64 {
        concentration(&self.primary_per_pcell, expected, lo, hi)
    }
}

pub fn concentration(counts: &[usize], expected: f64, lo: f64, hi: f64) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    let inside = counts
        .iter()
        .filter(|&&c| (c as f64) >= lo * expected && (c as f64) <= hi * expected)
        .count();
    inside as f64 / counts.len() as f64
}

/// Counts points per cell of a grid.
pub fn count_per_cell(points: &[Point], grid: &CellGrid) -> Vec<usize> {
    let mut counts = vec![0usize; grid.cell_count()];
    for &p in points {
        counts[grid.index(grid.cell_of(p))] += 1;
    }
    counts
}

pub fn cell_occupancy(deployment: &Deployment, relay_count: usize) -> OccupancyReport {
    let occ = &deployment.occupancy;
    let collect = |m: &CellMembers| (0..m.cells()).map(|c| m.count(c)).collect::<Vec<_>>();
    let primary_per_pcell = collect(&occ.primary_by_pcell);
    let secondary_per_pcell = collect(&occ.secondary_by_pcell);
    let secondary_per_scell = collect(&occ.secondary_by_scell);
    OccupancyReport {
        empty_primary_cell: primary_per_pcell.contains(&0),
        empty_secondary_cell: secondary_per_scell.contains(&0),
        short_relay_cell: secondary_per_pcell.iter().any(|&c| c < relay_count),
        primary_per_pcell,
        secondary_per_pcell,
        secondary_per_scell,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config(seed: u64) -> SimConfig {
        SimConfig { n: 128.0, seed, ..Default::default() }
    }

    #[test]
    fn ppp_mean_count_matches_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 10_000;
        let total: usize = (0..reps).map(|_| sample_ppp(100.0, &mut rng).unwrap().len()).sum();
        let mean = total as f64 / reps as f64;
        assert!((97.0..=103.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn ppp_tiny_density_is_almost_always_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let empty = (0..2000).filter(|_| sample_ppp(0.001, &mut rng).unwrap().is_empty()).count();
        assert!(empty >= 1990, "{empty}");
    }

    #[test]
    fn ppp_is_deterministic_and_inside_unit_square() {
        let a = sample_ppp(500.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_ppp(500.0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| (0.0..1.0).contains(&p.x) && (0.0..1.0).contains(&p.y)));
        assert!(sample_ppp(0.0, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn primary_grid_at_ten_thousand() {
        let (target, grid) = primary_cell_area(1e4, 1.0).unwrap();
        // 2 ln(1e4) / 1e4, evaluated by hand.
        assert!((target - 1.842_068e-3).abs() < 1e-8);
        assert_eq!(grid.side, 16);
        assert!((grid.cell_area() - 1.0 / 256.0).abs() < 1e-15);
    }

    #[test]
    fn primary_grid_too_coarse_is_rejected() {
        let e2 = std::f64::consts::E.powi(2);
        assert!(matches!(primary_cell_area(e2, 1.0), Err(Error::Config(_))));
        assert!(primary_cell_area(2.0, 1.0).is_err());
        assert!(primary_cell_area(1e4, 0.5).is_err());
    }

    #[test]
    fn primary_grid_below_one_cluster_uses_plain_floor() {
        let expected = [(64.0, 2), (128.0, 3), (256.0, 4), (512.0, 6), (1024.0, 8)];
        for (n, k) in expected {
            let (target, grid) = primary_cell_area(n, 1.0).unwrap();
            assert_eq!(grid.side, k, "n = {n}");
            assert!(grid.cell_area() >= target);
        }
    }

    #[test]
    fn realized_primary_area_never_below_target() {
        for i in 0..400 {
            let n = 20.0 * 1.03f64.powi(i);
            for scale in [1.0, 1.7, 4.0] {
                if let Ok((target, grid)) = primary_cell_area(n, scale) {
                    assert!(grid.cell_area() >= target, "n = {n}");
                    if grid.side >= CLUSTER_SIDE {
                        assert_eq!(grid.side % CLUSTER_SIDE, 0);
                    }
                }
            }
        }
    }

    #[test]
    fn secondary_target_reduces_to_connectivity_bound() {
        // With a_p exactly 2 ln n / n, the sizing rule collapses to 2 ln m / m.
        let (n, beta) = (100.0f64, 2.0f64);
        let a_p = 2.0 * n.ln() / n;
        let m = n.powf(beta);
        let target = beta * beta * n * n * a_p * a_p / (2.0 * m * m.ln());
        assert!((target - 2.0 * m.ln() / m).abs() < 1e-15);
    }

    #[test]
    fn secondary_grid_at_ten_thousand() {
        let primary = CellGrid::new(16, Tier::Primary);
        let (target, grid, q) = secondary_cell_area(1e4, 2.0, &primary).unwrap();
        // 4 * 1e8 / 65536 / (2 * 1e8 * ln 1e8)
        let hand = 4.0 / (65536.0 * 2.0 * 1e8f64.ln());
        assert!((target - hand).abs() < 1e-18);
        assert!((target - 1.6567e-6).abs() < 1e-9);
        assert_eq!(q, 48);
        assert_eq!(grid.side, 768);
        assert!(grid.cell_area() >= target);
        assert!(grid.cell_area() <= primary.cell_area());
    }

    #[test]
    fn secondary_grid_refines_primary_over_desk_grid() {
        for (n, ks) in [(64.0, 8), (128.0, 18), (256.0, 36), (512.0, 84), (1024.0, 168)] {
            let (_, p) = primary_cell_area(n, 1.0).unwrap();
            let (_, s, q) = secondary_cell_area(n, 2.0, &p).unwrap();
            assert_eq!(s.side, ks);
            assert_eq!(s.side, p.side * q);
        }
    }

    #[test]
    fn pairing_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let two = pair_sd(2, &mut rng);
        assert_eq!(two.pairs.len(), 1);
        assert_eq!(two.unpaired, None);

        let odd = pair_sd(1001, &mut rng);
        assert_eq!(odd.pairs.len(), 500);
        let mut seen: Vec<u32> = odd.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        seen.push(odd.unpaired.unwrap());
        seen.sort_unstable();
        assert_eq!(seen, (0..1001).collect::<Vec<_>>());

        assert!(pair_sd(1, &mut rng).pairs.is_empty());
        assert!(pair_sd(0, &mut rng).pairs.is_empty());

        let a = pair_sd(50, &mut ChaCha8Rng::seed_from_u64(8));
        let b = pair_sd(50, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(a, b);
    }

    #[test]
    fn deployment_is_deterministic_and_consistent() {
        let a = Deployment::build(&small_config(4)).unwrap();
        let b = Deployment::build(&small_config(4)).unwrap();
        assert_eq!(a, b);

        for nd in a.primary_nodes.iter().chain(&a.secondary_nodes) {
            if let Some(peer) = nd.sd_peer {
                let other = a.node(peer);
                assert_eq!(other.sd_peer, Some(nd.id));
                assert_eq!(other.tier, nd.tier);
            }
        }
        assert_eq!(a.primary_pairs.len(), a.primary_nodes.len() / 2);
    }

    #[test]
    fn occupancy_partitions_nodes_and_grids_nest() {
        let dep = Deployment::build(&small_config(2)).unwrap();
        let occ = &dep.occupancy;
        assert_eq!(occ.primary_by_pcell.total(), dep.primary_nodes.len());
        assert_eq!(occ.secondary_by_pcell.total(), dep.secondary_nodes.len());
        assert_eq!(occ.secondary_by_scell.total(), dep.secondary_nodes.len());

        for cell in 0..occ.secondary_by_scell.cells() {
            let scell = dep.secondary_grid.coord(cell);
            let pcell = dep.enclosing_primary(scell);
            for &id in occ.secondary_by_scell.members(cell) {
                let p = dep.position(NodeId(id));
                assert_eq!(dep.secondary_grid.cell_of(p), scell);
                assert_eq!(dep.primary_grid.cell_of(p), pcell);
            }
        }
        assert_eq!(dep.secondary_grid.side % dep.primary_grid.side, 0);

        let report = cell_occupancy(&dep, 1);
        assert_eq!(report.primary_per_pcell.iter().sum::<usize>(), dep.primary_nodes.len());
        assert_eq!(report.secondary_per_scell.iter().sum::<usize>(), dep.secondary_nodes.len());
        assert!(!report.short_relay_cell);
    }

    #[test]
    fn mean_primary_occupancy_at_ten_thousand() {
        let grid = CellGrid::new(16, Tier::Primary);
        let mut mean = 0.0;
        let mut empty_runs = 0;
        let seeds = 100;
        for seed in 0..seeds {
            let pts = sample_ppp(1e4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let counts = count_per_cell(&pts, &grid);
            mean += counts.iter().sum::<usize>() as f64 / counts.len() as f64;
            empty_runs += counts.contains(&0) as usize;
        }
        mean /= seeds as f64;
        assert!((mean - 39.0625).abs() < 0.5, "{mean}");
        // Expected empty-cell probability per run is about 256 * e^-39.
        assert!((empty_runs as f64) / (seeds as f64) < 0.05);
    }

    #[test]
    fn primary_counts_concentrate_around_mean() {
        let grid = CellGrid::new(16, Tier::Primary);
        let expected = 1e4 * grid.cell_area();
        let seeds = 20;
        let avg: f64 = (0..seeds)
            .map(|seed| {
                let pts = sample_ppp(1e4, &mut ChaCha8Rng::seed_from_u64(1000 + seed)).unwrap();
                concentration(&count_per_cell(&pts, &grid), expected, 0.5, 1.5)
            })
            .sum::<f64>()
            / seeds as f64;
        assert!(avg > 0.99, "{avg}");
    }
}
