//! Slot structure, 64-slot round-robin cluster activation, preservation
//! regions and collection-region admission.
//!
//! Time runs in primary slots. Secondary frames span three consecutive
//! primary slots, one per subframe, and each of the first two subframes is
//! cut into 64 secondary slots. A primary slot therefore lasts 64 secondary
//! slots while a secondary frame lasts three primary slots.

use std::collections::BTreeSet;

use crate::geometry::{CellCoord, CellGrid, Point, CLUSTER_SIDE};

/// Slots in one TDMA frame for either tier.
pub const TDMA_SLOTS: u32 = 64;
/// Subframes per secondary frame.
pub const SUBFRAMES: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subframe {
    /// Secondary packets among secondary nodes.
    IntraSecondary,
    /// Primary segments relayed toward their intermediate destinations.
    PrimaryRelay,
    /// Reassembled primary packets handed to primary destinations.
    Delivery,
}

/// Position on the global clock, counted in primary slots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlotIndex(pub u64);

impl SlotIndex {
    /// Slot within the primary TDMA frame, `0..64`.
    pub fn primary_slot(self) -> u32 {
        (self.0 % TDMA_SLOTS as u64) as u32
    }

    pub fn primary_frame(self) -> u64 {
        self.0 / TDMA_SLOTS as u64
    }

    pub fn secondary_frame(self) -> u64 {
        self.0 / SUBFRAMES
    }

    pub fn subframe(self) -> Subframe {
        match self.0 % SUBFRAMES {
            0 => Subframe::IntraSecondary,
            1 => Subframe::PrimaryRelay,
            _ => Subframe::Delivery,
        }
    }

    /// Secondary-slot clock value at the start of secondary slot `s` of this
    /// primary slot. Only the two slotted subframes advance the clock of
    /// their own traffic, so the value is `64 * frame + s`.
    pub fn secondary_clock(self, s: u32) -> u64 {
        self.secondary_frame() * TDMA_SLOTS as u64 + s as u64
    }
}

/// TDMA slot in which a cell is active: local coordinates `(u, v)` inside
/// its 8x8 cluster map to slot `8u + v`.
pub fn cell_slot(c: CellCoord) -> u32 {
    CLUSTER_SIDE * (c.col % CLUSTER_SIDE) + (c.row % CLUSTER_SIDE)
}

pub fn active_cells(grid: &CellGrid, slot: u32) -> Vec<CellCoord> {
    assert!(slot < TDMA_SLOTS);
    let (u, v) = (slot / CLUSTER_SIDE, slot % CLUSTER_SIDE);
    let mut out = Vec::new();
    let mut col = u;
    while col < grid.side {
        let mut row = v;
        while row < grid.side {
            out.push(CellCoord::new(col, row));
            row += CLUSTER_SIDE;
        }
        col += CLUSTER_SIDE;
    }
    out
}

/// Inclusive rectangle of cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CellRect {
    pub col0: u32,
    pub col1: u32,
    pub row0: u32,
    pub row1: u32,
}

impl CellRect {
    pub fn contains(&self, c: CellCoord) -> bool {
        (self.col0..=self.col1).contains(&c.col) && (self.row0..=self.row1).contains(&c.row)
    }

    pub fn intersects(&self, other: &CellRect) -> bool {
        self.col0 <= other.col1
            && other.col0 <= self.col1
            && self.row0 <= other.row1
            && other.row0 <= self.row1
    }

    pub fn cell_count(&self) -> usize {
        ((self.col1 - self.col0 + 1) * (self.row1 - self.row0 + 1)) as usize
    }

    pub fn cells(&self) -> impl Iterator<Item = CellCoord> + '_ {
        (self.row0..=self.row1)
            .flat_map(move |r| (self.col0..=self.col1).map(move |c| CellCoord::new(c, r)))
    }

    /// Geometric extent on the unit square for a grid of `side` cells:
    /// `(x0, x1, y0, y1)`.
    pub fn extent(&self, side: u32) -> (f64, f64, f64, f64) {
        let s = 1.0 / side as f64;
        (
            self.col0 as f64 * s,
            (self.col1 + 1) as f64 * s,
            self.row0 as f64 * s,
            (self.row1 + 1) as f64 * s,
        )
    }

    pub fn contains_point(&self, side: u32, p: Point) -> bool {
        let (x0, x1, y0, y1) = self.extent(side);
        p.x >= x0 && p.x < x1 && p.y >= y0 && p.y < y1
    }
}

/// The primary grid together with its exact secondary refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridPair {
    pub primary: CellGrid,
    pub secondary: CellGrid,
    pub refinement: u32,
}

impl GridPair {
    pub fn new(primary: CellGrid, secondary: CellGrid) -> Self {
        assert_eq!(secondary.side % primary.side, 0, "secondary grid must refine primary grid");
        Self { primary, secondary, refinement: secondary.side / primary.side }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegionKind {
    Preservation,
    Collection,
}

/// 3x3 block of primary cells around `center` plus one ring of secondary
/// cells, clipped at the unit square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    pub kind: RegionKind,
    pub center: CellCoord,
    pub primary_cells: CellRect,
    pub secondary_cells: CellRect,
}

impl Region {
    pub fn around(center: CellCoord, kind: RegionKind, grids: &GridPair) -> Self {
        let kp = grids.primary.side;
        let ks = grids.secondary.side;
        let q = grids.refinement;
        let primary_cells = CellRect {
            col0: center.col.saturating_sub(1),
            col1: (center.col + 1).min(kp - 1),
            row0: center.row.saturating_sub(1),
            row1: (center.row + 1).min(kp - 1),
        };
        let secondary_cells = CellRect {
            col0: (primary_cells.col0 * q).saturating_sub(1),
            col1: ((primary_cells.col1 + 1) * q).min(ks - 1),
            row0: (primary_cells.row0 * q).saturating_sub(1),
            row1: ((primary_cells.row1 + 1) * q).min(ks - 1),
        };
        Self { kind, center, primary_cells, secondary_cells }
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.secondary_cells.intersects(&other.secondary_cells)
    }
}

pub fn preservation_regions(active_tx_cells: &[CellCoord], grids: &GridPair) -> Vec<Region> {
    active_tx_cells
        .iter()
        .map(|&c| Region::around(c, RegionKind::Preservation, grids))
        .collect()
}

/// Greedily admits collection regions around the requested sink cells in the
/// order given, skipping any that overlap a preservation region or an
/// already admitted collection region. Returns the admitted regions and the
/// deferred sinks.
pub fn place_collection_regions(
    sinks: &[CellCoord],
    preservation: &[Region],
    grids: &GridPair,
) -> (Vec<Region>, Vec<CellCoord>) {
    let mut admitted: Vec<Region> = Vec::new();
    let mut deferred = Vec::new();
    for &sink in sinks {
        let region = Region::around(sink, RegionKind::Collection, grids);
        let clash = preservation.iter().chain(admitted.iter()).any(|r| r.overlaps(&region));
        if clash {
            deferred.push(sink);
        } else {
            admitted.push(region);
        }
    }
    (admitted, deferred)
}

/// Activation state of one primary slot.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSchedule {
    pub slot: SlotIndex,
    pub grids: GridPair,
    /// Primary cells active in this slot, with or without traffic.
    pub active_primary: Vec<CellCoord>,
    /// One region per active primary cell that actually transmits.
    pub preservation: Vec<Region>,
    /// Admitted collection regions; only populated in the delivery subframe.
    pub collections: Vec<Region>,
}

impl SlotSchedule {
    /// `has_traffic` reports whether an active primary cell transmits.
    pub fn new(slot: SlotIndex, grids: GridPair, has_traffic: impl Fn(CellCoord) -> bool) -> Self {
        let active_primary = active_cells(&grids.primary, slot.primary_slot());
        let tx: Vec<CellCoord> = active_primary.iter().copied().filter(|&c| has_traffic(c)).collect();
        let preservation = preservation_regions(&tx, &grids);
        Self { slot, grids, active_primary, preservation, collections: Vec::new() }
    }

    /// Active secondary cells in secondary slot `s`, before blocking.
    pub fn active_secondary(&self, s: u32) -> Vec<CellCoord> {
        active_cells(&self.grids.secondary, s)
    }

    pub fn is_blocked(&self, scell: CellCoord) -> bool {
        self.preservation.iter().any(|r| r.secondary_cells.contains(scell))
    }

    pub fn blocked_secondary_cells(&self) -> BTreeSet<CellCoord> {
        self.preservation.iter().flat_map(|r| r.secondary_cells.cells()).collect()
    }

    pub fn admit_collections(&mut self, sinks: &[CellCoord]) -> Vec<CellCoord> {
        let (admitted, deferred) = place_collection_regions(sinks, &self.preservation, &self.grids);
        self.collections = admitted;
        deferred
    }
}
