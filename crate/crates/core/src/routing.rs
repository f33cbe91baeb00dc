//! Horizontal-then-vertical data paths, designated relays and path load.

use rand::Rng;

use crate::geometry::{CellCoord, CellGrid, Deployment, NodeId, Tier};
use crate::rng::{stream, Stream};

/// Ordered cells from the source cell to the destination cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellPath {
    pub tier: Tier,
    pub cells: Vec<CellCoord>,
}

impl CellPath {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn first(&self) -> CellCoord {
        self.cells[0]
    }

    pub fn last(&self) -> CellCoord {
        *self.cells.last().unwrap()
    }

    /// Consecutive cells share an edge and the path turns at most once,
    /// from horizontal to vertical.
    pub fn is_valid_hv(&self) -> bool {
        let mut turned = false;
        for w in self.cells.windows(2) {
            if !w[0].is_adjacent(w[1]) {
                return false;
            }
            let vertical = w[0].col == w[1].col;
            if vertical {
                turned = true;
            } else if turned {
                return false;
            }
        }
        true
    }
}

/// Next cell on the HV path from `current` toward `dst`, or `None` once there.
pub fn next_hop(current: CellCoord, dst: CellCoord) -> Option<CellCoord> {
    use std::cmp::Ordering::*;
    match current.col.cmp(&dst.col) {
        Less => Some(CellCoord::new(current.col + 1, current.row)),
        Greater => Some(CellCoord::new(current.col - 1, current.row)),
        Equal => match current.row.cmp(&dst.row) {
            Less => Some(CellCoord::new(current.col, current.row + 1)),
            Greater => Some(CellCoord::new(current.col, current.row - 1)),
            Equal => None,
        },
    }
}

/// Cells preceding the destination on the HV path, i.e. path length minus one.
pub fn hop_count(src: CellCoord, dst: CellCoord) -> u32 {
    src.col.abs_diff(dst.col) + src.row.abs_diff(dst.row)
}

pub fn hv_path(src: CellCoord, dst: CellCoord, grid: &CellGrid) -> CellPath {
    debug_assert!(grid.contains(src) && grid.contains(dst));
    let mut cells = Vec::with_capacity(hop_count(src, dst) as usize + 1);
    let mut cur = src;
    cells.push(cur);
    while let Some(next) = next_hop(cur, dst) {
        cells.push(next);
        cur = next;
    }
    CellPath { tier: grid.tier, cells }
}

/// Designated relay per cell, fixed for a whole run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelayAssignment {
    /// Drawn among all nodes of both tiers in each primary cell.
    pub primary: Vec<Option<NodeId>>,
    /// Drawn among secondary nodes in each secondary cell.
    pub secondary: Vec<Option<NodeId>>,
    secondary_offset: u32,
}

impl RelayAssignment {
    pub fn is_secondary(&self, id: NodeId) -> bool {
        id.0 >= self.secondary_offset
    }

    /// Fraction of non-empty primary cells whose designated relay is a
    /// secondary node.
    pub fn secondary_capture_fraction(&self) -> f64 {
        let (mut filled, mut captured) = (0usize, 0usize);
        for id in self.primary.iter().flatten() {
            filled += 1;
            captured += self.is_secondary(*id) as usize;
        }
        if filled == 0 {
            0.0
        } else {
            captured as f64 / filled as f64
        }
    }

    pub fn primary_cells_with_secondary_relay(&self) -> (usize, usize) {
        let filled = self.primary.iter().flatten().count();
        let captured = self.primary.iter().flatten().filter(|id| self.is_secondary(**id)).count();
        (captured, filled)
    }
}

pub fn select_relays(deployment: &Deployment, seed: u64) -> RelayAssignment {
    let mut rng = stream(seed, Stream::Relays);
    let occ = &deployment.occupancy;
    let primary = (0..deployment.primary_grid.cell_count())
        .map(|cell| {
            let prim = occ.primary_by_pcell.members(cell);
            let sec = occ.secondary_by_pcell.members(cell);
            let total = prim.len() + sec.len();
            (total > 0).then(|| {
                let pick = rng.random_range(0..total);
                NodeId(if pick < prim.len() { prim[pick] } else { sec[pick - prim.len()] })
            })
        })
        .collect();
    let secondary = (0..deployment.secondary_grid.cell_count())
        .map(|cell| {
            let sec = occ.secondary_by_scell.members(cell);
            (!sec.is_empty()).then(|| NodeId(sec[rng.random_range(0..sec.len())]))
        })
        .collect();
    RelayAssignment { primary, secondary, secondary_offset: deployment.primary_nodes.len() as u32 }
}

/// Number of S-D paths covering each cell (row-major), counted with
/// difference arrays so the cost is linear in pairs plus cells.
pub fn paths_through_cell(pairs: &[(CellCoord, CellCoord)], grid: &CellGrid) -> Vec<u32> {
    let k = grid.side as usize;
    // Horizontal legs accumulate along rows, vertical legs along columns.
    let mut row_diff = vec![0i64; k * (k + 1)];
    let mut col_diff = vec![0i64; k * (k + 1)];
    for &(s, d) in pairs {
        let (lo, hi) = (s.col.min(d.col) as usize, s.col.max(d.col) as usize);
        let r = s.row as usize;
        row_diff[r * (k + 1) + lo] += 1;
        row_diff[r * (k + 1) + hi + 1] -= 1;
        if s.row != d.row {
            // The turn cell (d.col, s.row) was already counted by the row leg.
            let (lo, hi) = if d.row > s.row {
                (s.row as usize + 1, d.row as usize)
            } else {
                (d.row as usize, s.row as usize - 1)
            };
            let c = d.col as usize;
            col_diff[c * (k + 1) + lo] += 1;
            col_diff[c * (k + 1) + hi + 1] -= 1;
        }
    }
    let mut counts = vec![0i64; k * k];
    for r in 0..k {
        let mut acc = 0;
        for c in 0..k {
            acc += row_diff[r * (k + 1) + c];
            counts[r * k + c] += acc;
        }
    }
    for c in 0..k {
        let mut acc = 0;
        for r in 0..k {
            acc += col_diff[c * (k + 1) + r];
            counts[r * k + c] += acc;
        }
    }
    counts.into_iter().map(|v| v as u32).collect()
}
