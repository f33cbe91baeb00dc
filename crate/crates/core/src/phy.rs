//! Pathloss, transmit power, SINR and the per-category rate audit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{NodeId, Point};
use crate::par;

/// Channel power gain `r^-alpha`.
pub fn pathloss(r: f64, alpha: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("pathloss distance must be positive, got {r}")));
    }
    Ok(r.powf(-alpha))
}

/// `P * a^(alpha/2)`: received power one cell away stays independent of the
/// cell size.
pub fn tx_power(cell_area: f64, power_const: f64, alpha: f64) -> f64 {
    power_const * cell_area.powf(alpha / 2.0)
}

pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinkSample {
    pub tx: Point,
    pub rx: Point,
    pub tx_power: f64,
    pub interferers: Vec<(Point, f64)>,
    pub noise: f64,
}

/// Pathloss from a squared distance.
fn gain_sq(d2: f64, alpha: f64) -> f64 {
    if alpha == 4.0 {
        1.0 / (d2 * d2)
    } else {
        d2.powf(-alpha / 2.0)
    }
}

pub fn sinr(link: &LinkSample, alpha: f64) -> Result<f64> {
    let signal = link.tx_power * pathloss(link.tx.dist(link.rx), alpha)?;
    let mut interference = 0.0;
    for &(pos, power) in &link.interferers {
        let d2 = pos.dist2(link.rx);
        if d2 <= 0.0 {
            return Err(Error::Domain("interferer co-located with receiver".into()));
        }
        interference += power * gain_sq(d2, alpha);
    }
    Ok(signal / (link.noise + interference))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkCategory {
    /// Primary source to the secondary relays of the neighbouring cell.
    PrimaryReception,
    /// Intermediate destination to primary destination in a sink cell.
    Delivery,
    /// Secondary relay to secondary relay, own traffic or primary segments.
    IntraSecondary,
}

/// One transmitter and its intended receivers during a secondary slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmission {
    pub category: LinkCategory,
    pub tx_node: NodeId,
    pub tx: Point,
    pub power: f64,
    pub receivers: Vec<(NodeId, Point)>,
}

/// All transmitters on the air during one secondary slot.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AirtimeSnapshot {
    pub primary_slot: u64,
    pub secondary_slot: u32,
    pub transmissions: Vec<Transmission>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryMin {
    pub links: u64,
    pub min_sinr: f64,
    pub min_rate: f64,
}

impl Default for CategoryMin {
    fn default() -> Self {
        Self { links: 0, min_sinr: f64::INFINITY, min_rate: f64::INFINITY }
    }
}

impl CategoryMin {
    fn push(&mut self, sinr: f64) {
        self.links += 1;
        self.min_sinr = self.min_sinr.min(sinr);
        self.min_rate = self.min_rate.min(rate(sinr));
    }

    fn merge(self, other: CategoryMin) -> CategoryMin {
        CategoryMin {
            links: self.links + other.links,
            min_sinr: self.min_sinr.min(other.min_sinr),
            min_rate: self.min_rate.min(other.min_rate),
        }
    }

    /// Minimum rate, `None` when nothing was audited.
    pub fn value(&self) -> Option<f64> {
        (self.links > 0).then_some(self.min_rate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct RateReport {
    pub primary: CategoryMin,
    pub delivery: CategoryMin,
    pub secondary: CategoryMin,
    pub snapshots: u64,
    /// Receptions skipped because the receiver was itself transmitting.
    pub half_duplex_conflicts: u64,
}

impl RateReport {
    fn category(&mut self, c: LinkCategory) -> &mut CategoryMin {
        match c {
            LinkCategory::PrimaryReception => &mut self.primary,
            LinkCategory::Delivery => &mut self.delivery,
            LinkCategory::IntraSecondary => &mut self.secondary,
        }
    }

    pub fn merge(self, other: RateReport) -> RateReport {
        RateReport {
            primary: self.primary.merge(other.primary),
            delivery: self.delivery.merge(other.delivery),
            secondary: self.secondary.merge(other.secondary),
            snapshots: self.snapshots + other.snapshots,
            half_duplex_conflicts: self.half_duplex_conflicts + other.half_duplex_conflicts,
        }
    }
}

fn audit_snapshot(snap: &AirtimeSnapshot, alpha: f64, noise: f64) -> RateReport {
    let mut report = RateReport { snapshots: 1, ..Default::default() };
    let transmitters: std::collections::BTreeSet<NodeId> = snap.transmissions.iter().map(|t| t.tx_node).collect();
    for (i, t) in snap.transmissions.iter().enumerate() {
        let interferers: Vec<(Point, f64)> = snap
            .transmissions
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, o)| (o.tx, o.power))
            .collect();
        let mut link = LinkSample { tx: t.tx, rx: t.tx, tx_power: t.power, interferers, noise };
        for &(rx_node, rx) in &t.receivers {
            if transmitters.contains(&rx_node) {
                report.half_duplex_conflicts += 1;
                continue;
            }
            link.rx = rx;
            match sinr(&link, alpha) {
                Ok(v) => report.category(t.category).push(v),
                Err(_) => report.half_duplex_conflicts += 1,
            }
        }
    }
    report
}

/// SINR of every scheduled reception against the full set of concurrent
/// transmitters, reduced to per-category minima.
pub fn min_rate_audit(snapshots: &[AirtimeSnapshot], alpha: f64, noise: f64) -> RateReport {
    par::map(snapshots, |s| audit_snapshot(s, alpha, noise))
        .into_iter()
        .fold(RateReport::default(), RateReport::merge)
}
