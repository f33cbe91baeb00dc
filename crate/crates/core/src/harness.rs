//! Parameter sweeps, log-log exponent fits and scaling-law verdicts.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::geometry::Deployment;
use crate::par;
use crate::phy::RateReport;
use crate::routing::select_relays;
use crate::transport::{relay_count, InvariantCounters, PacketRecord, RawMetrics, Transport};

/// Runs above this primary drop rate are marked invalid.
pub const MAX_DROP_RATE: f64 = 0.01;

/// Cartesian product of densities, cell-area scales and seeds over a base
/// configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub base: SimConfig,
    pub ns: Vec<f64>,
    pub ap_scales: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepPlan {
    pub fn configs(&self) -> Vec<SimConfig> {
        let mut out = Vec::with_capacity(self.ns.len() * self.ap_scales.len() * self.seeds.len());
        for &n in &self.ns {
            for &ap_scale in &self.ap_scales {
                for &seed in &self.seeds {
                    out.push(SimConfig { n, ap_scale, seed, ..self.base.clone() });
                }
            }
        }
        out
    }
}

/// Metrics of one simulated point. Throughputs are per S-D pair per slot of
/// the tier's own clock and `T = lambda * pairs`. Delays are in the tier's
/// own slots; `d_p` covers packets carried by the secondary tier and
/// `d_p_all` adds those delivered directly to an adjacent cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub n: f64,
    pub beta: f64,
    pub m: f64,
    pub ap_scale: f64,
    /// Realised primary and secondary cell areas.
    pub a_p: f64,
    pub a_s: f64,
    pub k_p: u32,
    pub k_s: u32,
    pub relays: usize,
    pub lambda_p: f64,
    pub t_p: f64,
    pub d_p: f64,
    pub d_p_all: f64,
    pub lambda_s: f64,
    pub t_s: f64,
    pub d_s: f64,
    pub min_sinr_primary: Option<f64>,
    pub min_sinr_delivery: Option<f64>,
    pub min_sinr_secondary: Option<f64>,
    pub min_rate_primary: Option<f64>,
    pub min_rate_delivery: Option<f64>,
    pub min_rate_secondary: Option<f64>,
    pub drop_rate: f64,
    pub valid: bool,
    pub seed: u64,

    pub relayed_delay: Option<f64>,
    pub segment_traversal: Option<f64>,
    pub additive_constant: Option<f64>,
    pub delivery_wait: Option<f64>,
    pub max_sync_gap: u64,
    pub bundles_within_frame: u64,
    pub bundles_reassembled: u64,
    pub primary_cells_secondary_relay: usize,
    pub primary_cells_filled: usize,
    pub low_confidence: bool,
    pub half_duplex_conflicts: u64,
    /// Secondary slots covered by the SINR audit.
    pub audited_slots: u64,
    pub invariants: InvariantCounters,
}

fn finite_min(v: f64, links: u64) -> Option<f64> {
    (links > 0).then_some(v)
}

/// Simulates one configuration end to end.
pub fn run_point(cfg: &SimConfig) -> Result<ExperimentResult> {
    run_point_traced(cfg, false).map(|(r, _)| r)
}

/// As [`run_point`], optionally returning every packet's trace row.
pub fn run_point_traced(cfg: &SimConfig, trace: bool) -> Result<(ExperimentResult, Vec<PacketRecord>)> {
    let dep = Deployment::build(cfg)?;
    let relays = select_relays(&dep, cfg.seed);
    let mut transport = Transport::new(&dep, &relays);
    transport.run();
    let raw = transport.measure();
    let audit = transport.rate_report();
    let (captured, filled) = relays.primary_cells_with_secondary_relay();
    let records = if trace { transport.packet_records() } else { Vec::new() };
    Ok((assemble(&dep, &raw, &audit, captured, filled), records))
}

fn assemble(dep: &Deployment, raw: &RawMetrics, audit: &RateReport, captured: usize, filled: usize) -> ExperimentResult {
    let cfg = &dep.config;
    let m = cfg.m();
    let lambda_p = raw.primary_throughput();
    let lambda_s = raw.secondary_throughput();
    let drop_rate = raw.primary_drop_rate();
    ExperimentResult {
        n: cfg.n,
        beta: cfg.beta,
        m,
        ap_scale: cfg.ap_scale,
        a_p: dep.primary_grid.cell_area(),
        a_s: dep.secondary_grid.cell_area(),
        k_p: dep.primary_grid.side,
        k_s: dep.secondary_grid.side,
        relays: relay_count(m),
        lambda_p,
        t_p: lambda_p * dep.primary_pairs.len() as f64,
        d_p: raw.relayed_delay.unwrap_or(f64::NAN),
        d_p_all: raw.primary_delay.unwrap_or(f64::NAN),
        lambda_s,
        t_s: lambda_s * dep.secondary_pairs.len() as f64,
        d_s: raw.secondary_delay.unwrap_or(f64::NAN),
        min_sinr_primary: finite_min(audit.primary.min_sinr, audit.primary.links),
        min_sinr_delivery: finite_min(audit.delivery.min_sinr, audit.delivery.links),
        min_sinr_secondary: finite_min(audit.secondary.min_sinr, audit.secondary.links),
        min_rate_primary: audit.primary.value(),
        min_rate_delivery: audit.delivery.value(),
        min_rate_secondary: audit.secondary.value(),
        drop_rate,
        valid: drop_rate <= MAX_DROP_RATE
            && raw.invariants.all_clear()
            && raw.relayed_delay.is_some()
            && raw.secondary_delay.is_some(),
        seed: cfg.seed,
        relayed_delay: raw.relayed_delay,
        segment_traversal: raw.segment_traversal,
        additive_constant: raw.additive_constant,
        delivery_wait: raw.delivery_wait,
        max_sync_gap: raw.max_sync_gap,
        bundles_within_frame: raw.bundles_within_frame,
        bundles_reassembled: raw.bundles_reassembled,
        primary_cells_secondary_relay: captured,
        primary_cells_filled: filled,
        low_confidence: raw.low_confidence,
        half_duplex_conflicts: audit.half_duplex_conflicts,
        audited_slots: audit.snapshots,
        invariants: raw.invariants,
    }
}

/// Runs every configuration of the plan on the data-parallel path.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<ExperimentResult>> {
    par::map(&plan.configs(), run_point).into_iter().collect()
}

/// Sequential reference for [`run_sweep`]; results are identical.
pub fn run_sweep_sequential(plan: &SweepPlan) -> Result<Vec<ExperimentResult>> {
    par::map_sequential(&plan.configs(), run_point).into_iter().collect()
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest absolute residual in log space.
    pub residual: f64,
    pub points: usize,
}

pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Result<ExponentFit> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!("{} x values but {} y values", xs.len(), ys.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let line = least_squares(&lx, &ly)?;
    let residual = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - line.intercept - line.slope * x).abs())
        .fold(0.0, f64::max);
    Ok(ExponentFit { slope: line.slope, intercept: line.intercept, residual, points: xs.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares `y = intercept + slope * x`. Needs at least three
/// points and two distinct abscissae.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let distinct = {
        let mut v: Vec<f64> = xs.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if xs.len() < 3 || distinct < 2 {
        return Err(Error::Insufficient(format!("{} points, {distinct} distinct", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit { slope, intercept: my - slope * mx })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Allowed deviation of a fitted exponent from one.
    pub slope: f64,
    /// Allowed max/min ratio of a quantity expected to be constant.
    pub constancy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { slope: 0.15, constancy: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    /// Fitted exponent, max/min ratio or linear slope, depending on the check.
    pub value: Option<f64>,
    /// Largest absolute log residual of an exponent fit.
    pub residual: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub tolerances: Tolerances,
    pub points: usize,
    pub verdicts: Vec<Verdict>,
}

impl FitReport {
    pub fn all_pass(&self) -> bool {
        !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.status == Status::Pass)
    }

    pub fn get(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }
}

/// Seed-averaged metrics of one `(n, beta, ap_scale)` point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMean {
    pub n: f64,
    pub beta: f64,
    pub m: f64,
    pub ap_scale: f64,
    pub a_p: f64,
    pub a_s: f64,
    pub lambda_p: f64,
    pub t_p: f64,
    pub d_p: f64,
    pub lambda_s: f64,
    pub t_s: f64,
    pub d_s: f64,
    pub runs: usize,
}

/// Averages valid results over seeds. Points without a valid run vanish.
pub fn aggregate(results: &[ExperimentResult]) -> Vec<PointMean> {
    let mut groups: BTreeMap<(u64, u64, u64), Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.valid) {
        groups.entry((r.n.to_bits(), r.beta.to_bits(), r.ap_scale.to_bits())).or_default().push(r);
    }
    let mut out: Vec<PointMean> = groups
        .into_values()
        .map(|rs| {
            let mean = |f: fn(&ExperimentResult) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            PointMean {
                n: rs[0].n,
                beta: rs[0].beta,
                m: rs[0].m,
                ap_scale: rs[0].ap_scale,
                a_p: mean(|r| r.a_p),
                a_s: mean(|r| r.a_s),
                lambda_p: mean(|r| r.lambda_p),
                t_p: mean(|r| r.t_p),
                d_p: mean(|r| r.d_p),
                lambda_s: mean(|r| r.lambda_s),
                t_s: mean(|r| r.t_s),
                d_s: mean(|r| r.d_s),
                runs: rs.len(),
            }
        })
        .collect();
    out.sort_by(|a, b| a.n.total_cmp(&b.n).then(a.ap_scale.total_cmp(&b.ap_scale)));
    out
}

type Axis = fn(&PointMean) -> f64;

/// The eight order laws, each as `(name, predictor, observed)` with an
/// expected log-log slope of one.
pub fn scaling_laws() -> Vec<(&'static str, Axis, Axis)> {
    vec![
        ("lambda_s", |p| 1.0 / (p.m * p.a_s.sqrt()), |p| p.lambda_s),
        ("T_s", |p| 1.0 / p.a_s.sqrt(), |p| p.t_s),
        ("D_s", |p| 1.0 / p.a_s.sqrt(), |p| p.d_s),
        ("D_s_vs_lambda_s", |p| p.m * p.lambda_s, |p| p.d_s),
        ("lambda_p", |p| 1.0 / (p.n * p.a_p), |p| p.lambda_p),
        ("T_p", |p| 1.0 / p.a_p, |p| p.t_p),
        ("D_p", |p| (p.m * p.m.ln()).sqrt() / (p.n * p.a_p), |p| p.d_p),
        ("D_p_vs_lambda_p", |p| (p.m * p.n.ln()).sqrt() * p.lambda_p, |p| p.d_p),
    ]
}

fn exponent_verdict(name: &str, xs: &[f64], ys: &[f64], tol: f64) -> Verdict {
    match fit_exponent(xs, ys) {
        Ok(fit) => Verdict {
            name: name.to_string(),
            status: if (fit.slope - 1.0).abs() <= tol { Status::Pass } else { Status::Fail },
            value: Some(fit.slope),
            residual: Some(fit.residual),
            detail: format!("exponent {:.4} over {} points, max log residual {:.4}", fit.slope, fit.points, fit.residual),
        },
        Err(e) => inconclusive(name, e),
    }
}

fn inconclusive(name: &str, e: Error) -> Verdict {
    Verdict { name: name.to_string(), status: Status::Inconclusive, value: None, residual: None, detail: e.to_string() }
}

/// Max/min ratio of strictly positive values.
pub fn spread(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Insufficient(format!("{} values", values.len())));
    }
    if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("spread needs positive finite values".into()));
    }
    let max = values.iter().copied().fold(f64::MIN, f64::max);
    let min = values.iter().copied().fold(f64::MAX, f64::min);
    Ok(max / min)
}

/// Fits every order law, checks constancy of `lambda_p * n * a_p` and the
/// linear relation `D_p = 3/64 * D_s + C`.
pub fn check_theorems(results: &[ExperimentResult], tol: Tolerances) -> FitReport {
    let points = aggregate(results);
    let mut verdicts = Vec::new();
    for (name, x, y) in scaling_laws() {
        let xs: Vec<f64> = points.iter().map(x).collect();
        let ys: Vec<f64> = points.iter().map(y).collect();
        verdicts.push(exponent_verdict(name, &xs, &ys, tol.slope));
    }

    let base: Vec<&PointMean> = points.iter().filter(|p| p.ap_scale == 1.0).collect();
    let base = if base.len() >= 2 { base } else { points.iter().collect() };
    let constant: Vec<f64> = base.iter().map(|p| p.lambda_p * p.n * p.a_p).collect();
    verdicts.push(match spread(&constant) {
        Ok(r) => Verdict {
            name: "lambda_p_n_a_p".into(),
            status: if r < tol.constancy { Status::Pass } else { Status::Fail },
            value: Some(r),
            residual: None,
            detail: format!("max/min {r:.4} over {} points", constant.len()),
        },
        Err(e) => inconclusive("lambda_p_n_a_p", e),
    });

    let ds: Vec<f64> = points.iter().map(|p| p.d_s).collect();
    let dp: Vec<f64> = points.iter().map(|p| p.d_p).collect();
    verdicts.push(match least_squares(&ds, &dp) {
        Ok(fit) => {
            let nominal = 3.0 / 64.0;
            let ok = (0.5 * nominal..=2.0 * nominal).contains(&fit.slope) && fit.intercept > 0.0;
            Verdict {
                name: "D_p_vs_D_s".into(),
                status: if ok { Status::Pass } else { Status::Fail },
                value: Some(fit.slope),
                residual: None,
                detail: format!("slope {:.5} (nominal {nominal:.5}), intercept {:.3}", fit.slope, fit.intercept),
            }
        }
        Err(e) => inconclusive("D_p_vs_D_s", e),
    });

    FitReport { tolerances: tol, points: points.len(), verdicts }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

pub const CSV_COLUMNS: [&str; 20] = [
    "n", "beta", "m", "a_p", "a_s", "k_p", "k_s", "N", "lambda_p", "T_p", "D_p", "lambda_s", "T_s", "D_s",
    "min_sinr_primary", "min_sinr_delivery", "min_sinr_secondary", "drop_rate", "valid", "seed",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Writes one row per result. Refuses empty input without touching `path`.
pub fn emit(results: &[ExperimentResult], path: &Path, format: Format) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Insufficient("no results to emit".into()));
    }
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, results).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
        }
        Format::Csv => {
            writeln!(w, "{}", CSV_COLUMNS.join(",")).map_err(io_err(path))?;
            for r in results {
                let row = [
                    r.n.to_string(),
                    r.beta.to_string(),
                    r.m.to_string(),
                    r.a_p.to_string(),
                    r.a_s.to_string(),
                    r.k_p.to_string(),
                    r.k_s.to_string(),
                    r.relays.to_string(),
                    r.lambda_p.to_string(),
                    r.t_p.to_string(),
                    r.d_p.to_string(),
                    r.lambda_s.to_string(),
                    r.t_s.to_string(),
                    r.d_s.to_string(),
                    opt(r.min_sinr_primary),
                    opt(r.min_sinr_delivery),
                    opt(r.min_sinr_secondary),
                    r.drop_rate.to_string(),
                    r.valid.to_string(),
                    r.seed.to_string(),
                ];
                writeln!(w, "{}", row.join(",")).map_err(io_err(path))?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn emit_report(report: &FitReport, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(BufWriter::new(file), report)
        .map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law_is_recovered() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.5)).collect();
        let fit = fit_exponent(&xs, &ys).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(fit_exponent(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Insufficient(_))));
        assert!(matches!(fit_exponent(&[1.0, 2.0, 0.0], &[1.0, 2.0, 3.0]), Err(Error::Domain(_))));
        assert!(matches!(fit_exponent(&[1.0, 2.0, 3.0], &[1.0, -2.0, 3.0]), Err(Error::Domain(_))));
        assert!(matches!(fit_exponent(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]), Err(Error::Insufficient(_))));
    }

    proptest! {
        #[test]
        fn slope_recovered_under_scaling(k in -3.0f64..3.0, c in 0.01f64..100.0, shift in 0.1f64..10.0) {
            let xs: Vec<f64> = (1..7).map(|i| shift * i as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(k)).collect();
            let fit = fit_exponent(&xs, &ys).unwrap();
            prop_assert!((fit.slope - k).abs() < 1e-9);
        }
    }

    #[test]
    fn spread_values() {
        assert_eq!(spread(&[2.0, 4.0, 3.0]).unwrap(), 2.0);
        assert!(spread(&[1.0]).is_err());
        assert!(spread(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn plan_is_a_cartesian_product() {
        let plan = SweepPlan {
            base: SimConfig::default(),
            ns: vec![64.0, 128.0],
            ap_scales: vec![1.0, 2.0, 4.0],
            seeds: vec![0, 1],
        };
        let cfgs = plan.configs();
        assert_eq!(cfgs.len(), 12);
        assert_eq!(cfgs[0].n, 64.0);
        assert_eq!(cfgs[11].seed, 1);
        assert_eq!(cfgs[11].ap_scale, 4.0);
    }

    #[test]
    fn empty_results_leave_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        assert!(matches!(emit(&[], &path, Format::Csv), Err(Error::Insufficient(_))));
        assert!(!path.exists());
    }

    #[test]
    fn check_theorems_without_data_is_inconclusive() {
        let report = check_theorems(&[], Tolerances::default());
        assert!(!report.all_pass());
        assert!(report.verdicts.iter().all(|v| v.status == Status::Inconclusive));
    }
}
