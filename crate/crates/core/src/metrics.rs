//! Latency bookkeeping, ECDF estimators, utilization and the bandwidth
//! scaling predictor.
//!
//! A packet's latency runs from its generation to the first complete
//! delivery of that packet or of any later packet from the same source. A
//! packet superseded `k` times before its source got through therefore
//! closes at `t + T*k`, where `t` is the delivery delay of the replacement.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyEntry {
    pub source: usize,
    pub seq: u64,
    pub latency_tti: u64,
    /// Number of times the packet was superseded before delivery.
    pub losses: u32,
    /// Still open at the end of the run; `latency_tti` is a lower bound.
    pub censored: bool,
}

/// Latency of packet `seq` from `source`, delivered (possibly through a
/// replacement `k_losses` periods later) at `delivery_tti`.
pub fn close_packet(
    source: usize,
    seq: u64,
    generation_tti: u64,
    delivery_tti: u64,
    k_losses: u32,
) -> Result<LatencyEntry> {
    if delivery_tti < generation_tti {
        return Err(SimError::Internal(format!(
            "packet {seq} of source {source} delivered at {delivery_tti} before generation at {generation_tti}"
        )));
    }
    Ok(LatencyEntry {
        source,
        seq,
        latency_tti: delivery_tti - generation_tti,
        losses: k_losses,
        censored: false,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct SourceLog {
    generation: Vec<u64>,
    closed: Vec<Option<LatencyEntry>>,
    /// Packets before this index are all closed.
    first_open: usize,
}

/// Append-only per-source latency recorder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyLog {
    sources: Vec<SourceLog>,
}

impl LatencyLog {
    pub fn new(n_sources: usize) -> Self {
        Self {
            sources: vec![SourceLog::default(); n_sources],
        }
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    /// Registers packet `seq`; sequence numbers must arrive in order.
    pub fn on_generated(&mut self, source: usize, seq: u64, generation_tti: u64) -> Result<()> {
        let log = &mut self.sources[source];
        if seq as usize != log.generation.len() {
            return Err(SimError::Internal(format!(
                "source {source}: expected packet {}, got {seq}",
                log.generation.len()
            )));
        }
        log.generation.push(generation_tti);
        log.closed.push(None);
        Ok(())
    }

    /// Packet `seq` reached every receiver; closes it and every older open
    /// packet of the same source.
    pub fn on_delivered(&mut self, source: usize, seq: u64, delivery_tti: u64) -> Result<Vec<LatencyEntry>> {
        let log = &mut self.sources[source];
        let last = seq as usize;
        if last >= log.generation.len() {
            return Err(SimError::Internal(format!("source {source}: unknown packet {seq}")));
        }
        let mut out = Vec::new();
        for s in log.first_open..=last {
            if log.closed[s].is_none() {
                let e = close_packet(source, s as u64, log.generation[s], delivery_tti, (last - s) as u32)?;
                log.closed[s] = Some(e);
                out.push(e);
            }
        }
        log.first_open = last + 1;
        Ok(out)
    }

    /// Packs the first `n_packets` packets of every source into a matrix;
    /// packets still open at `end_tti` are censored.
    pub fn into_matrix(&self, n_packets: usize, end_tti: u64) -> Result<LatencyMatrix> {
        let n_users = self.sources.len();
        let mut entries = Vec::with_capacity(n_packets * n_users);
        for s in 0..n_packets {
            for (i, log) in self.sources.iter().enumerate() {
                let gen = *log.generation.get(s).ok_or_else(|| {
                    SimError::Internal(format!("source {i} generated fewer than {n_packets} packets"))
                })?;
                let e = match log.closed[s] {
                    Some(e) => e,
                    None => LatencyEntry {
                        source: i,
                        seq: s as u64,
                        latency_tti: end_tti.saturating_sub(gen),
                        losses: 0,
                        censored: true,
                    },
                };
                entries.push(e);
            }
        }
        Ok(LatencyMatrix {
            n_packets,
            n_users,
            entries,
        })
    }
}

/// `n_packets x n_users` latency matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyMatrix {
    pub n_packets: usize,
    pub n_users: usize,
    pub entries: Vec<LatencyEntry>,
}

impl LatencyMatrix {
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n_users = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_users) {
            return Err(SimError::InvalidInput("ragged latency rows".into()));
        }
        let entries = rows
            .iter()
            .enumerate()
            .flat_map(|(s, row)| {
                row.iter().enumerate().map(move |(i, &v)| LatencyEntry {
                    source: i,
                    seq: s as u64,
                    latency_tti: v,
                    losses: 0,
                    censored: false,
                })
            })
            .collect();
        Ok(Self {
            n_packets: rows.len(),
            n_users,
            entries,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, packet: usize, user: usize) -> &LatencyEntry {
        &self.entries[packet * self.n_users + user]
    }

    pub fn flat(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.latency_tti as f64).collect()
    }

    pub fn column(&self, user: usize) -> Vec<f64> {
        (0..self.n_packets)
            .map(|s| self.get(s, user).latency_tti as f64)
            .collect()
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.n_users)
            .map(|i| self.column(i).iter().sum::<f64>() / self.n_packets as f64)
            .collect()
    }

    pub fn mean(&self) -> Option<f64> {
        if self.entries.is_empty() {
            return None;
        }
        Some(self.flat().iter().sum::<f64>() / self.entries.len() as f64)
    }

    pub fn censored_count(&self) -> usize {
        self.entries.iter().filter(|e| e.censored).count()
    }
}

/// Right-continuous empirical CDF, `F(x) = #{samples <= x} / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfCurve {
    sorted: Vec<f64>,
}

impl EcdfCurve {
    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Distinct sample values with the CDF value reached at each.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (k, &v) in self.sorted.iter().enumerate() {
            let p = (k + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = p,
                _ => out.push((v, p)),
            }
        }
        out
    }

    pub fn mean(&self) -> f64 {
        self.sorted.iter().sum::<f64>() / self.sorted.len() as f64
    }

    /// Smallest sample `x` with `F(x) >= p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.sorted.len();
        let k = ((p.clamp(0.0, 1.0) * n as f64).ceil() as usize).clamp(1, n);
        self.sorted[k - 1]
    }

    pub fn to_csv(&self, value_header: &str) -> String {
        let mut s = format!("{value_header},cdf\n");
        for (x, p) in self.points() {
            let _ = writeln!(s, "{x},{p}");
        }
        s
    }
}

pub fn ecdf(samples: &[f64]) -> Result<EcdfCurve> {
    if samples.is_empty() {
        return Err(SimError::InvalidInput("ECDF of an empty sample set".into()));
    }
    if samples.iter().any(|v| v.is_nan()) {
        return Err(SimError::InvalidInput("ECDF sample is NaN".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EcdfCurve { sorted })
}

/// ECDF of every latency entry pooled together.
pub fn cdf_combined(l: &LatencyMatrix) -> Result<EcdfCurve> {
    ecdf(&l.flat())
}

/// ECDF of the per-user mean latencies.
pub fn cdf_mean(l: &LatencyMatrix) -> Result<EcdfCurve> {
    if l.n_packets == 0 {
        return Err(SimError::InvalidInput("latency matrix has no packets".into()));
    }
    ecdf(&l.column_means())
}

/// One ECDF per user.
pub fn cdf_individual(l: &LatencyMatrix) -> Result<Vec<EcdfCurve>> {
    (0..l.n_users).map(|i| ecdf(&l.column(i))).collect()
}

/// Share of the resources in one accounting window needed to carry one
/// packet from every MBMS user, in percent. Values above 100 are returned
/// as-is and mean the demand cannot be met.
pub fn utilization(packet_bits: f64, n_mbms_users: usize, n_rb_window: f64, n_re: f64, efficiency: f64) -> Result<f64> {
    let capacity = n_rb_window * n_re * efficiency;
    if !(capacity > 0.0) || !capacity.is_finite() {
        return Err(SimError::InvalidInput(format!(
            "utilization denominator must be positive, got {capacity}"
        )));
    }
    Ok(packet_bits * n_mbms_users as f64 / capacity * 100.0)
}

/// Expected ratio of ordinary-user throughput between configuration `b` and
/// `a`, from the RBs left after MBMS traffic: `(1-u_b) rb_b / ((1-u_a) rb_a)`.
/// Utilizations are fractions.
pub fn predicted_throughput_ratio(util_a: f64, rb_a: f64, util_b: f64, rb_b: f64) -> Result<f64> {
    for u in [util_a, util_b] {
        if !(0.0..1.0).contains(&u) {
            return Err(SimError::InvalidInput(format!("utilization {u} outside [0, 1)")));
        }
    }
    if !(rb_a > 0.0) || !(rb_b > 0.0) {
        return Err(SimError::InvalidInput("resource block counts must be positive".into()));
    }
    Ok((1.0 - util_b) * rb_b / ((1.0 - util_a) * rb_a))
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: String,
    pub bandwidth_mhz: f64,
    pub cqi_policy: String,
    pub mean_latency_tti: f64,
    pub mean_throughput_mbps: f64,
    /// Analytic MBMS utilization at the policy's reference CQI.
    pub utilization_pct: f64,
    /// RBs actually spent on CAMs over all RBs of the area's cells.
    pub measured_utilization_pct: f64,
    pub congested: bool,
}

pub const SUMMARY_HEADER: &str = "mode,bandwidth_mhz,cqi_policy,mean_latency_tti,mean_throughput_mbps,utilization_pct,measured_utilization_pct,congested";

impl Summary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{}",
            self.mode,
            self.bandwidth_mhz,
            self.cqi_policy,
            self.mean_latency_tti,
            self.mean_throughput_mbps,
            self.utilization_pct,
            self.measured_utilization_pct,
            self.congested
        )
    }
}

pub fn summary_csv(rows: &[Summary]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Evaluates several ECDFs on the union of their sample points, one column
/// per curve, for overlay plots.
pub fn overlay_csv(x_header: &str, curves: &[(String, &EcdfCurve)]) -> String {
    let mut xs: Vec<f64> = curves.iter().flat_map(|(_, c)| c.samples().iter().copied()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut s = String::from(x_header);
    for (name, _) in curves {
        s.push(',');
        s.push_str(name);
    }
    s.push('\n');
    for x in xs {
        let _ = write!(s, "{x}");
        for (_, c) in curves {
            let _ = write!(s, ",{}", c.eval(x));
        }
        s.push('\n');
    }
    s
}

pub fn write_text(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    std::fs::write(path.as_ref(), contents).map_err(|e| SimError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn close_packet_examples() {
        assert_eq!(close_packet(0, 0, 107, 121, 0).unwrap().latency_tti, 14);
        // Replaced twice, replacement delivered 14 TTIs into its own period.
        let e = close_packet(0, 0, 107, 107 + 200 + 14, 2).unwrap();
        assert_eq!(e.latency_tti, 14 + 2 * 100);
        assert_eq!(e.losses, 2);
        assert!(matches!(close_packet(0, 0, 50, 40, 0), Err(SimError::Internal(_))));
    }

    #[test]
    fn log_closes_superseded_packets() {
        let mut log = LatencyLog::new(1);
        for s in 0..3u64 {
            log.on_generated(0, s, 7 + 100 * s).unwrap();
        }
        let closed = log.on_delivered(0, 2, 221).unwrap();
        let lat: Vec<u64> = closed.iter().map(|e| e.latency_tti).collect();
        assert_eq!(lat, vec![214, 114, 14]);
        let ks: Vec<u32> = closed.iter().map(|e| e.losses).collect();
        assert_eq!(ks, vec![2, 1, 0]);
        assert!(log.on_generated(0, 5, 600).is_err());
    }

    #[test]
    fn censoring_at_end() {
        let mut log = LatencyLog::new(2);
        log.on_generated(0, 0, 10).unwrap();
        log.on_generated(1, 0, 20).unwrap();
        log.on_delivered(0, 0, 25).unwrap();
        let m = log.into_matrix(1, 300).unwrap();
        assert_eq!(m.get(0, 0).latency_tti, 15);
        assert!(!m.get(0, 0).censored);
        assert_eq!(m.get(0, 1).latency_tti, 280);
        assert!(m.get(0, 1).censored);
        assert!(log.into_matrix(2, 300).is_err());
    }

    #[test]
    fn ecdf_examples() {
        let c = ecdf(&[5.0]).unwrap();
        assert_eq!(c.eval(5.0), 1.0);
        assert_eq!(c.eval(4.9), 0.0);
        let c = ecdf(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.eval(2.0), 0.5);
        assert!(ecdf(&[]).is_err());
        let pts = c.points();
        assert_eq!(pts.last().unwrap().1, 1.0);
        assert!(pts.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn matrix_cdf_examples() {
        let l = LatencyMatrix::from_rows(&[vec![10, 20], vec![10, 20]]).unwrap();
        let c = cdf_combined(&l).unwrap();
        assert_eq!((c.eval(10.0), c.eval(20.0)), (0.5, 1.0));
        let l = LatencyMatrix::from_rows(&[vec![10, 20], vec![30, 20]]).unwrap();
        let m = cdf_mean(&l).unwrap();
        assert_eq!(m.samples(), &[20.0, 20.0]);
        assert_eq!(m.eval(19.999), 0.0);
        let one = LatencyMatrix::from_rows(&[vec![3, 9, 4]]).unwrap();
        assert_eq!(cdf_mean(&one).unwrap(), cdf_combined(&one).unwrap());
        let ind = cdf_individual(&l).unwrap();
        assert_ne!(ind[0], ind[1]);
        let same = LatencyMatrix::from_rows(&[vec![4, 4], vec![8, 8]]).unwrap();
        let ind = cdf_individual(&same).unwrap();
        assert_eq!(ind[0], ind[1]);
    }

    #[test]
    fn utilization_examples() {
        assert!((utilization(2400.0, 10, 200.0, 120.0, 1.0).unwrap() - 100.0).abs() < 1e-12);
        let a = utilization(2400.0, 21, 2500.0, 102.0, 0.377).unwrap();
        let b = utilization(2400.0, 21, 2500.0, 102.0, 0.754).unwrap();
        assert!((a / b - 2.0).abs() < 1e-12);
        assert!(utilization(2400.0, 21, 0.0, 102.0, 0.377).is_err());
        assert!(utilization(2400.0, 500, 1.0, 1.0, 1.0).unwrap() > 100.0);
    }

    #[test]
    fn predictor_examples() {
        let r = predicted_throughput_ratio(0.52, 25.0, 0.157, 100.0).unwrap();
        assert!((r - 7.025).abs() < 1e-12);
        assert_eq!(predicted_throughput_ratio(0.3, 25.0, 0.3, 25.0).unwrap(), 1.0);
        assert_eq!(predicted_throughput_ratio(0.0, 25.0, 0.0, 100.0).unwrap(), 4.0);
        assert!(predicted_throughput_ratio(1.0, 25.0, 0.1, 100.0).is_err());
    }
}
