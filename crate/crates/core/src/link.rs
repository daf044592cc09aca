//! Link-to-system abstraction.
//!
//! Per-RB SINRs for multicast (coherent MBSFN combining) and unicast
//! reception, MIESM effective SINR over BICM capacity curves, the LTE CQI
//! table, and a logistic BLER curve.

use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSnapshot;
use crate::error::{Result, SimError};

pub const N_CQI: usize = 15;

/// `|sum_{j in MBSFN} h_ij|^2 / (sigma^2 + sum_{l not in MBSFN} |h_il|^2)`.
pub fn sinr_multicast(snap: &ChannelSnapshot, mbsfn_mask: &[bool], row: usize, rb: usize) -> f64 {
    let (signal, interference) = multicast_terms(snap, mbsfn_mask, row, rb);
    signal / (snap.noise_variance + interference)
}

/// Returns (coherent signal power, interference power) for multicast reception.
pub fn multicast_terms(snap: &ChannelSnapshot, mbsfn_mask: &[bool], row: usize, rb: usize) -> (f64, f64) {
    let mut sum = Complex64::new(0.0, 0.0);
    let mut interference = 0.0;
    for (cell, &in_area) in mbsfn_mask.iter().enumerate().take(snap.n_cells) {
        let h = snap.h(row, cell, rb);
        if in_area {
            sum += h;
        } else {
            interference += h.norm_sqr();
        }
    }
    (sum.norm_sqr(), interference)
}

/// `|h_ij|^2 / (sigma^2 + sum_{l != j} |h_il|^2)` for serving cell `j`.
pub fn sinr_unicast(snap: &ChannelSnapshot, serving: usize, row: usize, rb: usize) -> f64 {
    let (signal, interference) = unicast_terms(snap, serving, row, rb);
    signal / (snap.noise_variance + interference)
}

pub fn unicast_terms(snap: &ChannelSnapshot, serving: usize, row: usize, rb: usize) -> (f64, f64) {
    let mut signal = 0.0;
    let mut interference = 0.0;
    for cell in 0..snap.n_cells {
        let p = snap.h(row, cell, rb).norm_sqr();
        if cell == serving {
            signal = p;
        } else {
            interference += p;
        }
    }
    (signal, interference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    Qam16,
    Qam64,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 6,
        }
    }

    fn index(self) -> usize {
        match self {
            Modulation::Qpsk => 0,
            Modulation::Qam16 => 1,
            Modulation::Qam64 => 2,
        }
    }

    pub const ALL: [Modulation; 3] = [Modulation::Qpsk, Modulation::Qam16, Modulation::Qam64];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CqiEntry {
    pub modulation: Modulation,
    /// Code rate times 1024.
    pub code_rate_x1024: f64,
    /// Bits per resource element.
    pub efficiency: f64,
    /// Effective SINR (dB) at which a transport block hits 10% BLER.
    pub threshold_db: f64,
}

/// 15-entry CQI table. Index 1 is `entries[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqiTable {
    pub entries: Vec<CqiEntry>,
}

impl Default for CqiTable {
    fn default() -> Self {
        use Modulation::*;
        // 3GPP 36.213 table 7.2.3-1 with AWGN 10% BLER switching points.
        let rows = [
            (Qpsk, 78.0, 0.1523, -6.934),
            (Qpsk, 120.0, 0.2344, -5.147),
            (Qpsk, 193.0, 0.3770, -3.180),
            (Qpsk, 308.0, 0.6016, -1.254),
            (Qpsk, 449.0, 0.8770, 0.761),
            (Qpsk, 602.0, 1.1758, 2.700),
            (Qam16, 378.0, 1.4766, 4.697),
            (Qam16, 490.0, 1.9141, 6.528),
            (Qam16, 616.0, 2.4063, 8.576),
            (Qam64, 466.0, 2.7305, 10.370),
            (Qam64, 567.0, 3.3223, 12.300),
            (Qam64, 666.0, 3.9023, 14.180),
            (Qam64, 772.0, 4.5234, 15.888),
            (Qam64, 873.0, 5.1152, 17.818),
            (Qam64, 948.0, 5.5547, 19.829),
        ];
        Self {
            entries: rows
                .iter()
                .map(|&(modulation, code_rate_x1024, efficiency, threshold_db)| CqiEntry {
                    modulation,
                    code_rate_x1024,
                    efficiency,
                    threshold_db,
                })
                .collect(),
        }
    }
}

impl CqiTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != N_CQI {
            return Err(SimError::Config(format!(
                "CQI table needs {N_CQI} entries, got {}",
                self.entries.len()
            )));
        }
        for w in self.entries.windows(2) {
            if !(w[1].efficiency > w[0].efficiency) || !(w[1].threshold_db > w[0].threshold_db) {
                return Err(SimError::Config(
                    "CQI efficiencies and thresholds must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn entry(&self, cqi: u8) -> Result<&CqiEntry> {
        if cqi == 0 || cqi as usize > self.entries.len() {
            return Err(SimError::Contract(format!("CQI index {cqi} outside 1..=15")));
        }
        Ok(&self.entries[cqi as usize - 1])
    }

    pub fn efficiency(&self, cqi: u8) -> Result<f64> {
        self.entry(cqi).map(|e| e.efficiency)
    }

    /// Largest CQI whose 10%-BLER threshold does not exceed the MIESM
    /// effective SINR of `sinr_per_rb` (linear). Never below 1.
    pub fn sinr_to_cqi(&self, sinr_per_rb: &[f64]) -> u8 {
        let mut cached: [Option<f64>; 3] = [None; 3];
        for cqi in (1..=self.entries.len()).rev() {
            let e = &self.entries[cqi - 1];
            let eff = *cached[e.modulation.index()]
                .get_or_insert_with(|| effective_sinr_db(e.modulation, sinr_per_rb));
            if eff + THRESHOLD_EPS_DB >= e.threshold_db {
                return cqi as u8;
            }
        }
        1
    }
}

/// Boundary tolerance so an SINR sitting exactly on a threshold maps to it.
const THRESHOLD_EPS_DB: f64 = 1e-9;

static DEFAULT_TABLE: OnceLock<CqiTable> = OnceLock::new();

pub fn default_cqi_table() -> &'static CqiTable {
    DEFAULT_TABLE.get_or_init(CqiTable::default)
}

/// Spectral efficiency (bits/RE) of a CQI in the default table.
pub fn cqi_efficiency(cqi: u8) -> Result<f64> {
    default_cqi_table().efficiency(cqi)
}

/// CQI of a per-RB linear SINR list under the default table.
pub fn sinr_to_cqi(sinr_per_rb: &[f64]) -> u8 {
    default_cqi_table().sinr_to_cqi(sinr_per_rb)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

// ---------------------------------------------------------------------------
// BICM mutual information

/// Gauss-Hermite nodes and weights for `int exp(-x^2) f(x) dx`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2 - ((j as f64) / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

struct Pam {
    points: Vec<f64>,
    labels: Vec<u32>,
    bits: u32,
}

impl Pam {
    /// Gray-labelled PAM with unit average energy carrying one axis of `m`.
    fn for_modulation(m: Modulation) -> Self {
        let bits = m.bits_per_symbol() / 2;
        let levels = 1usize << bits;
        let scale = (3.0 / ((levels * levels) as f64 - 1.0)).sqrt();
        let points = (0..levels)
            .map(|k| (2.0 * k as f64 - (levels as f64 - 1.0)) * scale)
            .collect();
        let labels = (0..levels as u32).map(|k| k ^ (k >> 1)).collect();
        Self { points, labels, bits }
    }
}

fn log_sum_exp(vals: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = vals.collect();
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// BICM mutual information per coded bit of Gray-mapped square QAM at symbol
/// SINR `sinr` (linear), by Gauss-Hermite quadrature over the per-axis noise.
pub fn bicm_mi_per_bit(m: Modulation, sinr: f64) -> f64 {
    static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (nodes, weights) = NODES.get_or_init(|| gauss_hermite(48));
    if !(sinr > 0.0) {
        return 0.0;
    }
    let pam = Pam::for_modulation(m);
    let sigma = (1.0 / sinr).sqrt();
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let norm = 1.0 / std::f64::consts::PI.sqrt();
    let levels = pam.points.len();
    let mut loss = 0.0;
    for (xi, &x) in pam.points.iter().enumerate() {
        for (t, w) in nodes.iter().zip(weights) {
            let y = x + std::f64::consts::SQRT_2 * sigma * t;
            let metrics: Vec<f64> = pam.points.iter().map(|p| -(y - p) * (y - p) * inv2s2).collect();
            let all = log_sum_exp(metrics.iter().cloned());
            for b in 0..pam.bits {
                let bit = (pam.labels[xi] >> b) & 1;
                let same = log_sum_exp(
                    metrics
                        .iter()
                        .zip(&pam.labels)
                        .filter(|(_, l)| (*l >> b) & 1 == bit)
                        .map(|(m, _)| *m),
                );
                loss += w * norm * (all - same) / std::f64::consts::LN_2;
            }
        }
    }
    (1.0 - loss / (levels as f64 * pam.bits as f64)).clamp(0.0, 1.0)
}

const MI_DB_MIN: f64 = -25.0;
const MI_DB_MAX: f64 = 35.0;
const MI_DB_STEP: f64 = 0.02;

struct MiCurve {
    mi: Vec<f64>,
}

fn mi_curve(m: Modulation) -> &'static MiCurve {
    static CURVES: OnceLock<Vec<MiCurve>> = OnceLock::new();
    let curves = CURVES.get_or_init(|| {
        let n = ((MI_DB_MAX - MI_DB_MIN) / MI_DB_STEP).round() as usize + 1;
        Modulation::ALL
            .iter()
            .map(|&m| {
                let mut mi: Vec<f64> = (0..n)
                    .map(|k| bicm_mi_per_bit(m, from_db(MI_DB_MIN + k as f64 * MI_DB_STEP)))
                    .collect();
                // Quadrature noise must not break monotonicity of the lookup.
                for k in 1..n {
                    if mi[k] < mi[k - 1] {
                        mi[k] = mi[k - 1];
                    }
                }
                MiCurve { mi }
            })
            .collect()
    });
    &curves[m.index()]
}

/// Tabulated BICM MI per bit, linear interpolation in dB.
pub fn mi_lookup(m: Modulation, sinr_db: f64) -> f64 {
    let curve = mi_curve(m);
    let pos = (sinr_db - MI_DB_MIN) / MI_DB_STEP;
    if !(pos > 0.0) {
        return curve.mi[0];
    }
    let k = pos.floor() as usize;
    if k + 1 >= curve.mi.len() {
        return *curve.mi.last().expect("non-empty");
    }
    let frac = pos - k as f64;
    curve.mi[k] * (1.0 - frac) + curve.mi[k + 1] * frac
}

/// Inverse of [`mi_lookup`] (dB), clamped to the tabulated range.
pub fn mi_inverse_db(m: Modulation, mi: f64) -> f64 {
    let curve = &mi_curve(m).mi;
    if mi <= curve[0] {
        return MI_DB_MIN;
    }
    let k = curve.partition_point(|&v| v < mi);
    if k >= curve.len() {
        return MI_DB_MAX;
    }
    let (lo, hi) = (curve[k - 1], curve[k]);
    let frac = if hi > lo { (mi - lo) / (hi - lo) } else { 0.0 };
    MI_DB_MIN + (k as f64 - 1.0 + frac) * MI_DB_STEP
}

/// MIESM effective SINR in dB: average MI per bit over RBs, mapped back.
pub fn effective_sinr_db(m: Modulation, sinr_per_rb: &[f64]) -> f64 {
    if sinr_per_rb.is_empty() {
        return f64::NEG_INFINITY;
    }
    let first = sinr_per_rb[0];
    if sinr_per_rb.iter().all(|&s| s == first) {
        return to_db(first);
    }
    let mean_mi =
        sinr_per_rb.iter().map(|&s| mi_lookup(m, to_db(s))).sum::<f64>() / sinr_per_rb.len() as f64;
    mi_inverse_db(m, mean_mi)
}

// ---------------------------------------------------------------------------
// BLER

/// Logistic BLER curve in dB, `BLER(threshold) = target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlerModel {
    /// dB per decade of BLER in the waterfall.
    pub slope_db: f64,
    pub target_bler: f64,
}

impl Default for BlerModel {
    fn default() -> Self {
        Self {
            slope_db: 1.0,
            target_bler: 0.1,
        }
    }
}

impl BlerModel {
    pub fn bler(&self, effective_sinr_db: f64, threshold_db: f64) -> f64 {
        let odds = (1.0 - self.target_bler) / self.target_bler;
        let x = (effective_sinr_db - threshold_db) / self.slope_db;
        1.0 / (1.0 + odds * 10f64.powf(x))
    }
}

/// Bernoulli decode outcome for a transport block sent at `cqi`.
pub fn decode_success(
    effective_sinr_db: f64,
    cqi: u8,
    table: &CqiTable,
    bler: &BlerModel,
    rng: &mut impl Rng,
) -> Result<bool> {
    let p_err = bler.bler(effective_sinr_db, table.entry(cqi)?.threshold_db);
    Ok(rng.gen::<f64>() >= p_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snap(values: &[Complex64], noise: f64) -> ChannelSnapshot {
        let mut s = ChannelSnapshot::zeros(vec![0], values.len(), 1, noise);
        for (c, v) in values.iter().enumerate() {
            s.set(0, c, 0, *v);
        }
        s
    }

    #[test]
    fn multicast_unit_and_antiphase() {
        let one = Complex64::new(1.0, 0.0);
        assert!((sinr_multicast(&snap(&[one], 1.0), &[true], 0, 0) - 1.0).abs() < 1e-15);
        let s = snap(&[one, -one], 1.0);
        assert_eq!(sinr_multicast(&s, &[true, true], 0, 0), 0.0);
    }

    #[test]
    fn unicast_examples() {
        let one = Complex64::new(1.0, 0.0);
        assert!((sinr_unicast(&snap(&[one], 0.5), 0, 0, 0) - 2.0).abs() < 1e-15);
        let g = Complex64::new(0.3, 0.4);
        let s = snap(&[g; 19], 0.0);
        assert!((sinr_unicast(&s, 4, 0, 0) - 1.0 / 18.0).abs() < 1e-12);
    }

    #[test]
    fn table_anchors() {
        assert_eq!(cqi_efficiency(3).unwrap(), 0.377);
        assert!((cqi_efficiency(15).unwrap() - 6.0 * 948.0 / 1024.0).abs() < 1e-3);
        for k in 1..15u8 {
            assert!(cqi_efficiency(k + 1).unwrap() > cqi_efficiency(k).unwrap());
        }
        assert!(matches!(cqi_efficiency(0), Err(SimError::Contract(_))));
        assert!(matches!(cqi_efficiency(16), Err(SimError::Contract(_))));
        CqiTable::default().validate().unwrap();
    }

    #[test]
    fn cqi_edges() {
        assert_eq!(sinr_to_cqi(&[from_db(-10.0); 4]), 1);
        let t7 = CqiTable::default().entries[6].threshold_db;
        assert_eq!(sinr_to_cqi(&[from_db(t7); 8]), 7);
        assert_eq!(sinr_to_cqi(&[from_db(40.0); 3]), 15);
    }

    #[test]
    fn gauss_hermite_moments() {
        let (x, w) = gauss_hermite(48);
        let pi_sqrt = std::f64::consts::PI.sqrt();
        assert!((w.iter().sum::<f64>() - pi_sqrt).abs() < 1e-12);
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((m2 - pi_sqrt / 2.0).abs() < 1e-12);
    }

    #[test]
    fn mi_matches_brute_force_integration() {
        // Independent route: trapezoid integration of the exact BPSK formula.
        let bpsk = |snr: f64| {
            let sigma = (1.0 / snr).sqrt();
            let n = 20_000;
            let lim = 12.0 * sigma + 1.0;
            let h = 2.0 * lim / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let y = -lim + i as f64 * h;
                let pdf = (-(y - 1.0) * (y - 1.0) / (2.0 * sigma * sigma)).exp()
                    / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                let f = (1.0 + (-2.0 * y / (sigma * sigma)).exp()).log2();
                let wgt = if i == 0 || i == n { 0.5 } else { 1.0 };
                if f.is_finite() {
                    acc += wgt * pdf * f;
                }
            }
            1.0 - acc * h
        };
        for db in [-10.0, -3.0, 0.0, 5.0] {
            let a = bicm_mi_per_bit(Modulation::Qpsk, from_db(db));
            let b = bpsk(from_db(db));
            assert!((a - b).abs() < 1e-4, "{db} dB: {a} vs {b}");
        }
    }

    #[test]
    fn mi_monotone_and_bounded() {
        for m in Modulation::ALL {
            let mut prev = -1.0;
            for k in -20..=30 {
                let v = mi_lookup(m, k as f64);
                assert!((0.0..=1.0).contains(&v));
                assert!(v >= prev);
                prev = v;
            }
        }
        // Higher order needs more SINR for the same MI per bit.
        assert!(mi_lookup(Modulation::Qpsk, 5.0) > mi_lookup(Modulation::Qam16, 5.0));
        assert!(mi_lookup(Modulation::Qam16, 5.0) > mi_lookup(Modulation::Qam64, 5.0));
    }

    #[test]
    fn mi_inverse_round_trip() {
        for m in Modulation::ALL {
            for db in [-8.0, -1.3, 4.2, 11.7] {
                let back = mi_inverse_db(m, mi_lookup(m, db));
                assert!((back - db).abs() < 1e-6, "{m:?} {db} -> {back}");
            }
        }
    }

    #[test]
    fn bler_asymptotes() {
        let b = BlerModel::default();
        assert!(b.bler(30.0, 0.0) < 1e-3);
        assert!(b.bler(-20.0, 0.0) > 0.999);
        assert!((b.bler(0.0, 0.0) - 0.1).abs() < 1e-12);
        let mut prev = 1.0;
        for k in -100..100 {
            let v = b.bler(k as f64 * 0.1, 0.0);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn decode_at_threshold_hits_ten_percent() {
        let table = CqiTable::default();
        let b = BlerModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let thr = table.entries[4].threshold_db;
        let fails = (0..10_000)
            .filter(|_| !decode_success(thr, 5, &table, &b, &mut rng).unwrap())
            .count();
        let rate = fails as f64 / 1e4;
        assert!((rate - 0.1).abs() <= 0.02, "error rate {rate}");
    }
}
