//! MBSFN reservation, multicast CQI selection and resource allocation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const SUBFRAMES_PER_FRAME: u64 = 10;
/// FDD subframes that may carry MBSFN, in the order they are reserved.
/// Subframes 0, 4, 5 and 9 carry synchronization and paging.
pub const MBSFN_CAPABLE_ORDER: [usize; 6] = [1, 6, 2, 7, 3, 8];
pub const MAX_MBSFN_SUBFRAMES: u32 = MBSFN_CAPABLE_ORDER.len() as u32;

/// Resource blocks per subframe for a channel bandwidth in MHz.
pub fn n_rb_for_bandwidth(mhz: f64) -> Result<usize> {
    let table = [(1.4, 6), (3.0, 15), (5.0, 25), (10.0, 50), (15.0, 75), (20.0, 100)];
    table
        .iter()
        .find(|(bw, _)| (bw - mhz).abs() < 1e-9)
        .map(|&(_, n)| n)
        .ok_or_else(|| SimError::Config(format!("unsupported LTE bandwidth {mhz} MHz")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FramePlan {
    pub reserved: [bool; 10],
    pub n_rb: usize,
    pub n_re: u32,
}

impl FramePlan {
    pub fn new(n_reserved: u32, n_rb: usize, n_re: u32) -> Result<Self> {
        if n_reserved > MAX_MBSFN_SUBFRAMES {
            return Err(SimError::Infeasible {
                required: n_reserved,
                max: MAX_MBSFN_SUBFRAMES,
            });
        }
        let mut reserved = [false; 10];
        for &sf in &MBSFN_CAPABLE_ORDER[..n_reserved as usize] {
            reserved[sf] = true;
        }
        Ok(Self { reserved, n_rb, n_re })
    }

    pub fn n_reserved(&self) -> u32 {
        self.reserved.iter().filter(|&&r| r).count() as u32
    }

    pub fn is_reserved(&self, tti: u64) -> bool {
        self.reserved[(tti % SUBFRAMES_PER_FRAME) as usize]
    }
}

/// Multicast rate policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CqiPolicy {
    /// Always transmit at this CQI.
    Fixed(u8),
    /// Minimum reported CQI, but never below `bound` (0 disables the bound).
    Adaptive { bound: u8 },
}

impl CqiPolicy {
    /// CQI the MBSFN reservation is sized for.
    pub fn reference_cqi(&self) -> u8 {
        match *self {
            CqiPolicy::Fixed(c) => c,
            CqiPolicy::Adaptive { bound } => bound.max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CqiPolicy::Fixed(c) if !(1..=15).contains(&c) => {
                Err(SimError::Config(format!("fixed CQI {c} outside 1..=15")))
            }
            CqiPolicy::Adaptive { bound } if bound > 15 => {
                Err(SimError::Config(format!("CQI bound {bound} outside 0..=15")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for CqiPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CqiPolicy::Fixed(c) => write!(f, "fixed:{c}"),
            CqiPolicy::Adaptive { bound } => write!(f, "adaptive:{bound}"),
        }
    }
}

impl FromStr for CqiPolicy {
    type Err = SimError;

    /// Accepts `fixed:3`, `fixed3`, `cqi3`, `adaptive:3`, `adaptive3`, `adaptive`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let num = |rest: &str| -> Result<u8> {
            rest.trim_start_matches([':', '=', '(', ' '])
                .trim_end_matches(')')
                .parse::<u8>()
                .map_err(|_| SimError::Parse(format!("bad CQI policy '{s}'")))
        };
        let policy = if let Some(rest) = t.strip_prefix("fixed") {
            CqiPolicy::Fixed(num(rest)?)
        } else if let Some(rest) = t.strip_prefix("cqi") {
            CqiPolicy::Fixed(num(rest)?)
        } else if let Some(rest) = t.strip_prefix("adaptive") {
            let bound = if rest.is_empty() { 0 } else { num(rest)? };
            CqiPolicy::Adaptive { bound }
        } else {
            return Err(SimError::Parse(format!(
                "bad CQI policy '{s}' (expected fixed:<k> or adaptive:<bound>)"
            )));
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl TryFrom<String> for CqiPolicy {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CqiPolicy> for String {
    fn from(p: CqiPolicy) -> String {
        p.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CqiState {
    pub reports: Vec<u8>,
    pub policy: CqiPolicy,
}

/// `max(min_i CQI[i], bound)` in adaptive mode, the configured CQI otherwise.
pub fn select_mbsfn_cqi(state: &CqiState) -> Result<u8> {
    match state.policy {
        CqiPolicy::Fixed(c) => Ok(c),
        CqiPolicy::Adaptive { bound } => {
            let min = state
                .reports
                .iter()
                .copied()
                .min()
                .ok_or_else(|| SimError::Scheduling("no CQI reports for adaptive multicast".into()))?;
            Ok(min.max(bound).max(1))
        }
    }
}

/// Smallest number of MBSFN subframes per radio frame whose capacity over
/// one CAM period carries one packet from every MBMS user.
pub fn required_subframes(
    packet_bits: f64,
    n_mbms_users: usize,
    n_rb_per_subframe: usize,
    n_re_per_rb: u32,
    efficiency: f64,
    period_tti: u64,
) -> Result<u32> {
    if !(packet_bits > 0.0) || n_rb_per_subframe == 0 || n_re_per_rb == 0 || !(efficiency > 0.0) || period_tti == 0 {
        return Err(SimError::Config("subframe sizing needs positive arguments".into()));
    }
    if n_mbms_users == 0 {
        return Ok(0);
    }
    let demand = packet_bits * n_mbms_users as f64;
    let per_subframe = n_rb_per_subframe as f64 * n_re_per_rb as f64 * efficiency;
    let frames_per_period = period_tti as f64 / SUBFRAMES_PER_FRAME as f64;
    let per_frame = demand / per_subframe / frames_per_period;
    let required = (per_frame - 1e-9).ceil().max(0.0) as u32;
    if required > MAX_MBSFN_SUBFRAMES {
        return Err(SimError::Infeasible {
            required,
            max: MAX_MBSFN_SUBFRAMES,
        });
    }
    Ok(required)
}

/// A CAM waiting for multicast resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingCam {
    pub source: usize,
    pub generation_tti: u64,
    pub residual_bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grant {
    pub source: usize,
    pub rb_start: usize,
    pub n_rb: usize,
    pub bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MulticastAllocation {
    pub grants: Vec<Grant>,
    pub used_rbs: usize,
    /// Nothing to send: the whole subframe can go to unicast.
    pub reassignable: bool,
}

/// RBs needed to carry `bits` at `efficiency`.
pub fn rbs_for_bits(bits: u32, n_re: u32, efficiency: f64) -> usize {
    (bits as f64 / (n_re as f64 * efficiency)).ceil() as usize
}

fn bits_in_rbs(n_rb: usize, n_re: u32, efficiency: f64) -> u32 {
    (n_rb as f64 * n_re as f64 * efficiency).floor() as u32
}

/// Fills one MBSFN subframe with pending CAMs, oldest first (ties by source).
pub fn schedule_multicast(pending: &[PendingCam], n_rb: usize, n_re: u32, efficiency: f64) -> MulticastAllocation {
    let mut queue: Vec<&PendingCam> = pending.iter().filter(|p| p.residual_bits > 0).collect();
    queue.sort_by_key(|p| (p.generation_tti, p.source));
    let mut alloc = MulticastAllocation::default();
    let mut next = 0;
    for cam in queue {
        if next >= n_rb {
            break;
        }
        let need = rbs_for_bits(cam.residual_bits, n_re, efficiency);
        let take = need.min(n_rb - next);
        let bits = if take == need {
            cam.residual_bits
        } else {
            bits_in_rbs(take, n_re, efficiency).min(cam.residual_bits)
        };
        alloc.grants.push(Grant {
            source: cam.source,
            rb_start: next,
            n_rb: take,
            bits,
        });
        next += take;
    }
    alloc.used_rbs = next;
    alloc.reassignable = alloc.grants.is_empty();
    alloc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrdinaryDemand {
    pub user: usize,
    pub efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrdinaryGrant {
    pub user: usize,
    pub rb_start: usize,
    pub n_rb: usize,
    pub bits: u32,
}

/// Round-robin split of `n_rb` RBs (starting at `rb_start`) among full-buffer
/// users; the `n_rb % n` leftover RBs go to users starting at `rr_offset`.
pub fn schedule_unicast_ordinary(
    users: &[OrdinaryDemand],
    rb_start: usize,
    n_rb: usize,
    n_re: u32,
    rr_offset: usize,
) -> Vec<OrdinaryGrant> {
    let n = users.len();
    if n == 0 {
        return Vec::new();
    }
    let base = n_rb / n;
    let extra = n_rb % n;
    let mut next = rb_start;
    users
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let bonus = usize::from((k + n - rr_offset % n) % n < extra);
            let count = base + bonus;
            let g = OrdinaryGrant {
                user: u.user,
                rb_start: next,
                n_rb: count,
                bits: bits_in_rbs(count, n_re, u.efficiency),
            };
            next += count;
            g
        })
        .collect()
}

/// One per-receiver copy of a CAM in the unicast baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingCopy {
    pub source: usize,
    pub receiver: usize,
    pub generation_tti: u64,
    pub residual_bits: u32,
    pub efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CopyGrant {
    pub source: usize,
    pub receiver: usize,
    pub rb_start: usize,
    pub n_rb: usize,
    pub bits: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CamBaselineAllocation {
    pub grants: Vec<CopyGrant>,
    pub used_rbs: usize,
}

/// Serves one cell's per-receiver CAM copies FIFO, each at its receiver's
/// efficiency. Remaining RBs are left for ordinary users.
pub fn schedule_unicast_cam_baseline(copies: &[PendingCopy], n_rb: usize, n_re: u32) -> CamBaselineAllocation {
    let mut queue: Vec<&PendingCopy> = copies.iter().filter(|c| c.residual_bits > 0).collect();
    queue.sort_by_key(|c| (c.generation_tti, c.source, c.receiver));
    let mut alloc = CamBaselineAllocation::default();
    let mut next = 0;
    for copy in queue {
        if next >= n_rb {
            break;
        }
        let need = rbs_for_bits(copy.residual_bits, n_re, copy.efficiency);
        let take = need.min(n_rb - next);
        let bits = if take == need {
            copy.residual_bits
        } else {
            bits_in_rbs(take, n_re, copy.efficiency).min(copy.residual_bits)
        };
        alloc.grants.push(CopyGrant {
            source: copy.source,
            receiver: copy.receiver,
            rb_start: next,
            n_rb: take,
            bits,
        });
        next += take;
    }
    alloc.used_rbs = next;
    alloc
}

/// Receiver deliveries one CAM spawns in the unicast baseline.
pub fn unicast_deliveries_per_cam(n_mbms_users: usize) -> usize {
    n_mbms_users.saturating_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cqi_selection_examples() {
        let s = |reports: Vec<u8>, policy| CqiState { reports, policy };
        let a = |bound| CqiPolicy::Adaptive { bound };
        assert_eq!(select_mbsfn_cqi(&s(vec![5, 7, 9], a(3))).unwrap(), 5);
        assert_eq!(select_mbsfn_cqi(&s(vec![1, 2, 4], a(3))).unwrap(), 3);
        assert_eq!(select_mbsfn_cqi(&s(vec![1, 2, 4], a(0))).unwrap(), 1);
        assert_eq!(select_mbsfn_cqi(&s(vec![], CqiPolicy::Fixed(3))).unwrap(), 3);
        assert!(matches!(
            select_mbsfn_cqi(&s(vec![], a(3))),
            Err(SimError::Scheduling(_))
        ));
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("fixed:3".parse::<CqiPolicy>().unwrap(), CqiPolicy::Fixed(3));
        assert_eq!("CQI3".parse::<CqiPolicy>().unwrap(), CqiPolicy::Fixed(3));
        assert_eq!("adaptive3".parse::<CqiPolicy>().unwrap(), CqiPolicy::Adaptive { bound: 3 });
        assert_eq!("adaptive".parse::<CqiPolicy>().unwrap(), CqiPolicy::Adaptive { bound: 0 });
        assert!("fixed:0".parse::<CqiPolicy>().is_err());
        assert!("greedy".parse::<CqiPolicy>().is_err());
        let p = CqiPolicy::Adaptive { bound: 4 };
        assert_eq!(p.to_string().parse::<CqiPolicy>().unwrap(), p);
    }

    #[test]
    fn subframe_sizing_examples() {
        assert_eq!(required_subframes(2400.0, 21, 25, 102, 0.377, 100).unwrap(), 6);
        assert_eq!(required_subframes(2400.0, 21, 100, 102, 0.377, 100).unwrap(), 2);
        assert_eq!(required_subframes(2400.0, 0, 25, 102, 0.377, 100).unwrap(), 0);
        assert!(matches!(
            required_subframes(2400.0, 21, 25, 102, 0.1523, 100),
            Err(SimError::Infeasible { .. })
        ));
        assert!(required_subframes(0.0, 21, 25, 102, 0.377, 100).is_err());
    }

    #[test]
    fn frame_plan_uses_legal_subframes() {
        let p = FramePlan::new(6, 25, 102).unwrap();
        for sf in [0, 4, 5, 9] {
            assert!(!p.reserved[sf]);
        }
        assert_eq!(p.n_reserved(), 6);
        let two = FramePlan::new(2, 100, 102).unwrap();
        assert!(two.is_reserved(11) && two.is_reserved(16) && !two.is_reserved(12));
        assert!(FramePlan::new(7, 25, 102).is_err());
    }

    #[test]
    fn multicast_rb_arithmetic() {
        let alloc = schedule_multicast(
            &[PendingCam { source: 0, generation_tti: 0, residual_bits: 2400 }],
            100,
            120,
            0.377,
        );
        // Independent: 2400 / (120 * 0.377) = 53.05...
        assert_eq!(alloc.grants[0].n_rb, 54);
        assert_eq!(alloc.grants[0].bits, 2400);
        assert!(!alloc.reassignable);

        let empty = schedule_multicast(&[], 25, 102, 0.377);
        assert!(empty.reassignable);
        assert_eq!(empty.used_rbs, 0);
    }

    #[test]
    fn multicast_fifo_partial_fill() {
        // 54 RBs per CAM; 81 RBs hold one and a half.
        let pending = [
            PendingCam { source: 4, generation_tti: 20, residual_bits: 2400 },
            PendingCam { source: 2, generation_tti: 10, residual_bits: 2400 },
        ];
        let alloc = schedule_multicast(&pending, 81, 120, 0.377);
        assert_eq!(alloc.grants.len(), 2);
        assert_eq!(alloc.grants[0].source, 2);
        assert_eq!(alloc.grants[0].n_rb, 54);
        assert_eq!(alloc.grants[1].n_rb, 27);
        assert_eq!(alloc.grants[1].bits, (27.0f64 * 120.0 * 0.377).floor() as u32);
        assert_eq!(alloc.used_rbs, 81);
    }

    #[test]
    fn ordinary_rr_examples() {
        let g = schedule_unicast_ordinary(&[OrdinaryDemand { user: 0, efficiency: 0.377 }], 0, 25, 120, 0);
        assert_eq!(g[0].bits, 1131);
        let none = schedule_unicast_ordinary(
            &[OrdinaryDemand { user: 0, efficiency: 1.0 }, OrdinaryDemand { user: 1, efficiency: 1.0 }],
            0,
            0,
            120,
            0,
        );
        assert!(none.iter().all(|g| g.bits == 0 && g.n_rb == 0));
        let two: Vec<_> = (0..2).map(|u| OrdinaryDemand { user: u, efficiency: 1.0 }).collect();
        let g0 = schedule_unicast_ordinary(&two, 0, 25, 120, 0);
        let g1 = schedule_unicast_ordinary(&two, 0, 25, 120, 1);
        assert_eq!((g0[0].n_rb, g0[1].n_rb), (13, 12));
        assert_eq!((g1[0].n_rb, g1[1].n_rb), (12, 13));
    }

    #[test]
    fn unicast_baseline_counts() {
        assert_eq!(unicast_deliveries_per_cam(21), 20);
        assert_eq!(unicast_deliveries_per_cam(1), 0);
        let copies: Vec<PendingCopy> = (0..3)
            .map(|r| PendingCopy {
                source: 0,
                receiver: r + 1,
                generation_tti: 0,
                residual_bits: 2400,
                efficiency: 0.377,
            })
            .collect();
        let a = schedule_unicast_cam_baseline(&copies, 25, 120);
        assert_eq!(a.used_rbs, 25);
        assert_eq!(a.grants.len(), 1);
    }

    proptest! {
        #[test]
        fn sizing_monotone(
            bits in 100.0f64..5000.0, users in 1usize..30, eff_k in 1usize..15, rb_k in 0usize..6,
        ) {
            let rbs = [6usize, 15, 25, 50, 75, 100];
            let t = crate::link::CqiTable::default();
            let eff = t.entries[eff_k - 1].efficiency;
            let eff_hi = t.entries[eff_k].efficiency;
            let r = |b: f64, u: usize, n: usize, e: f64| match required_subframes(b, u, n, 102, e, 100) {
                Ok(v) => v,
                Err(SimError::Infeasible { required, .. }) => required,
                Err(e) => panic!("{e}"),
            };
            let base = r(bits, users, rbs[rb_k], eff);
            prop_assert!(r(bits * 1.5, users, rbs[rb_k], eff) >= base);
            prop_assert!(r(bits, users + 1, rbs[rb_k], eff) >= base);
            prop_assert!(r(bits, users, rbs[rb_k], eff_hi) <= base);
            if rb_k < 5 {
                prop_assert!(r(bits, users, rbs[rb_k + 1], eff) <= base);
            }
        }

        #[test]
        fn no_rb_double_allocation(
            resid in proptest::collection::vec(1u32..5000, 0..12), n_rb in 1usize..100, cqi in 1u8..=15,
        ) {
            let eff = crate::link::cqi_efficiency(cqi).unwrap();
            let pending: Vec<PendingCam> = resid.iter().enumerate()
                .map(|(k, &r)| PendingCam { source: k, generation_tti: k as u64, residual_bits: r })
                .collect();
            let a = schedule_multicast(&pending, n_rb, 102, eff);
            prop_assert!(a.used_rbs <= n_rb);
            let mut cursor = 0;
            for g in &a.grants {
                prop_assert_eq!(g.rb_start, cursor);
                cursor += g.n_rb;
                prop_assert!(g.bits as f64 <= g.n_rb as f64 * 102.0 * eff + 1e-9);
            }
        }

        #[test]
        fn higher_efficiency_never_uses_more_rbs(
            resid in proptest::collection::vec(1u32..5000, 0..12), n_rb in 1usize..100, lo in 1u8..15, step in 0u8..14,
        ) {
            let hi = (lo + step).min(15);
            let pending: Vec<PendingCam> = resid.iter().enumerate()
                .map(|(k, &r)| PendingCam { source: k, generation_tti: k as u64, residual_bits: r })
                .collect();
            let a = schedule_multicast(&pending, n_rb, 102, crate::link::cqi_efficiency(lo).unwrap());
            let b = schedule_multicast(&pending, n_rb, 102, crate::link::cqi_efficiency(hi).unwrap());
            prop_assert!(b.used_rbs <= a.used_rbs);
        }
    }
}
