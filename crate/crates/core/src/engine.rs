//! TTI-stepped simulation loop.
//!
//! Each TTI runs the same sequence: move cars, advance the channel, compute
//! per-RB SINRs and CQI reports, generate CAMs, schedule the subframe,
//! decode, update buffers and latency bookkeeping.

use std::collections::VecDeque;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use crate::config::{ScenarioConfig, TransmissionMode};

use crate::channel::{ChannelModel, ChannelSnapshot};
use crate::error::{Result, SimError};
use crate::link::{decode_success, effective_sinr_db, sinr_multicast, sinr_unicast, BlerModel, CqiTable};
use crate::metrics::{utilization, LatencyLog, LatencyMatrix, Summary};
use crate::rng::stream_seed;
use crate::scheduler::{
    required_subframes, schedule_multicast, schedule_unicast_cam_baseline, schedule_unicast_ordinary, select_mbsfn_cqi,
    CqiPolicy, CqiState, FramePlan, OrdinaryDemand, PendingCam, PendingCopy, MAX_MBSFN_SUBFRAMES,
};
use crate::topology::{advance_mobility_in_place, build_layout, drop_users, CellLayout, UserPopulation};
use crate::traffic::{draw_offsets, CamPacket, UserBuffer};

/// Per-TTI scheduler bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TtiTrace {
    pub tti: u64,
    pub mbsfn_subframe: bool,
    /// CQI of the MBSFN transmission, 0 if nothing was multicast.
    pub mbsfn_cqi: u8,
    pub mbsfn_rbs: u32,
    /// RBs the same pending CAMs would take at the policy's reference CQI.
    pub mbsfn_rbs_reference: u32,
    /// RBs spent on CAMs, summed over the MBSFN area's cells.
    pub cam_rbs: u32,
    /// RBs granted to ordinary users, summed over the MBSFN area's cells.
    pub ordinary_rbs: u32,
    /// Largest number of RBs any single cell used in this TTI.
    pub max_cell_rbs: u32,
    /// Sum of the outstanding CAM bits after this TTI.
    pub backlog_bits: u64,
}

/// Everything a single run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub summary: Summary,
    pub latency: LatencyMatrix,
    /// User id of each latency column.
    pub source_users: Vec<usize>,
    pub ordinary_users: Vec<usize>,
    pub ordinary_throughput_mbps: Vec<f64>,
    /// MBSFN subframes per frame actually reserved.
    pub reserved_subframes: u32,
    /// Subframes the demand needs; may exceed the six a frame allows.
    pub required_subframes: u32,
    pub packets_generated: u64,
    pub packets_superseded: u64,
    pub trace: Vec<TtiTrace>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
struct Receiver {
    user: usize,
    row: usize,
    residual: u32,
}

#[derive(Debug, Clone)]
struct InFlight {
    packet: CamPacket,
    receivers: Vec<Receiver>,
}

impl InFlight {
    fn backlog(&self) -> u32 {
        self.receivers.iter().map(|r| r.residual).max().unwrap_or(0)
    }
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    layout: CellLayout,
    pop: UserPopulation,
    channel: ChannelModel,
    snap: ChannelSnapshot,
    table: CqiTable,
    bler: BlerModel,
    decode_rng: ChaCha8Rng,
    n_rb: usize,
    mask: Vec<bool>,
    /// Channel row of every user, if tracked.
    row_of: Vec<Option<usize>>,
    car_rows: Vec<(usize, usize)>,
    source_users: Vec<usize>,
    buffers: Vec<UserBuffer>,
    in_flight: Vec<Option<InFlight>>,
    log: LatencyLog,
    /// Ordinary users (id, row) of each MBSFN cell, indexed by cell id.
    ordinary_by_cell: Vec<Vec<(usize, usize)>>,
    ordinary_bits: Vec<u64>,
    rr_offset: Vec<usize>,
    mc_sinr: Vec<f64>,
    uc_sinr: Vec<f64>,
    mc_reports: VecDeque<Vec<u8>>,
    uc_reports: VecDeque<Vec<u8>>,
    superseded: u64,
}

fn efficiency(table: &CqiTable, cqi: u8) -> Result<f64> {
    table.efficiency(cqi)
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, seed: u64) -> Result<Self> {
        let layout = build_layout(
            cfg.layout.mbsfn_rings,
            cfg.layout.interference_rings,
            cfg.layout.inter_site_distance_m,
        )?;
        let pop = drop_users(&layout, cfg.users.per_cell, cfg.users.cars_per_cell, cfg.car_speed_mps(), seed)?;
        let mask = layout.mbsfn_mask();

        let mut tracked = Vec::new();
        let mut row_of = vec![None; pop.len()];
        for u in &pop.users {
            if u.is_car() || mask[u.home_cell] {
                row_of[u.id] = Some(tracked.len());
                tracked.push(u.id);
            }
        }
        let car_rows = pop.cars().map(|u| (u.id, row_of[u.id].expect("cars are tracked"))).collect();
        let source_users: Vec<usize> = pop.cars().filter(|u| mask[u.home_cell]).map(|u| u.id).collect();

        let mut ordinary_by_cell = vec![Vec::new(); layout.n_cells()];
        for u in pop.users.iter().filter(|u| !u.is_car() && mask[u.home_cell]) {
            ordinary_by_cell[u.home_cell].push((u.id, row_of[u.id].expect("tracked")));
        }

        let ch_cfg = cfg.channel_config()?;
        let n_rb = ch_cfg.n_rb;
        let n_rows = tracked.len();
        let snap = ChannelSnapshot::zeros(tracked.clone(), layout.n_cells(), n_rb, ch_cfg.noise_variance);
        let channel = ChannelModel::new(&layout, &pop, tracked, ch_cfg, seed)?;

        let period = cfg.traffic.period_ms;
        let offsets = draw_offsets(source_users.len(), period, seed);
        let buffers = offsets
            .iter()
            .enumerate()
            .map(|(s, &r)| UserBuffer::new(s, r, period, cfg.packet_bits()))
            .collect();

        let n_sources = source_users.len();
        let n_cells = layout.n_cells();
        Ok(Self {
            cfg,
            table: cfg.cqi_table()?,
            bler: cfg.bler_model(),
            decode_rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, &[0xdec0de])),
            n_rb,
            mask,
            row_of,
            car_rows,
            source_users,
            buffers,
            in_flight: vec![None; n_sources],
            log: LatencyLog::new(n_sources),
            ordinary_bits: vec![0; pop.len()],
            ordinary_by_cell,
            rr_offset: vec![0; n_cells],
            mc_sinr: vec![0.0; n_rows * n_rb],
            uc_sinr: vec![0.0; n_rows * n_rb],
            mc_reports: VecDeque::new(),
            uc_reports: VecDeque::new(),
            superseded: 0,
            layout,
            pop,
            channel,
            snap,
        })
    }

    /// Points every car at the cell with the strongest macroscopic gain,
    /// shadowing included.
    fn reassociate(&mut self) -> Result<()> {
        let gains = self.channel.macroscopic_gains(&self.layout, &self.pop)?;
        let n_cells = self.layout.n_cells();
        for &(u, row) in &self.car_rows {
            let g = &gains[row * n_cells..(row + 1) * n_cells];
            let best = (0..n_cells).max_by(|&a, &b| g[a].total_cmp(&g[b])).expect("layout has cells");
            self.pop.users[u].serving_cell = best;
        }
        Ok(())
    }

    fn multicast(&self) -> bool {
        self.cfg.run.mode == TransmissionMode::Multicast
    }

    fn rows(&self) -> usize {
        self.snap.users.len()
    }

    /// Fills the SINR arrays and pushes this TTI's CQI reports.
    fn measure(&mut self) {
        let n_rb = self.n_rb;
        let multicast = self.multicast();
        let adaptive = matches!(self.cfg.run.cqi_policy, CqiPolicy::Adaptive { .. });
        let mut mc = vec![0u8; self.rows()];
        let mut uc = vec![0u8; self.rows()];
        for (row, &u) in self.snap.users.iter().enumerate() {
            let user = &self.pop.users[u];
            let slice = row * n_rb..(row + 1) * n_rb;
            if user.is_car() && multicast {
                for rb in 0..n_rb {
                    self.mc_sinr[row * n_rb + rb] = sinr_multicast(&self.snap, &self.mask, row, rb);
                }
                if adaptive {
                    mc[row] = self.table.sinr_to_cqi(&self.mc_sinr[slice]);
                }
            } else {
                for rb in 0..n_rb {
                    self.uc_sinr[row * n_rb + rb] = sinr_unicast(&self.snap, user.serving_cell, row, rb);
                }
                if !user.is_car() || adaptive {
                    uc[row] = self.table.sinr_to_cqi(&self.uc_sinr[slice]);
                }
            }
        }
        let depth = self.cfg.radio.feedback_delay_tti as usize + 1;
        for (q, r) in [(&mut self.mc_reports, mc), (&mut self.uc_reports, uc)] {
            q.push_back(r);
            while q.len() > depth {
                q.pop_front();
            }
        }
    }

    /// Reports as old as the feedback delay allows.
    fn stale_mc(&self, row: usize) -> u8 {
        self.mc_reports.front().map_or(0, |r| r[row])
    }

    fn stale_uc(&self, row: usize) -> u8 {
        self.uc_reports.front().map_or(0, |r| r[row])
    }

    fn decode(&mut self, sinr: &[f64], cqi: u8) -> Result<bool> {
        if self.cfg.radio.error_free {
            return Ok(true);
        }
        let m = self.table.entry(cqi)?.modulation;
        let eff = effective_sinr_db(m, sinr);
        decode_success(eff, cqi, &self.table, &self.bler, &mut self.decode_rng)
    }

    fn generate(&mut self, tti: u64) -> Result<()> {
        for s in 0..self.buffers.len() {
            let Some(g) = self.buffers[s].maybe_generate(tti) else {
                continue;
            };
            self.log.on_generated(s, g.packet.seq, tti)?;
            if g.superseded.is_some() {
                self.superseded += 1;
            }
            let src_user = self.source_users[s];
            let receivers: Vec<Receiver> = self
                .car_rows
                .iter()
                .filter(|&&(u, _)| u != src_user && self.mask[self.pop.users[u].serving_cell])
                .map(|&(user, row)| Receiver {
                    user,
                    row,
                    residual: g.packet.size_bits,
                })
                .collect();
            self.in_flight[s] = Some(InFlight {
                packet: g.packet,
                receivers,
            });
        }
        Ok(())
    }

    /// Closes CAMs whose receivers all hold the packet.
    fn settle(&mut self, tti: u64) -> Result<u64> {
        let mut backlog = 0u64;
        for s in 0..self.in_flight.len() {
            let Some(f) = &self.in_flight[s] else { continue };
            let b = f.backlog();
            self.buffers[s].residual_bits = b;
            if b == 0 {
                let seq = f.packet.seq;
                self.log.on_delivered(s, seq, tti + 1)?;
                self.in_flight[s] = None;
            } else {
                backlog += u64::from(b);
            }
        }
        Ok(backlog)
    }

    fn serve_ordinary(&mut self, cell: usize, rb_start: usize, n_rb: usize) -> Result<u32> {
        if n_rb == 0 || self.ordinary_by_cell[cell].is_empty() {
            return Ok(0);
        }
        let n_re = self.cfg.radio.n_re_unicast;
        let users = self.ordinary_by_cell[cell].clone();
        let mut demand = Vec::with_capacity(users.len());
        for &(user, row) in &users {
            let cqi = self.stale_uc(row).max(1);
            demand.push(OrdinaryDemand {
                user,
                efficiency: efficiency(&self.table, cqi)?,
            });
        }
        let grants = schedule_unicast_ordinary(&demand, rb_start, n_rb, n_re, self.rr_offset[cell]);
        self.rr_offset[cell] += 1;
        let mut used = 0;
        for g in grants {
            if g.n_rb == 0 {
                continue;
            }
            used += g.n_rb as u32;
            let row = self.row_of[g.user].expect("tracked");
            let cqi = self.stale_uc(row).max(1);
            let start = row * self.n_rb + g.rb_start;
            let sinr = self.uc_sinr[start..start + g.n_rb].to_vec();
            if self.decode(&sinr, cqi)? {
                self.ordinary_bits[g.user] += u64::from(g.bits);
            }
        }
        Ok(used)
    }

    fn step_multicast(&mut self, tti: u64, plan: &FramePlan, trace: &mut TtiTrace) -> Result<()> {
        let n_rb = self.n_rb;
        let n_re = self.cfg.radio.n_re_mbsfn;
        let policy = self.cfg.run.cqi_policy;
        trace.mbsfn_subframe = plan.is_reserved(tti);
        let mut ordinary_rbs = n_rb;
        if trace.mbsfn_subframe {
            let pending: Vec<PendingCam> = self
                .in_flight
                .iter()
                .enumerate()
                .filter_map(|(s, f)| {
                    f.as_ref().map(|f| PendingCam {
                        source: s,
                        generation_tti: f.packet.generation_tti,
                        residual_bits: f.backlog(),
                    })
                })
                .filter(|p| p.residual_bits > 0)
                .collect();
            if !pending.is_empty() {
                let reports: Vec<u8> = self
                    .car_rows
                    .iter()
                    .filter(|&&(u, _)| self.mask[self.pop.users[u].serving_cell])
                    .map(|&(_, row)| self.stale_mc(row))
                    .collect();
                let cqi = match (policy, reports.is_empty()) {
                    (CqiPolicy::Adaptive { bound }, true) => bound.max(1),
                    _ => select_mbsfn_cqi(&CqiState { reports, policy })?,
                };
                let alloc = schedule_multicast(&pending, n_rb, n_re, efficiency(&self.table, cqi)?);
                let reference = schedule_multicast(
                    &pending,
                    n_rb,
                    n_re,
                    efficiency(&self.table, policy.reference_cqi())?,
                );
                trace.mbsfn_cqi = cqi;
                trace.mbsfn_rbs = alloc.used_rbs as u32;
                trace.mbsfn_rbs_reference = reference.used_rbs as u32;
                trace.cam_rbs = trace.mbsfn_rbs;
                for g in &alloc.grants {
                    let Some(mut f) = self.in_flight[g.source].take() else {
                        return Err(SimError::Internal(format!("grant for idle source {}", g.source)));
                    };
                    for r in f.receivers.iter_mut().filter(|r| r.residual > 0) {
                        let start = r.row * n_rb + g.rb_start;
                        let sinr = self.mc_sinr[start..start + g.n_rb].to_vec();
                        let ok = self.decode(&sinr, cqi)?;
                        r.residual = crate::traffic::consume(r.residual, g.bits, ok);
                    }
                    self.in_flight[g.source] = Some(f);
                }
                if !alloc.reassignable || !self.cfg.radio.reassign_unused {
                    ordinary_rbs = 0;
                }
            } else if !self.cfg.radio.reassign_unused {
                ordinary_rbs = 0;
            }
        }
        trace.max_cell_rbs = trace.mbsfn_rbs;
        for cell in 0..self.layout.n_cells() {
            if self.mask[cell] {
                let used = self.serve_ordinary(cell, 0, ordinary_rbs)?;
                trace.ordinary_rbs += used;
                trace.max_cell_rbs = trace.max_cell_rbs.max(used + trace.mbsfn_rbs);
            }
        }
        Ok(())
    }

    fn step_unicast(&mut self, trace: &mut TtiTrace) -> Result<()> {
        let n_rb = self.n_rb;
        let n_re = self.cfg.radio.n_re_unicast;
        let policy = self.cfg.run.cqi_policy;
        for cell in 0..self.layout.n_cells() {
            let mut copies = Vec::new();
            for (s, f) in self.in_flight.iter().enumerate() {
                let Some(f) = f else { continue };
                for r in f.receivers.iter().filter(|r| r.residual > 0) {
                    if self.pop.users[r.user].serving_cell != cell {
                        continue;
                    }
                    let cqi = self.copy_cqi(policy, r.row);
                    copies.push(PendingCopy {
                        source: s,
                        receiver: r.user,
                        generation_tti: f.packet.generation_tti,
                        residual_bits: r.residual,
                        efficiency: efficiency(&self.table, cqi)?,
                    });
                }
            }
            let alloc = schedule_unicast_cam_baseline(&copies, n_rb, n_re);
            for g in &alloc.grants {
                let row = self.row_of[g.receiver].expect("tracked");
                let cqi = self.copy_cqi(policy, row);
                let start = row * n_rb + g.rb_start;
                let sinr = self.uc_sinr[start..start + g.n_rb].to_vec();
                let ok = self.decode(&sinr, cqi)?;
                let f = self.in_flight[g.source]
                    .as_mut()
                    .ok_or_else(|| SimError::Internal(format!("copy grant for idle source {}", g.source)))?;
                let r = f
                    .receivers
                    .iter_mut()
                    .find(|r| r.user == g.receiver)
                    .ok_or_else(|| SimError::Internal("copy grant for unknown receiver".into()))?;
                r.residual = crate::traffic::consume(r.residual, g.bits, ok);
            }
            let cam = alloc.used_rbs as u32;
            let mut used = cam;
            if self.mask[cell] {
                trace.cam_rbs += cam;
                let ord = self.serve_ordinary(cell, alloc.used_rbs, n_rb - alloc.used_rbs)?;
                trace.ordinary_rbs += ord;
                used += ord;
            }
            trace.max_cell_rbs = trace.max_cell_rbs.max(used);
        }
        Ok(())
    }

    fn copy_cqi(&self, policy: CqiPolicy, row: usize) -> u8 {
        match policy {
            CqiPolicy::Fixed(k) => k,
            CqiPolicy::Adaptive { bound } => self.stale_uc(row).max(bound).max(1),
        }
    }
}

/// Subframes per frame the multicast demand needs at the reservation CQI.
fn plan_reservation(cfg: &ScenarioConfig, n_sources: usize, n_rb: usize, warnings: &mut Vec<String>) -> Result<(u32, u32)> {
    if cfg.run.mode != TransmissionMode::Multicast {
        return Ok((0, 0));
    }
    let eff = cfg.cqi_table()?.efficiency(cfg.radio.reservation_cqi)?;
    match required_subframes(
        f64::from(cfg.packet_bits()),
        n_sources,
        n_rb,
        cfg.radio.n_re_mbsfn,
        eff,
        cfg.traffic.period_ms,
    ) {
        Ok(n) => Ok((n, n)),
        Err(SimError::Infeasible { required, max }) => {
            let msg = format!("MBSFN demand needs {required} subframes per frame, reserving the maximum of {max}");
            warn!("{msg}");
            warnings.push(msg);
            Ok((required, max))
        }
        Err(e) => Err(e),
    }
}

/// Runs one scenario with the seed from its `[run]` section.
pub fn run(cfg: &ScenarioConfig) -> Result<RunRecord> {
    run_with_seed(cfg, cfg.run.seed)
}

pub fn run_with_seed(cfg: &ScenarioConfig, seed: u64) -> Result<RunRecord> {
    cfg.validate()?;
    let mut sim = Sim::new(cfg, seed)?;
    let n_rb = sim.n_rb;
    let n_tti = cfg.run.n_tti;
    let period = cfg.traffic.period_ms;
    let mut warnings = Vec::new();
    let (required, reserved) = plan_reservation(cfg, sim.source_users.len(), n_rb, &mut warnings)?;
    let plan = FramePlan::new(reserved.min(MAX_MBSFN_SUBFRAMES), n_rb, cfg.radio.n_re_mbsfn)?;

    let mut trace = Vec::with_capacity(n_tti as usize);
    for tti in 0..n_tti {
        if tti > 0 && cfg.users.mobility {
            advance_mobility_in_place(&sim.layout, &mut sim.pop, 1e-3);
        }
        if tti == 0 || cfg.users.mobility {
            sim.reassociate()?;
        }
        let mut snap = std::mem::replace(&mut sim.snap, ChannelSnapshot::zeros(Vec::new(), 0, 0, 0.0));
        sim.channel.advance_into(&sim.layout, &sim.pop, &mut snap)?;
        sim.snap = snap;
        sim.measure();
        sim.generate(tti)?;

        let mut t = TtiTrace {
            tti,
            ..TtiTrace::default()
        };
        if sim.multicast() {
            sim.step_multicast(tti, &plan, &mut t)?;
        } else {
            sim.step_unicast(&mut t)?;
        }
        if t.max_cell_rbs as usize > n_rb {
            return Err(SimError::Internal(format!(
                "TTI {tti}: a cell used {} of {n_rb} RBs",
                t.max_cell_rbs
            )));
        }
        t.backlog_bits = sim.settle(tti)?;
        trace.push(t);
    }

    let n_rows = (n_tti / period).saturating_sub(1) as usize;
    let latency = sim.log.into_matrix(n_rows, n_tti)?;
    let ordinary_users: Vec<usize> = sim.ordinary_by_cell.iter().flatten().map(|&(u, _)| u).collect();
    let ordinary_throughput_mbps: Vec<f64> = ordinary_users
        .iter()
        .map(|&u| if n_tti == 0 { 0.0 } else { sim.ordinary_bits[u] as f64 / n_tti as f64 / 1000.0 })
        .collect();
    let mean_throughput_mbps = if ordinary_throughput_mbps.is_empty() {
        0.0
    } else {
        ordinary_throughput_mbps.iter().sum::<f64>() / ordinary_throughput_mbps.len() as f64
    };

    let n_sources = sim.source_users.len();
    let n_mbsfn_cells = sim.layout.mbsfn_set.len();
    let ref_eff = sim.table.efficiency(cfg.run.cqi_policy.reference_cqi())?;
    let bits = f64::from(cfg.packet_bits());
    let window = (n_rb as u64 * period) as f64;
    let (utilization_pct, cam_rb_capacity) = match cfg.run.mode {
        TransmissionMode::Multicast => (
            utilization(bits, n_sources, window, f64::from(cfg.radio.n_re_mbsfn), ref_eff)?,
            n_rb as f64 * n_tti as f64,
        ),
        TransmissionMode::UnicastBaseline => (
            utilization(
                bits,
                n_sources * n_sources.saturating_sub(1),
                window * n_mbsfn_cells as f64,
                f64::from(cfg.radio.n_re_unicast),
                ref_eff,
            )?,
            (n_rb * n_mbsfn_cells) as f64 * n_tti as f64,
        ),
    };
    let cam_rbs: u64 = trace.iter().map(|t| u64::from(t.cam_rbs)).sum();
    let measured_utilization_pct = if cam_rb_capacity > 0.0 {
        cam_rbs as f64 / cam_rb_capacity * 100.0
    } else {
        0.0
    };
    let mean_latency_tti = latency.mean().unwrap_or(f64::NAN);
    let congested = required > MAX_MBSFN_SUBFRAMES || utilization_pct > 100.0 || mean_latency_tti > period as f64;
    if congested && warnings.is_empty() {
        let msg = format!("scenario is congested: mean latency {mean_latency_tti:.1} TTI, utilization {utilization_pct:.1}%");
        warn!("{msg}");
        warnings.push(msg);
    }

    let summary = Summary {
        mode: cfg.run.mode.to_string(),
        bandwidth_mhz: cfg.radio.bandwidth_mhz,
        cqi_policy: cfg.run.cqi_policy.to_string(),
        mean_latency_tti,
        mean_throughput_mbps,
        utilization_pct,
        measured_utilization_pct,
        congested,
    };
    Ok(RunRecord {
        config_hash: cfg.content_hash(),
        seed,
        summary,
        latency,
        source_users: sim.source_users.clone(),
        ordinary_users,
        ordinary_throughput_mbps,
        reserved_subframes: reserved,
        required_subframes: required,
        packets_generated: sim.buffers.iter().map(|b| b.packets_generated()).sum(),
        packets_superseded: sim.superseded,
        trace,
        warnings,
    })
}

/// Seed of replicate `k`: the scenario seed itself for `k = 0`.
pub fn replicate_seed(master: u64, k: u64) -> u64 {
    if k == 0 {
        master
    } else {
        stream_seed(master, &[0x5eed, k])
    }
}

/// Runs `n` independent drops of the same scenario.
pub fn replicate(cfg: &ScenarioConfig, n: u64) -> Result<Vec<RunRecord>> {
    (0..n).map(|k| run_with_seed(cfg, replicate_seed(cfg.run.seed, k))).collect()
}

/// Mean of each numeric summary column over replicates; `congested` is set
/// if any replicate was congested.
pub fn pooled_summary(records: &[RunRecord]) -> Result<Summary> {
    let first = records
        .first()
        .ok_or_else(|| SimError::InvalidInput("no replicates to pool".into()))?;
    let n = records.len() as f64;
    let avg = |f: fn(&Summary) -> f64| records.iter().map(|r| f(&r.summary)).sum::<f64>() / n;
    Ok(Summary {
        mode: first.summary.mode.clone(),
        bandwidth_mhz: first.summary.bandwidth_mhz,
        cqi_policy: first.summary.cqi_policy.clone(),
        mean_latency_tti: avg(|s| s.mean_latency_tti),
        mean_throughput_mbps: avg(|s| s.mean_throughput_mbps),
        utilization_pct: avg(|s| s.utilization_pct),
        measured_utilization_pct: avg(|s| s.measured_utilization_pct),
        congested: records.iter().any(|r| r.summary.congested),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        c.layout.mbsfn_rings = 0;
        c.users.per_cell = 3;
        c.users.cars_per_cell = 2;
        c.run.n_tti = 400;
        c
    }

    #[test]
    fn deterministic_for_seed() {
        let c = small();
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(a, b);
        let d = run_with_seed(&c, 99).unwrap();
        assert_ne!(a.latency, d.latency);
    }

    #[test]
    fn matrix_shape() {
        let r = run(&small()).unwrap();
        assert_eq!(r.source_users.len(), 2);
        assert_eq!(r.latency.n_users, 2);
        assert_eq!(r.latency.n_packets, 3);
        assert_eq!(r.trace.len(), 400);
    }

    #[test]
    fn replicate_seeds() {
        assert_eq!(replicate_seed(7, 0), 7);
        assert_ne!(replicate_seed(7, 1), replicate_seed(7, 2));
    }
}
