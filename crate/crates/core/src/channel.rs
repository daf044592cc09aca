//! Channel coefficients `h = gamma * h_tilde` per user, cell and resource block.
//!
//! `gamma` bundles distance pathloss and log-normal shadowing. `h_tilde` is a
//! tapped-delay-line Rayleigh process: every tap is a sum of sinusoids whose
//! Doppler shifts sample the Jakes spectrum on an evenly spaced (randomly
//! rotated) angle grid, so the time-averaged tap autocorrelation follows
//! `J0(2 pi f_d tau)` and the time-averaged tap power equals the tap weight.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::stream_seed;
use crate::topology::{CellLayout, UserPopulation};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const RB_BANDWIDTH_HZ: f64 = 180e3;
pub const SUBCARRIER_SPACING_HZ: f64 = 15e3;

/// Distance-dependent pathloss `intercept + slope * log10(d_km)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathlossModel {
    pub intercept_db: f64,
    pub slope_db: f64,
    pub min_distance_m: f64,
}

impl Default for PathlossModel {
    fn default() -> Self {
        Self {
            intercept_db: 128.1,
            slope_db: 37.6,
            min_distance_m: 35.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroscopicGain {
    pub pathloss_db: f64,
    pub shadowing_db: f64,
    /// Linear amplitude gain.
    pub gamma: f64,
}

impl MacroscopicGain {
    pub fn gain_db(&self) -> f64 {
        -self.pathloss_db + self.shadowing_db
    }
}

impl PathlossModel {
    pub fn pathloss_db(&self, distance_m: f64) -> f64 {
        let d = if distance_m.is_nan() || distance_m < self.min_distance_m {
            if !(distance_m > 0.0) {
                log::warn!(
                    "distance {distance_m} m is not positive, clamping to {} m",
                    self.min_distance_m
                );
            }
            self.min_distance_m
        } else {
            distance_m
        };
        self.intercept_db + self.slope_db * (d / 1000.0).log10()
    }

    pub fn macroscopic_gain(&self, distance_m: f64, shadowing_db: f64) -> MacroscopicGain {
        let pathloss_db = self.pathloss_db(distance_m);
        let gain_db = -pathloss_db + shadowing_db;
        MacroscopicGain {
            pathloss_db,
            shadowing_db,
            gamma: 10f64.powf(gain_db / 20.0),
        }
    }
}

/// Macroscopic gain under the default urban-macro pathloss model.
pub fn macroscopic_gain(distance_m: f64, shadowing_db: f64) -> MacroscopicGain {
    PathlossModel::default().macroscopic_gain(distance_m, shadowing_db)
}

/// Power delay profile of a tapped delay line. Powers are linear and sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapProfile {
    pub name: String,
    pub delays_s: Vec<f64>,
    pub powers: Vec<f64>,
}

impl TapProfile {
    pub fn from_db(name: &str, delays_ns: &[f64], powers_db: &[f64]) -> Self {
        let lin: Vec<f64> = powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        Self {
            name: name.to_string(),
            delays_s: delays_ns.iter().map(|d| d * 1e-9).collect(),
            powers: lin.iter().map(|p| p / total).collect(),
        }
    }

    /// ITU-R Vehicular-A, six taps.
    pub fn veh_a() -> Self {
        Self::from_db(
            "veha",
            &[0.0, 310.0, 710.0, 1090.0, 1730.0, 2510.0],
            &[0.0, -1.0, -9.0, -10.0, -15.0, -20.0],
        )
    }

    /// Frequency-flat Rayleigh channel.
    pub fn flat() -> Self {
        Self::from_db("flat", &[0.0], &[0.0])
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "veha" | "veh-a" | "vehicular-a" => Ok(Self::veh_a()),
            "flat" | "rayleigh" => Ok(Self::flat()),
            other => Err(SimError::Config(format!("unknown tap profile '{other}'"))),
        }
    }

    pub fn n_taps(&self) -> usize {
        self.delays_s.len()
    }
}

pub fn doppler_frequency(speed_mps: f64, carrier_hz: f64) -> f64 {
    speed_mps * carrier_hz / SPEED_OF_LIGHT
}

/// Per (user, cell) microscopic fading process.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingProcess {
    pub tap_delays_s: Vec<f64>,
    pub tap_powers: Vec<f64>,
    pub doppler_hz: f64,
    n_osc: usize,
    /// Angular Doppler shift per oscillator, tap-major.
    omega: Vec<f64>,
    phase: Vec<f64>,
}

impl FadingProcess {
    pub fn new(profile: &TapProfile, doppler_hz: f64, n_oscillators: usize, rng: &mut impl Rng) -> Self {
        let n_osc = n_oscillators.max(1);
        let mut omega = Vec::with_capacity(profile.n_taps() * n_osc);
        let mut phase = Vec::with_capacity(profile.n_taps() * n_osc);
        let wd = TAU * doppler_hz;
        for _ in 0..profile.n_taps() {
            // Keeping the grid offset away from 0 and 1/2 prevents mirrored
            // angles, which would give two oscillators the same Doppler shift.
            let theta: f64 = rng.gen_range(0.125..0.375);
            for n in 0..n_osc {
                let alpha = TAU * (n as f64 + theta) / n_osc as f64;
                omega.push(wd * alpha.cos());
                phase.push(rng.gen_range(0.0..TAU));
            }
        }
        Self {
            tap_delays_s: profile.delays_s.clone(),
            tap_powers: profile.powers.clone(),
            doppler_hz,
            n_osc,
            omega,
            phase,
        }
    }

    pub fn n_taps(&self) -> usize {
        self.tap_delays_s.len()
    }

    /// Complex tap amplitudes at time `t`.
    pub fn tap_gains(&self, t: f64) -> Vec<Complex64> {
        (0..self.n_taps())
            .map(|k| {
                let amp = (self.tap_powers[k] / self.n_osc as f64).sqrt();
                let range = k * self.n_osc..(k + 1) * self.n_osc;
                let sum: Complex64 = self.omega[range.clone()]
                    .iter()
                    .zip(&self.phase[range])
                    .map(|(w, p)| Complex64::from_polar(1.0, w * t + p))
                    .sum();
                sum * amp
            })
            .collect()
    }

    /// `h_tilde(t, f) = sum_k a_k(t) exp(-i 2 pi f tau_k)`.
    pub fn coefficient(&self, t: f64, freq_offset_hz: f64) -> Complex64 {
        self.tap_gains(t)
            .iter()
            .zip(&self.tap_delays_s)
            .map(|(a, tau)| a * Complex64::from_polar(1.0, -TAU * freq_offset_hz * tau))
            .sum()
    }

    /// Incremental evaluator producing tap gains at `t0, t0 + dt, ...`.
    pub fn stepper(&self, t0: f64, dt: f64) -> FadingStepper {
        let mut phasor = Vec::with_capacity(self.omega.len());
        let mut rotor = Vec::with_capacity(self.omega.len());
        for k in 0..self.n_taps() {
            let amp = (self.tap_powers[k] / self.n_osc as f64).sqrt();
            for n in k * self.n_osc..(k + 1) * self.n_osc {
                phasor.push(Complex64::from_polar(amp, self.omega[n] * t0 + self.phase[n]));
                rotor.push(Complex64::from_polar(1.0, self.omega[n] * dt));
            }
        }
        FadingStepper {
            n_osc: self.n_osc,
            phasor,
            rotor,
        }
    }
}

/// Convenience wrapper for [`FadingProcess::coefficient`].
pub fn fading_coefficient(process: &FadingProcess, t: f64, freq_offset_hz: f64) -> Complex64 {
    process.coefficient(t, freq_offset_hz)
}

#[derive(Debug, Clone)]
pub struct FadingStepper {
    n_osc: usize,
    phasor: Vec<Complex64>,
    rotor: Vec<Complex64>,
}

impl FadingStepper {
    /// Writes the current tap gains into `out` and advances one step.
    pub fn next_into(&mut self, out: &mut [Complex64]) {
        for (k, slot) in out.iter_mut().enumerate() {
            let range = k * self.n_osc..(k + 1) * self.n_osc;
            let mut acc = Complex64::new(0.0, 0.0);
            for (z, w) in self.phasor[range.clone()].iter_mut().zip(&self.rotor[range]) {
                acc += *z;
                *z *= *w;
            }
            *slot = acc;
        }
    }
}

/// Resource-block center frequencies relative to the carrier.
pub fn rb_center_offsets(n_rb: usize) -> Vec<f64> {
    let half = n_rb as f64 * RB_BANDWIDTH_HZ / 2.0;
    (0..n_rb)
        .map(|k| (k as f64 + 0.5) * RB_BANDWIDTH_HZ - half)
        .collect()
}

/// Thermal noise per subcarrier relative to the transmit power per subcarrier.
pub fn normalized_noise_variance(tx_psd_dbm_hz: f64, noise_psd_dbm_hz: f64, noise_figure_db: f64) -> f64 {
    10f64.powf((noise_psd_dbm_hz + noise_figure_db - tx_psd_dbm_hz) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub carrier_hz: f64,
    pub pathloss: PathlossModel,
    pub shadowing_std_db: f64,
    pub profile: TapProfile,
    pub n_oscillators: usize,
    pub tti_s: f64,
    pub n_rb: usize,
    /// Noise variance normalized to per-subcarrier transmit power.
    pub noise_variance: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 2.14e9,
            pathloss: PathlossModel::default(),
            shadowing_std_db: 8.0,
            profile: TapProfile::veh_a(),
            n_oscillators: 16,
            tti_s: 1e-3,
            n_rb: 25,
            noise_variance: normalized_noise_variance(-26.55, -174.0, 9.0),
        }
    }
}

/// Channel state of every tracked user towards every cell in one TTI.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSnapshot {
    pub tti: u64,
    /// User id of each row.
    pub users: Vec<usize>,
    pub n_cells: usize,
    pub n_rb: usize,
    /// Row-major `[row][cell][rb]`.
    pub h: Vec<Complex64>,
    pub noise_variance: f64,
}

impl ChannelSnapshot {
    pub fn zeros(users: Vec<usize>, n_cells: usize, n_rb: usize, noise_variance: f64) -> Self {
        let h = vec![Complex64::new(0.0, 0.0); users.len() * n_cells * n_rb];
        Self {
            tti: 0,
            users,
            n_cells,
            n_rb,
            h,
            noise_variance,
        }
    }

    #[inline]
    pub fn index(&self, row: usize, cell: usize, rb: usize) -> usize {
        (row * self.n_cells + cell) * self.n_rb + rb
    }

    #[inline]
    pub fn h(&self, row: usize, cell: usize, rb: usize) -> Complex64 {
        self.h[self.index(row, cell, rb)]
    }

    pub fn set(&mut self, row: usize, cell: usize, rb: usize, value: Complex64) {
        let i = self.index(row, cell, rb);
        self.h[i] = value;
    }

    pub fn row_of(&self, user: usize) -> Option<usize> {
        self.users.iter().position(|&u| u == user)
    }
}

/// Owns the per-pair shadowing and fading state for a run.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    cfg: ChannelConfig,
    users: Vec<usize>,
    n_cells: usize,
    n_taps: usize,
    /// `[row][cell]`, frozen for the run.
    shadowing_db: Vec<f64>,
    processes: Vec<FadingProcess>,
    steppers: Vec<FadingStepper>,
    next_tti: u64,
    /// `[rb][tap]` phase factors `exp(-i 2 pi f_rb tau_tap)`.
    phase_table: Vec<Complex64>,
    taps_scratch: Vec<Complex64>,
}

impl ChannelModel {
    /// Draws shadowing and a fading process for every (tracked user, cell)
    /// pair. Each pair has its own RNG stream keyed by (seed, user, cell).
    pub fn new(
        layout: &CellLayout,
        population: &UserPopulation,
        tracked_users: Vec<usize>,
        cfg: ChannelConfig,
        seed: u64,
    ) -> Result<Self> {
        let n_cells = layout.n_cells();
        let shadow = Normal::new(0.0, cfg.shadowing_std_db.max(0.0))
            .map_err(|e| SimError::Config(format!("shadowing: {e}")))?;
        let mut shadowing_db = Vec::with_capacity(tracked_users.len() * n_cells);
        let mut processes = Vec::with_capacity(tracked_users.len() * n_cells);
        for &u in &tracked_users {
            let user = population
                .users
                .get(u)
                .ok_or_else(|| SimError::Internal(format!("tracked user {u} not in population")))?;
            let fd = doppler_frequency(user.velocity.norm(), cfg.carrier_hz);
            for c in 0..n_cells {
                let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, &[0xc4a7, u as u64, c as u64]));
                shadowing_db.push(shadow.sample(&mut rng));
                processes.push(FadingProcess::new(&cfg.profile, fd, cfg.n_oscillators, &mut rng));
            }
        }
        let offsets = rb_center_offsets(cfg.n_rb);
        let phase_table = offsets
            .iter()
            .flat_map(|f| {
                cfg.profile
                    .delays_s
                    .iter()
                    .map(move |tau| Complex64::from_polar(1.0, -TAU * f * tau))
            })
            .collect();
        let steppers = processes.iter().map(|p| p.stepper(0.0, cfg.tti_s)).collect();
        let n_taps = cfg.profile.n_taps();
        Ok(Self {
            cfg,
            users: tracked_users,
            n_cells,
            n_taps,
            shadowing_db,
            processes,
            steppers,
            next_tti: 0,
            phase_table,
            taps_scratch: vec![Complex64::new(0.0, 0.0); n_taps],
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn tracked_users(&self) -> &[usize] {
        &self.users
    }

    pub fn shadowing_db(&self, row: usize, cell: usize) -> f64 {
        self.shadowing_db[row * self.n_cells + cell]
    }

    pub fn process(&self, row: usize, cell: usize) -> &FadingProcess {
        &self.processes[row * self.n_cells + cell]
    }

    /// Macroscopic amplitude gain of every tracked user towards every cell at
    /// the users' current positions, `[row][cell]`.
    pub fn macroscopic_gains(&self, layout: &CellLayout, population: &UserPopulation) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.users.len() * self.n_cells);
        for (row, &u) in self.users.iter().enumerate() {
            let user = population
                .users
                .get(u)
                .ok_or_else(|| SimError::Internal(format!("no fading process for user {u}")))?;
            for (c, cell) in layout.cells.iter().enumerate() {
                let d = (user.position - cell.position).norm();
                out.push(
                    self.cfg
                        .pathloss
                        .macroscopic_gain(d, self.shadowing_db[row * self.n_cells + c])
                        .gamma,
                );
            }
        }
        Ok(out)
    }

    fn check_shape(&self, layout: &CellLayout) -> Result<()> {
        if layout.n_cells() != self.n_cells || self.processes.len() != self.users.len() * self.n_cells {
            return Err(SimError::Internal(format!(
                "channel state covers {} pairs, layout needs {}",
                self.processes.len(),
                self.users.len() * layout.n_cells()
            )));
        }
        Ok(())
    }

    /// Evaluates the snapshot at `tti` directly from the process definitions.
    pub fn snapshot(&self, layout: &CellLayout, population: &UserPopulation, tti: u64) -> Result<ChannelSnapshot> {
        self.check_shape(layout)?;
        let gammas = self.macroscopic_gains(layout, population)?;
        let t = tti as f64 * self.cfg.tti_s;
        let mut snap = ChannelSnapshot::zeros(self.users.clone(), self.n_cells, self.cfg.n_rb, self.cfg.noise_variance);
        snap.tti = tti;
        for pair in 0..self.processes.len() {
            let taps = self.processes[pair].tap_gains(t);
            self.fill_pair(&mut snap, pair, gammas[pair], &taps);
        }
        Ok(snap)
    }

    /// Produces the next snapshot in sequence, advancing fading by one TTI.
    pub fn advance(&mut self, layout: &CellLayout, population: &UserPopulation) -> Result<ChannelSnapshot> {
        let mut snap = ChannelSnapshot::zeros(self.users.clone(), self.n_cells, self.cfg.n_rb, self.cfg.noise_variance);
        self.advance_into(layout, population, &mut snap)?;
        Ok(snap)
    }

    /// Like [`advance`](Self::advance) but reuses `snap`'s buffer.
    pub fn advance_into(
        &mut self,
        layout: &CellLayout,
        population: &UserPopulation,
        snap: &mut ChannelSnapshot,
    ) -> Result<()> {
        self.check_shape(layout)?;
        let gammas = self.macroscopic_gains(layout, population)?;
        snap.tti = self.next_tti;
        snap.n_cells = self.n_cells;
        snap.n_rb = self.cfg.n_rb;
        snap.noise_variance = self.cfg.noise_variance;
        snap.users.clone_from(&self.users);
        snap.h.resize(self.processes.len() * self.cfg.n_rb, Complex64::new(0.0, 0.0));
        let mut taps = std::mem::take(&mut self.taps_scratch);
        for pair in 0..self.processes.len() {
            self.steppers[pair].next_into(&mut taps);
            self.fill_pair(snap, pair, gammas[pair], &taps);
        }
        self.taps_scratch = taps;
        self.next_tti += 1;
        Ok(())
    }

    fn fill_pair(&self, snap: &mut ChannelSnapshot, pair: usize, gamma: f64, taps: &[Complex64]) {
        let n_rb = self.cfg.n_rb;
        let base = pair * n_rb;
        for rb in 0..n_rb {
            let row = &self.phase_table[rb * self.n_taps..(rb + 1) * self.n_taps];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, e) in taps.iter().zip(row) {
                acc += a * e;
            }
            snap.h[base + rb] = acc * gamma;
        }
    }
}

/// Zeroth-order Bessel function of the first kind (Abramowitz & Stegun 9.4.1/9.4.3).
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax <= 3.0 {
        let y = (x / 3.0).powi(2);
        1.0 + y
            * (-2.249_999_7
                + y * (1.265_620_8
                    + y * (-0.316_386_6 + y * (0.044_447_9 + y * (-0.003_944_4 + y * 0.000_210_0)))))
    } else {
        let y = 3.0 / ax;
        let f0 = 0.797_884_56
            + y * (-0.000_000_77
                + y * (-0.005_527_40
                    + y * (-0.000_095_12 + y * (0.001_372_37 + y * (-0.000_728_05 + y * 0.000_144_76)))));
        let theta0 = ax - 0.785_398_16
            + y * (-0.041_663_97
                + y * (-0.000_039_54
                    + y * (0.002_625_73 + y * (-0.000_541_25 + y * (-0.000_293_33 + y * 0.000_135_58)))));
        f0 * theta0.cos() / ax.sqrt()
    }
}
