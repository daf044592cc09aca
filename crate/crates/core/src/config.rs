//! Declarative scenario description and its TOML file form.
//!
//! Every section has defaults, so an empty file is the reference scenario:
//! 7-cell MBSFN area inside one interference ring, 6 users per cell of which
//! 3 are cars at 100 km/h, 300-byte CAMs every 100 ms, 5 MHz, CQI 3.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::channel::{normalized_noise_variance, ChannelConfig, PathlossModel, TapProfile};
use crate::error::{Result, SimError};
use crate::link::{BlerModel, CqiTable};
use crate::scheduler::{n_rb_for_bandwidth, CqiPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmissionMode {
    /// CAMs ride MBSFN subframes, one transmission reaches every car.
    Multicast,
    /// Every CAM is sent separately to each receiving car.
    UnicastBaseline,
}

impl fmt::Display for TransmissionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransmissionMode::Multicast => "multicast",
            TransmissionMode::UnicastBaseline => "unicast",
        })
    }
}

impl FromStr for TransmissionMode {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "multicast" | "mbsfn" => Ok(TransmissionMode::Multicast),
            "unicast" | "unicast_baseline" | "unicast-baseline" => Ok(TransmissionMode::UnicastBaseline),
            other => Err(SimError::Parse(format!("unknown transmission mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub mbsfn_rings: u32,
    pub interference_rings: u32,
    pub inter_site_distance_m: f64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            mbsfn_rings: 1,
            interference_rings: 1,
            inter_site_distance_m: 500.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsersConfig {
    pub per_cell: usize,
    pub cars_per_cell: usize,
    pub car_speed_kmh: f64,
    /// Move cars every TTI. Doppler applies either way.
    pub mobility: bool,
}

impl Default for UsersConfig {
    fn default() -> Self {
        Self {
            per_cell: 6,
            cars_per_cell: 3,
            car_speed_kmh: 100.0,
            mobility: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub carrier_ghz: f64,
    pub profile: String,
    pub shadowing_std_db: f64,
    pub pathloss_intercept_db: f64,
    pub pathloss_slope_db: f64,
    pub min_distance_m: f64,
    /// Transmit power spectral density, constant across bandwidths
    /// (46 dBm over 18 MHz of occupied spectrum).
    pub tx_psd_dbm_hz: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    pub oscillators: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            carrier_ghz: 2.14,
            profile: "veha".into(),
            shadowing_std_db: 8.0,
            pathloss_intercept_db: 128.1,
            pathloss_slope_db: 37.6,
            min_distance_m: 35.0,
            tx_psd_dbm_hz: -26.55,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            oscillators: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub packet_bytes: u32,
    pub period_ms: u64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            packet_bytes: 300,
            period_ms: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub bandwidth_mhz: f64,
    /// Usable REs per RB pair in an MBSFN subframe (extended CP, minus
    /// control region and MBSFN reference signals).
    pub n_re_mbsfn: u32,
    /// Usable REs per RB pair in a normal unicast subframe.
    pub n_re_unicast: u32,
    /// CQI the MBSFN subframe reservation is sized for.
    pub reservation_cqi: u8,
    /// Hand fully idle MBSFN subframes to ordinary users.
    pub reassign_unused: bool,
    /// Age in TTIs of the CQI reports the scheduler sees.
    pub feedback_delay_tti: u64,
    pub bler_slope_db: f64,
    /// Decode every transport block successfully.
    pub error_free: bool,
    /// Optional TOML file with a replacement CQI table.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cqi_table_file: Option<String>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_mhz: 5.0,
            n_re_mbsfn: 102,
            n_re_unicast: 120,
            reservation_cqi: 3,
            reassign_unused: true,
            feedback_delay_tti: 1,
            bler_slope_db: 1.0,
            error_free: false,
            cqi_table_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: TransmissionMode,
    pub cqi_policy: CqiPolicy,
    pub n_tti: u64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: TransmissionMode::Multicast,
            cqi_policy: CqiPolicy::Fixed(3),
            n_tti: 10_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub layout: LayoutConfig,
    pub users: UsersConfig,
    pub channel: ChannelSection,
    pub traffic: TrafficConfig,
    pub radio: RadioConfig,
    pub run: RunConfig,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if !(self.layout.inter_site_distance_m > 0.0) {
            return bad("layout.inter_site_distance_m must be positive".into());
        }
        if self.layout.interference_rings < 1 {
            return bad("layout.interference_rings must be >= 1".into());
        }
        if self.users.cars_per_cell > self.users.per_cell {
            return bad("users.cars_per_cell exceeds users.per_cell".into());
        }
        if !(self.users.car_speed_kmh >= 0.0) {
            return bad("users.car_speed_kmh must be >= 0".into());
        }
        if !(self.channel.carrier_ghz > 0.0) {
            return bad("channel.carrier_ghz must be positive".into());
        }
        if !(self.channel.shadowing_std_db >= 0.0) {
            return bad("channel.shadowing_std_db must be >= 0".into());
        }
        if self.channel.oscillators == 0 {
            return bad("channel.oscillators must be >= 1".into());
        }
        TapProfile::by_name(&self.channel.profile)?;
        if self.traffic.packet_bytes == 0 || self.traffic.period_ms == 0 {
            return bad("traffic.packet_bytes and traffic.period_ms must be positive".into());
        }
        n_rb_for_bandwidth(self.radio.bandwidth_mhz)?;
        if self.radio.n_re_mbsfn == 0 || self.radio.n_re_unicast == 0 {
            return bad("radio.n_re_* must be positive".into());
        }
        if !(1..=15).contains(&self.radio.reservation_cqi) {
            return bad("radio.reservation_cqi must be in 1..=15".into());
        }
        if !(self.radio.bler_slope_db > 0.0) {
            return bad("radio.bler_slope_db must be positive".into());
        }
        self.run.cqi_policy.validate()?;
        self.cqi_table()?.validate()?;
        Ok(())
    }

    pub fn n_rb(&self) -> Result<usize> {
        n_rb_for_bandwidth(self.radio.bandwidth_mhz)
    }

    pub fn packet_bits(&self) -> u32 {
        self.traffic.packet_bytes * 8
    }

    pub fn car_speed_mps(&self) -> f64 {
        self.users.car_speed_kmh / 3.6
    }

    pub fn cqi_table(&self) -> Result<CqiTable> {
        match &self.radio.cqi_table_file {
            None => Ok(CqiTable::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
                let table: CqiTable = toml::from_str(&text).map_err(|e| SimError::Parse(format!("{path}: {e}")))?;
                Ok(table)
            }
        }
    }

    pub fn bler_model(&self) -> BlerModel {
        BlerModel {
            slope_db: self.radio.bler_slope_db,
            ..BlerModel::default()
        }
    }

    pub fn channel_config(&self) -> Result<ChannelConfig> {
        let c = &self.channel;
        Ok(ChannelConfig {
            carrier_hz: c.carrier_ghz * 1e9,
            pathloss: PathlossModel {
                intercept_db: c.pathloss_intercept_db,
                slope_db: c.pathloss_slope_db,
                min_distance_m: c.min_distance_m,
            },
            shadowing_std_db: c.shadowing_std_db,
            profile: TapProfile::by_name(&c.profile)?,
            n_oscillators: c.oscillators,
            tti_s: 1e-3,
            n_rb: self.n_rb()?,
            noise_variance: normalized_noise_variance(c.tx_psd_dbm_hz, c.noise_psd_dbm_hz, c.noise_figure_db),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        toml::from_str(&text).map_err(|e| SimError::Parse(format!("{}: {e}", path.display())))
    }

    /// Git blob hash of the canonical TOML form.
    pub fn content_hash(&self) -> String {
        let body = self.to_toml_string();
        let mut h = Sha1::new();
        h.update(format!("blob {}\0", body.len()).as_bytes());
        h.update(body.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Short label such as `multicast_5mhz_fixed3`.
    pub fn label(&self) -> String {
        let policy = match self.run.cqi_policy {
            CqiPolicy::Fixed(c) => format!("fixed{c}"),
            CqiPolicy::Adaptive { bound } => format!("adaptive{bound}"),
        };
        format!("{}_{}mhz_{}", self.run.mode, self.radio.bandwidth_mhz, policy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_reference_scenario() {
        let c = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        c.validate().unwrap();
        assert_eq!(c.packet_bits(), 2400);
        assert!((c.car_speed_mps() - 27.777_777).abs() < 1e-5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml_str("[radio]\nbandwidth = 5\n").is_err());
        assert!(ScenarioConfig::from_toml_str("[nonsense]\n").is_err());
    }

    #[test]
    fn round_trip_and_hash() {
        let mut c = ScenarioConfig::default();
        c.run.cqi_policy = CqiPolicy::Adaptive { bound: 3 };
        c.radio.bandwidth_mhz = 20.0;
        let text = c.to_toml_string();
        let back = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml_string(), text);
        assert_eq!(back.content_hash(), c.content_hash());
        let mut d = c.clone();
        d.run.seed += 1;
        assert_ne!(d.content_hash(), c.content_hash());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = ScenarioConfig::default();
        c.radio.bandwidth_mhz = 7.0;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.users.cars_per_cell = 9;
        assert!(c.validate().is_err());
        let mut c = ScenarioConfig::default();
        c.channel.profile = "pedb".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("unicast".parse::<TransmissionMode>().unwrap(), TransmissionMode::UnicastBaseline);
        assert_eq!("multicast".parse::<TransmissionMode>().unwrap(), TransmissionMode::Multicast);
        assert!("broadcast".parse::<TransmissionMode>().is_err());
    }
}
