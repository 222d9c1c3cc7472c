//! Run configuration.
//!
//! Every key has a default, so a config file only needs the values it
//! overrides. Decibel-valued radio keys are converted to linear units once,
//! through [`RadioConfig::linear`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::radio::RadioParams;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sim: SimSection,
    pub radio: RadioConfig,
    pub energy: EnergyConfig,
    pub tasks: TaskConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub reward: RewardConfig,
    pub fl: FlConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    /// Side length of the square service area, m.
    pub area: f64,
    pub num_uavs: usize,
    pub num_devices: usize,
    /// World step, s.
    pub dt: f64,
    /// Base interval of the local-graph refresh, s.
    pub dt_base: f64,
    /// Speed sensitivity of the graph refresh interval, 1/(m/s).
    pub alpha_speed: f64,
    /// Episode length, s.
    pub episode_len: f64,
    pub episodes: usize,
    /// Turn the `dt >= 2 v_max / a` check into a hard validation error.
    pub enforce_dt_check: bool,
    pub v_max: f64,
    pub accel: f64,
    /// Initial battery, J.
    pub battery: f64,
    /// CPU frequency range, Hz.
    pub cpu_freq: [f64; 2],
    /// Altitude range, m.
    pub altitude: [f64; 2],
    /// Queue capacity, cycles.
    pub load_max: f64,
    /// Per-UAV offloading decision time, s.
    pub decision_time: f64,
    /// Maximum number of UAVs on a processing path.
    pub max_hops: usize,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            area: 1000.0,
            num_uavs: 3,
            num_devices: 10,
            dt: 1.0,
            dt_base: 2.0,
            alpha_speed: 0.1,
            episode_len: 300.0,
            episodes: 50,
            enforce_dt_check: false,
            v_max: 20.0,
            accel: 5.0,
            battery: 500e3,
            cpu_freq: [1e9, 3e9],
            altitude: [80.0, 150.0],
            load_max: 1e9,
            decision_time: 0.01,
            max_hops: 3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub g0_db: f64,
    pub g_inter_db: f64,
    pub bandwidth: f64,
    pub bandwidth_inter: f64,
    pub noise_dbm: f64,
    pub rssi_min_dbm: f64,
    pub rssi_fl_dbm: f64,
    pub r_comm: f64,
    pub p_tx_uav: f64,
    pub p_rx_uav: f64,
    pub p_tx_dev: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            g0_db: -30.0,
            g_inter_db: -20.0,
            bandwidth: 10e6,
            bandwidth_inter: 20e6,
            noise_dbm: -114.0,
            rssi_min_dbm: -90.0,
            rssi_fl_dbm: -85.0,
            r_comm: 400.0,
            p_tx_uav: 0.5,
            p_rx_uav: 0.1,
            p_tx_dev: 0.1,
        }
    }
}

impl RadioConfig {
    pub fn linear(&self) -> RadioParams {
        use crate::radio::{db_to_linear, dbm_to_watts};
        RadioParams {
            g0: db_to_linear(self.g0_db),
            g_inter: db_to_linear(self.g_inter_db),
            bandwidth: self.bandwidth,
            bandwidth_inter: self.bandwidth_inter,
            noise: dbm_to_watts(self.noise_dbm),
            rssi_min: dbm_to_watts(self.rssi_min_dbm),
            rssi_fl: dbm_to_watts(self.rssi_fl_dbm),
            r_comm: self.r_comm,
            p_tx_uav: self.p_tx_uav,
            p_rx_uav: self.p_rx_uav,
            p_tx_dev: self.p_tx_dev,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyConfig {
    pub p_hover: f64,
    pub air_density: f64,
    pub drag_area: f64,
    pub drag_coeff: f64,
    pub kappa: f64,
    /// Use the literal 1e-18 capacitance coefficient instead of `kappa`.
    pub paper_kappa: bool,
    pub p_cpu: f64,
    pub p_idle: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            p_hover: 80.0,
            air_density: 1.225,
            drag_area: 0.1,
            drag_coeff: 0.3,
            kappa: 1e-28,
            paper_kappa: false,
            p_cpu: 10.0,
            p_idle: 5.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Per-device arrival rate range, tasks/s.
    pub rate: [f64; 2],
    /// Mcycles.
    pub cycles_m: [f64; 2],
    /// MB.
    pub in_mb: [f64; 2],
    /// MB.
    pub out_mb: [f64; 2],
    /// s.
    pub deadline: [f64; 2],
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            rate: [0.3, 0.8],
            cycles_m: [50.0, 200.0],
            in_mb: [1.0, 3.0],
            out_mb: [0.1, 0.5],
            deadline: [5.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    /// Dual-layer graph attention.
    Gat,
    /// Structureless feedforward extractor (ablation).
    Mlp,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub gat_hidden: Vec<usize>,
    pub heads: usize,
    pub gru_hidden: usize,
    pub shared: usize,
    pub vel_hidden: Vec<usize>,
    pub off_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub gamma_urg: f64,
    pub features: FeatureMode,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            gat_hidden: vec![128, 64],
            heads: 4,
            gru_hidden: 128,
            shared: 128,
            vel_hidden: vec![128, 128],
            off_hidden: vec![128, 128],
            critic_hidden: vec![128, 64],
            gamma_urg: 0.5,
            features: FeatureMode::Gat,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub gamma: f64,
    pub lr_vel: f64,
    pub lr_off: f64,
    pub lr_critic: f64,
    /// Rate for the feature extractor, GRU and shared layer.
    pub lr_features: f64,
    pub entropy: f64,
    /// On-policy window length, steps.
    pub window: usize,
    pub sigma_min: f64,
    /// Global gradient-norm limit per update; 0 disables clipping.
    pub grad_clip: f64,
    /// Multiplier on the reward fed to the learner; logged rewards are
    /// unscaled.
    pub reward_scale: f64,
    /// Standardize actor advantages within each update window.
    pub normalize_advantage: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            lr_vel: 3e-4,
            lr_off: 3e-4,
            lr_critic: 5e-4,
            lr_features: 3e-4,
            entropy: 0.01,
            window: 32,
            sigma_min: 1e-3,
            grad_clip: 1.0,
            reward_scale: 0.05,
            normalize_advantage: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub eta: f64,
    /// Charge a task's completion time and overshoot to the step it was
    /// admitted in; its timing is already fixed then.
    pub credit_at_admission: bool,
    /// Every UAV is charged the fleet's completion time and overshoot,
    /// divided by the UAV count, instead of only the tasks it served.
    pub team_credit: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.5, lambda: 10.0, eta: 0.1, credit_at_admission: false, team_credit: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FlConfig {
    pub enabled: bool,
    pub quantize: bool,
    pub reputation: bool,
    /// Also exchange the feature extractor, GRU and shared layer.
    pub aggregate_features: bool,
    pub b_min: u8,
    pub b_max: u8,
    /// Hz.
    pub f_base: f64,
    pub alpha_mobility: f64,
    pub alpha_succ: f64,
    pub alpha_stab: f64,
    pub rho: f64,
    pub drop_prob: f64,
    /// Exchange timeout, s. Defaults to one world step.
    pub timeout: Option<f64>,
    /// Charge transmit/receive energy for parameter exchange.
    pub debit_energy: bool,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            quantize: true,
            reputation: true,
            aggregate_features: true,
            b_min: 4,
            b_max: 16,
            f_base: 0.03,
            alpha_mobility: 0.05,
            alpha_succ: 0.6,
            alpha_stab: 0.4,
            rho: 0.75,
            drop_prob: 0.0,
            timeout: None,
            debit_energy: false,
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sim: SimSection::default(),
            radio: RadioConfig::default(),
            energy: EnergyConfig::default(),
            tasks: TaskConfig::default(),
            network: NetworkConfig::default(),
            training: TrainingConfig::default(),
            reward: RewardConfig::default(),
            fl: FlConfig::default(),
        }
    }
}

impl SimConfig {
    /// Desk-scale profile: 3 UAVs, 10 devices, 50 episodes.
    pub fn desk() -> Self {
        Self::default()
    }

    /// Full-scale profile: 6 UAVs, 40 devices, 100 episodes.
    pub fn paper() -> Self {
        let mut cfg = Self::default();
        cfg.sim.num_uavs = 6;
        cfg.sim.num_devices = 40;
        cfg.sim.episodes = 100;
        cfg
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Config(format!("unknown profile '{other}'"))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical TOML serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn steps_per_episode(&self) -> usize {
        (self.sim.episode_len / self.sim.dt).round() as usize
    }

    pub fn kappa(&self) -> f64 {
        if self.energy.paper_kappa {
            1e-18
        } else {
            self.energy.kappa
        }
    }

    pub fn fl_timeout(&self) -> f64 {
        self.fl.timeout.unwrap_or(self.sim.dt)
    }

    /// Smallest step that respects the acceleration limit.
    pub fn min_dt(&self) -> f64 {
        2.0 * self.sim.v_max / self.sim.accel
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sim;
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if s.num_uavs == 0 || s.num_devices == 0 {
            return bad("num_uavs and num_devices must be >= 1");
        }
        if !(s.dt > 0.0 && s.area > 0.0 && s.episode_len >= s.dt) {
            return bad("dt, area must be positive and episode_len >= dt");
        }
        if !(s.v_max > 0.0 && s.accel > 0.0 && s.battery > 0.0 && s.load_max > 0.0) {
            return bad("v_max, accel, battery, load_max must be positive");
        }
        if s.dt_base <= 0.0 || s.alpha_speed < 0.0 {
            return bad("dt_base must be positive and alpha_speed non-negative");
        }
        if s.max_hops == 0 {
            return bad("max_hops must be >= 1");
        }
        for (name, r) in [
            ("sim.cpu_freq", s.cpu_freq),
            ("sim.altitude", s.altitude),
            ("tasks.rate", self.tasks.rate),
            ("tasks.cycles_m", self.tasks.cycles_m),
            ("tasks.in_mb", self.tasks.in_mb),
            ("tasks.out_mb", self.tasks.out_mb),
            ("tasks.deadline", self.tasks.deadline),
        ] {
            if !(r[0] <= r[1] && r[0] >= 0.0) {
                return Err(Error::Config(format!("{name} must be an ordered non-negative range")));
            }
        }
        if self.tasks.cycles_m[0] <= 0.0
            || self.tasks.in_mb[0] <= 0.0
            || self.tasks.out_mb[0] <= 0.0
            || self.tasks.deadline[0] <= 0.0
            || s.cpu_freq[0] <= 0.0
        {
            return bad("task sizes, deadlines and cpu frequencies must be positive");
        }
        let r = &self.radio;
        if r.bandwidth_inter < r.bandwidth {
            return bad("radio.bandwidth_inter must be >= radio.bandwidth");
        }
        if [r.bandwidth, r.r_comm, r.p_tx_uav, r.p_rx_uav, r.p_tx_dev].iter().any(|v| *v <= 0.0) {
            return bad("radio powers, bandwidths and range must be positive");
        }
        let w = &self.reward;
        if (w.alpha + w.beta - 1.0).abs() > 1e-9 || w.lambda < 0.0 || w.eta < 0.0 {
            return bad("reward.alpha + reward.beta must be 1 and lambda, eta >= 0");
        }
        let n = &self.network;
        if n.gat_hidden.is_empty() || n.heads == 0 || n.gat_hidden.iter().any(|h| h % n.heads != 0) {
            return bad("network.heads must divide every gat_hidden width");
        }
        let f = &self.fl;
        if !(1 <= f.b_min && f.b_min <= f.b_max && f.b_max <= 16) {
            return bad("fl bit widths must satisfy 1 <= b_min <= b_max <= 16");
        }
        if (f.alpha_succ + f.alpha_stab - 1.0).abs() > 1e-9 || !(0.0..=1.0).contains(&f.rho) {
            return bad("fl.alpha_succ + fl.alpha_stab must be 1 and rho in [0, 1]");
        }
        if f.f_base <= 0.0 || !(0.0..=1.0).contains(&f.drop_prob) {
            return bad("fl.f_base must be positive and drop_prob in [0, 1]");
        }
        if self.training.window == 0 {
            return bad("training.window must be >= 1");
        }
        if self.min_dt() > s.dt {
            let msg = format!(
                "dt = {} s is below the acceleration bound 2 v_max / a = {} s",
                s.dt,
                self.min_dt()
            );
            if s.enforce_dt_check {
                return Err(Error::Config(msg));
            }
            log::warn!("{msg}");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
        SimConfig::paper().validate().unwrap();
    }

    #[test]
    fn partial_file_overrides_defaults() {
        let cfg = SimConfig::from_toml_str("[sim]\nnum_uavs = 4\n[fl]\nquantize = false\n").unwrap();
        assert_eq!(cfg.sim.num_uavs, 4);
        assert!(!cfg.fl.quantize);
        assert_eq!(cfg.sim.num_devices, 10);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(SimConfig::from_toml_str("[sim]\nnum_uav = 4\n").is_err());
    }

    #[test]
    fn dt_check_is_warning_unless_enforced() {
        let mut cfg = SimConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.sim.enforce_dt_check = true;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.sim.dt = 8.0;
        cfg.sim.episode_len = 320.0;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn toml_roundtrip_and_stable_hash() {
        let cfg = SimConfig::paper();
        let back = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
        assert_ne!(cfg.hash(), SimConfig::desk().hash());
    }
}
