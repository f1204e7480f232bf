//! Stochastic QBER/SKR generator for the nine impairment classes.
//!
//! The channel model counts detector clicks from two sources: attenuated
//! signal photons and background (dark counts, Raman scattering from
//! co-propagating classical lasers, ASE leaking from an EDFA). Background
//! clicks are random in the key basis and so contribute 50% errors. The key
//! rate follows the asymptotic secret fraction `1 - f*H2(e) - H2(e)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::telemetry::SampleRecord;
use crate::{Error, Result};

/// Human-readable class labels, indexed by class id.
pub const CLASS_NAMES: [&str; 9] = [
    "Normal",
    "1 Laser",
    "2 Lasers",
    "4 Lasers & EDFA (18 mA)",
    "4 Lasers & EDFA (21 mA)",
    "4 Lasers & EDFA (24 mA)",
    "Photon loss 20%",
    "Photon loss 46%",
    "Photon loss 67%",
];

/// Single-laser power ladder of class 1, in dBm.
pub const ONE_LASER_LADDER_DBM: [f64; 7] = [-23.5, -21.7, -20.5, -19.55, -18.84, -18.37, -18.1];

/// Second-laser ladder of class 2, paired element-wise with [`ONE_LASER_LADDER_DBM`].
pub const SECOND_LASER_LADDER_DBM: [f64; 7] = [-21.6, -20.2, -19.4, -19.0, -18.8, -18.9, -19.2];

/// Four-laser launch powers behind the EDFA, per pump current (mA).
pub const EDFA_POWERS_DBM: [(u32, [f64; 4]); 3] = [
    (18, [-17.9, -16.9, -15.6, -15.6]),
    (21, [-16.5, -15.7, -14.6, -14.3]),
    (24, [-15.5, -14.5, -13.4, -13.1]),
];

/// Excess attenuation of the three photon-loss classes, in dB.
pub const LOSS_EXCESS_DB: [f64; 3] = [-0.9, -1.9, -3.1];

/// Physical constants of the emulated link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    pub pulse_rate: f64,
    pub mu: f64,
    pub base_attenuation_db: f64,
    pub detector_efficiency: f64,
    pub dark_count_prob: f64,
    pub intrinsic_error: f64,
    /// Background click probability per mW of total classical launch power.
    pub raman_coeff: f64,
    /// Background click probability added while the EDFA is in the path.
    pub ase_floor: f64,
    pub sift_factor: f64,
    pub ec_efficiency: f64,
    /// Integration time of one telemetry point. `inf` disables sampling jitter.
    pub block_seconds: f64,
    /// Relative standard deviation of the multiplicative SKR detection jitter.
    #[serde(default = "default_skr_jitter")]
    pub skr_jitter: f64,
}

fn default_skr_jitter() -> f64 {
    0.01
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            pulse_rate: 1e9,
            mu: 0.4,
            base_attenuation_db: -14.0,
            detector_efficiency: 0.2,
            dark_count_prob: 1e-6,
            intrinsic_error: 0.01,
            raman_coeff: 3e-3,
            ase_floor: 2e-5,
            sift_factor: 0.5,
            ec_efficiency: 1.16,
            block_seconds: 1.0,
            skr_jitter: default_skr_jitter(),
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let probs = [
            ("detector_efficiency", self.detector_efficiency),
            ("dark_count_prob", self.dark_count_prob),
            ("intrinsic_error", self.intrinsic_error),
            ("raman_coeff", self.raman_coeff),
            ("ase_floor", self.ase_floor),
            ("sift_factor", self.sift_factor),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Config("mu must be positive".into()));
        }
        if !(self.base_attenuation_db <= 0.0 && self.base_attenuation_db.is_finite()) {
            return Err(Error::Config("base_attenuation_db must be <= 0".into()));
        }
        if !(self.ec_efficiency >= 1.0 && self.ec_efficiency.is_finite()) {
            return Err(Error::Config("ec_efficiency must be >= 1".into()));
        }
        if !(self.pulse_rate > 0.0 && self.pulse_rate.is_finite()) {
            return Err(Error::Config("pulse_rate must be positive".into()));
        }
        if self.block_seconds.is_nan() || self.block_seconds <= 0.0 {
            return Err(Error::Config("block_seconds must be positive".into()));
        }
        if !(self.skr_jitter >= 0.0 && self.skr_jitter.is_finite()) {
            return Err(Error::Config("skr_jitter must be >= 0".into()));
        }
        Ok(())
    }
}

/// One simulated acquisition run.
///
/// `laser_powers_dbm` is a schedule: each entry is the set of lasers lit at
/// the same time, and the run steps through the entries every
/// `dwell_points` samples, wrapping around at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub class_id: u8,
    pub laser_powers_dbm: Vec<Vec<f64>>,
    pub edfa_current_ma: Option<u32>,
    pub excess_attenuation_db: f64,
    pub duration_points: usize,
    pub seed: u64,
    pub ar_phi: f64,
    pub ar_sigma: f64,
    #[serde(default = "default_dwell")]
    pub dwell_points: usize,
    #[serde(default)]
    pub start_ts_ms: i64,
    #[serde(default = "default_interval")]
    pub interval_ms: i64,
}

fn default_dwell() -> usize {
    25
}

fn default_interval() -> i64 {
    1000
}

impl ScenarioConfig {
    pub fn class_name(&self) -> &'static str {
        CLASS_NAMES.get(self.class_id as usize).copied().unwrap_or("unknown")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.class_id as usize >= CLASS_NAMES.len() {
            return bad(format!("class_id {} outside 0..=8", self.class_id));
        }
        if self.duration_points < 1 {
            return bad("duration_points must be >= 1".into());
        }
        if self.dwell_points < 1 {
            return bad("dwell_points must be >= 1".into());
        }
        if self.interval_ms < 1 {
            return bad("interval_ms must be >= 1".into());
        }
        let span = (self.duration_points as i64).checked_mul(self.interval_ms);
        if span.and_then(|s| s.checked_add(self.start_ts_ms)).is_none() {
            return bad("timestamps overflow".into());
        }
        if !(self.ar_phi > -1.0 && self.ar_phi < 1.0) {
            return bad(format!("ar_phi must lie in (-1,1), got {}", self.ar_phi));
        }
        if !(self.ar_sigma >= 0.0 && self.ar_sigma.is_finite()) {
            return bad("ar_sigma must be >= 0".into());
        }
        if !(self.excess_attenuation_db <= 0.0 && self.excess_attenuation_db.is_finite()) {
            return bad("excess_attenuation_db must be <= 0".into());
        }
        if self.laser_powers_dbm.iter().flatten().any(|p| !p.is_finite()) {
            return bad("laser powers must be finite".into());
        }
        if let Some(ma) = self.edfa_current_ma {
            if !EDFA_POWERS_DBM.iter().any(|(c, _)| *c == ma) {
                return bad(format!("edfa_current_ma must be 18, 21 or 24, got {ma}"));
            }
        }

        let lasers_each = |n: usize| {
            !self.laser_powers_dbm.is_empty()
                && self.laser_powers_dbm.iter().all(|s| s.len() == n)
        };
        let consistent = match self.class_id {
            0 => {
                self.laser_powers_dbm.is_empty()
                    && self.edfa_current_ma.is_none()
                    && self.excess_attenuation_db == 0.0
            }
            1 | 2 => {
                lasers_each(self.class_id as usize)
                    && self.edfa_current_ma.is_none()
                    && self.excess_attenuation_db == 0.0
            }
            3..=5 => {
                let expected = EDFA_POWERS_DBM[self.class_id as usize - 3].0;
                lasers_each(4)
                    && self.edfa_current_ma == Some(expected)
                    && self.excess_attenuation_db == 0.0
            }
            _ => {
                self.laser_powers_dbm.is_empty()
                    && self.edfa_current_ma.is_none()
                    && self.excess_attenuation_db < 0.0
            }
        };
        if !consistent {
            return bad(format!(
                "fields do not match class {} ({})",
                self.class_id,
                self.class_name()
            ));
        }
        Ok(())
    }

    fn schedule_len(&self) -> usize {
        self.laser_powers_dbm.len().max(1)
    }

    fn powers_at_step(&self, step: usize) -> &[f64] {
        self.laser_powers_dbm
            .get(step)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Measured configuration for each class, with default noise settings.
pub fn preset(class_id: u8) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig {
        class_id,
        laser_powers_dbm: Vec::new(),
        edfa_current_ma: None,
        excess_attenuation_db: 0.0,
        duration_points: 1000,
        seed: 1000 + class_id as u64,
        ar_phi: 0.7,
        ar_sigma: 0.03,
        dwell_points: default_dwell(),
        start_ts_ms: 1_700_000_000_000,
        interval_ms: default_interval(),
    };
    match class_id {
        0 => {}
        1 => {
            cfg.laser_powers_dbm = ONE_LASER_LADDER_DBM.iter().map(|p| vec![*p]).collect();
        }
        2 => {
            cfg.laser_powers_dbm = ONE_LASER_LADDER_DBM
                .iter()
                .zip(SECOND_LASER_LADDER_DBM)
                .map(|(a, b)| vec![*a, b])
                .collect();
        }
        3..=5 => {
            let (ma, powers) = EDFA_POWERS_DBM[class_id as usize - 3];
            cfg.laser_powers_dbm = vec![powers.to_vec()];
            cfg.edfa_current_ma = Some(ma);
        }
        6..=8 => cfg.excess_attenuation_db = LOSS_EXCESS_DB[class_id as usize - 6],
        other => return Err(Error::Config(format!("unknown class id {other}"))),
    }
    Ok(cfg)
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("binary entropy argument {x} outside [0,1]")));
    }
    Ok(h2(x))
}

fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.log2() - (1.0 - x) * (1.0 - x).log2()
    }
}

fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Click probabilities per pulse for one laser configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickModel {
    pub p_signal: f64,
    pub p_background: f64,
}

impl ClickModel {
    pub fn new(link: &LinkParams, powers_dbm: &[f64], edfa: bool, excess_db: f64) -> Self {
        let p_signal = link.mu
            * 10f64.powf((link.base_attenuation_db + excess_db) / 10.0)
            * link.detector_efficiency;
        let launch_mw: f64 = powers_dbm.iter().map(|p| dbm_to_mw(*p)).sum();
        let p_background = link.dark_count_prob
            + link.raman_coeff * launch_mw
            + if edfa { link.ase_floor } else { 0.0 };
        ClickModel {
            p_signal,
            p_background,
        }
    }

    fn total(&self) -> f64 {
        self.p_signal + self.p_background
    }

    fn sifted_rate(&self, link: &LinkParams) -> f64 {
        link.pulse_rate * self.total() * link.sift_factor
    }

    fn qber(&self, link: &LinkParams) -> Result<f64> {
        if self.total() <= 0.0 {
            return Err(Error::DegenerateLink);
        }
        Ok((link.intrinsic_error * self.p_signal + 0.5 * self.p_background) / self.total())
    }
}

/// Secret key rate for a sifted rate and error rate.
fn secret_rate(link: &LinkParams, sifted: f64, qber: f64) -> f64 {
    let h = h2(qber);
    sifted * (1.0 - link.ec_efficiency * h - h).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub qber_mean: f64,
    pub skr_mean: f64,
}

/// Noise-free operating point of one laser configuration.
pub fn steady_state_for(
    link: &LinkParams,
    powers_dbm: &[f64],
    edfa: bool,
    excess_db: f64,
) -> Result<SteadyState> {
    let clicks = ClickModel::new(link, powers_dbm, edfa, excess_db);
    let qber_mean = clicks.qber(link)?;
    Ok(SteadyState {
        qber_mean,
        skr_mean: secret_rate(link, clicks.sifted_rate(link), qber_mean),
    })
}

/// Noise-free operating point of a scenario, averaged over its power schedule.
pub fn steady_state(link: &LinkParams, scenario: &ScenarioConfig) -> Result<SteadyState> {
    let steps = step_states(link, scenario)?;
    let n = steps.len() as f64;
    Ok(SteadyState {
        qber_mean: steps.iter().map(|s| s.0.qber_mean).sum::<f64>() / n,
        skr_mean: steps.iter().map(|s| s.0.skr_mean).sum::<f64>() / n,
    })
}

/// Per-step steady state plus the sifted rate that drives sampling jitter.
fn step_states(link: &LinkParams, scenario: &ScenarioConfig) -> Result<Vec<(SteadyState, f64)>> {
    let edfa = scenario.edfa_current_ma.is_some();
    (0..scenario.schedule_len())
        .map(|step| {
            let powers = scenario.powers_at_step(step);
            let clicks = ClickModel::new(link, powers, edfa, scenario.excess_attenuation_db);
            let state = steady_state_for(link, powers, edfa, scenario.excess_attenuation_db)?;
            Ok((state, clicks.sifted_rate(link)))
        })
        .collect()
}

/// Generates `duration_points` telemetry samples. Deterministic in `scenario.seed`.
pub fn simulate(link: &LinkParams, scenario: &ScenarioConfig) -> Result<Vec<SampleRecord>> {
    link.validate()?;
    scenario.validate()?;
    let steps = step_states(link, scenario)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut ar_state = 0.0;
    let mut out = Vec::with_capacity(scenario.duration_points);
    for t in 0..scenario.duration_points {
        let (state, sifted) = steps[(t / scenario.dwell_points) % steps.len()];
        let q = state.qber_mean;

        let innovation: f64 = StandardNormal.sample(&mut rng);
        ar_state = scenario.ar_phi * ar_state + scenario.ar_sigma * innovation;

        let n_block = sifted * link.block_seconds;
        let sampling_sd = if n_block.is_finite() && n_block > 0.0 {
            (q * (1.0 - q) / n_block).sqrt()
        } else {
            0.0
        };
        let sampling: f64 = StandardNormal.sample(&mut rng);
        let qber = (q * (1.0 + ar_state) + sampling_sd * sampling).clamp(0.0, 1.0);

        let detection: f64 = StandardNormal.sample(&mut rng);
        let skr = (secret_rate(link, sifted, qber) * (1.0 + link.skr_jitter * detection)).max(0.0);

        let timestamp = scenario.start_ts_ms + t as i64 * scenario.interval_ms;
        out.push(SampleRecord::new(timestamp, qber, skr));
    }
    Ok(out)
}

/// Ground truth written next to a simulated log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSidecar {
    pub schema_version: String,
    pub class_id: u8,
    pub class_name: String,
    pub seed: u64,
    pub config_hash: String,
    pub link: LinkParams,
    pub scenario: ScenarioConfig,
}

pub const SIDECAR_SCHEMA: &str = "qkdsent.sim/1";

impl SimulationSidecar {
    pub fn new(link: &LinkParams, scenario: &ScenarioConfig) -> Self {
        SimulationSidecar {
            schema_version: SIDECAR_SCHEMA.to_string(),
            class_id: scenario.class_id,
            class_name: scenario.class_name().to_string(),
            seed: scenario.seed,
            config_hash: crate::config_hash(&(link, scenario)),
            link: link.clone(),
            scenario: scenario.clone(),
        }
    }
}

/// Scenario plus optional link override, as accepted from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default)]
    pub link: Option<LinkParams>,
    pub scenario: ScenarioConfig,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        if let Some(link) = &file.link {
            link.validate()?;
        }
        file.scenario.validate()?;
        Ok(file)
    }
}
