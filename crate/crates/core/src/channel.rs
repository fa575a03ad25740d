//! Per-UE true SINR processes.
//!
//! Each UE follows a dB-domain Gauss-Markov (AR(1)) shadowing process around
//! its mean SINR, optionally multiplied in the linear domain by the power of a
//! unit-variance complex AR(1) fading gain. Traces can also be loaded from
//! (and written to) the `slot,ue,sinr_db` CSV exchange format.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Header line of the trace CSV.
pub const TRACE_HEADER: &str = "slot,ue,sinr_db";

/// Floor on the fading power so that deep fades stay finite in dB (-60 dB).
const MIN_FADING_POWER: f64 = 1e-6;

/// Parameters of a synthetic channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelScenario {
    pub name: String,
    pub num_ues: usize,
    /// Mean SINR per UE, dB.
    pub mean_sinr_db: Vec<f64>,
    /// Per-slot AR(1) correlation of the shadowing process, in [0, 1).
    pub shadow_rho: f64,
    /// Stationary standard deviation of the shadowing process, dB.
    pub shadow_sigma_db: f64,
    pub fast_fading: bool,
    /// Per-slot correlation of the complex fading gain, in [0, 1).
    pub doppler_corr: f64,
    pub num_slots: usize,
    pub seed: u64,
}

impl Default for ChannelScenario {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            num_ues: 1,
            mean_sinr_db: vec![15.0],
            shadow_rho: 0.99,
            shadow_sigma_db: 3.0,
            fast_fading: true,
            doppler_corr: 0.993,
            num_slots: 1000,
            seed: 0,
        }
    }
}

impl ChannelScenario {
    /// Three mobile UEs with mean SINRs of 26, 6 and 28 dB.
    pub fn paper_3ue() -> Self {
        Self {
            name: "paper-3ue".into(),
            num_ues: 3,
            mean_sinr_db: vec![26.0, 6.0, 28.0],
            ..Self::default()
        }
    }

    /// Noise-free constant-SINR channel for `means.len()` UEs.
    pub fn constant(means: &[f64]) -> Self {
        Self {
            name: "constant".into(),
            num_ues: means.len(),
            mean_sinr_db: means.to_vec(),
            shadow_sigma_db: 0.0,
            fast_fading: false,
            ..Self::default()
        }
    }

    /// Resolves a named preset.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "paper-3ue" => Some(Self::paper_3ue()),
            "static-3ue" => Some(Self {
                name: "static-3ue".into(),
                ..Self::constant(&[26.0, 6.0, 28.0])
            }),
            "slow-1ue" => Some(Self {
                name: "slow-1ue".into(),
                num_ues: 1,
                mean_sinr_db: vec![12.0],
                fast_fading: false,
                ..Self::default()
            }),
            _ => None,
        }
    }

    pub fn preset_names() -> &'static [&'static str] {
        &["paper-3ue", "static-3ue", "slow-1ue"]
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_ues == 0 {
            return Err(Error::Config("scenario needs at least one UE".into()));
        }
        if self.mean_sinr_db.len() != self.num_ues {
            return Err(Error::Config(format!(
                "mean_sinr_db has {} entries for {} UEs",
                self.mean_sinr_db.len(),
                self.num_ues
            )));
        }
        if self.mean_sinr_db.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("mean_sinr_db must be finite".into()));
        }
        if !(0.0..1.0).contains(&self.shadow_rho) {
            return Err(Error::Config(format!("shadow_rho {} not in [0,1)", self.shadow_rho)));
        }
        if !(self.shadow_sigma_db >= 0.0 && self.shadow_sigma_db.is_finite()) {
            return Err(Error::Config(format!(
                "shadow_sigma_db {} must be finite and >= 0",
                self.shadow_sigma_db
            )));
        }
        if !(0.0..1.0).contains(&self.doppler_corr) {
            return Err(Error::Config(format!("doppler_corr {} not in [0,1)", self.doppler_corr)));
        }
        if self.num_slots == 0 {
            return Err(Error::Config("num_slots must be positive".into()));
        }
        Ok(())
    }
}

/// True SINR (dB) per UE and slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrTrace {
    pub realization: u64,
    sinr_db: Vec<Vec<f64>>,
}

impl SinrTrace {
    /// Builds a trace from per-UE rows; all rows must be non-empty, equally long and finite.
    pub fn new(realization: u64, sinr_db: Vec<Vec<f64>>) -> Result<Self> {
        let slots = sinr_db.first().map_or(0, Vec::len);
        if sinr_db.is_empty() || slots == 0 {
            return Err(Error::Config("trace must have at least one UE and one slot".into()));
        }
        for (u, row) in sinr_db.iter().enumerate() {
            if row.len() != slots {
                return Err(Error::Dimension {
                    expected: slots,
                    got: row.len(),
                });
            }
            if let Some(t) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Config(format!("non-finite SINR at slot {t}, ue {u}")));
            }
        }
        Ok(Self { realization, sinr_db })
    }

    pub fn num_ues(&self) -> usize {
        self.sinr_db.len()
    }

    pub fn num_slots(&self) -> usize {
        self.sinr_db[0].len()
    }

    pub fn get(&self, ue: usize, slot: usize) -> f64 {
        self.sinr_db[ue][slot]
    }

    pub fn ue(&self, ue: usize) -> &[f64] {
        &self.sinr_db[ue]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.sinr_db
    }

    /// SHA-256 over the bit patterns of all values (UE-major), hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_ues() as u64).to_le_bytes());
        h.update((self.num_slots() as u64).to_le_bytes());
        for row in &self.sinr_db {
            for v in row {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * self.num_ues() * self.num_slots());
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for t in 0..self.num_slots() {
            for u in 0..self.num_ues() {
                let _ = writeln!(out, "{t},{u},{}", self.sinr_db[u][t]);
            }
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn rng_for(seed: u64, realization: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng
}

/// Draws one realization of the scenario; deterministic in `(scenario.seed, realization)`.
pub fn generate(scenario: &ChannelScenario, realization: u64) -> Result<SinrTrace> {
    scenario.validate()?;
    let mut rng = rng_for(scenario.seed, realization);
    let rho = scenario.shadow_rho;
    let innovation = scenario.shadow_sigma_db * (1.0 - rho * rho).sqrt();
    let fade_rho = scenario.doppler_corr;
    let fade_innovation = (1.0 - fade_rho * fade_rho).sqrt();
    let slots = scenario.num_slots;

    let mut rows = Vec::with_capacity(scenario.num_ues);
    for &mu in &scenario.mean_sinr_db {
        let mut row = Vec::with_capacity(slots);
        let mut shadow = mu;
        // Unit-variance circular complex Gaussian: each component has variance 1/2.
        let mut h = if scenario.fast_fading {
            (cn_component(&mut rng), cn_component(&mut rng))
        } else {
            (1.0, 0.0)
        };
        for t in 0..slots {
            if t > 0 {
                let eps: f64 = rng.sample(StandardNormal);
                shadow = mu + rho * (shadow - mu) + innovation * eps;
                if scenario.fast_fading {
                    let (wr, wi) = (cn_component(&mut rng), cn_component(&mut rng));
                    h = (fade_rho * h.0 + fade_innovation * wr, fade_rho * h.1 + fade_innovation * wi);
                }
            }
            let value = if scenario.fast_fading {
                let power = (h.0 * h.0 + h.1 * h.1).max(MIN_FADING_POWER);
                shadow + 10.0 * power.log10()
            } else {
                shadow
            };
            row.push(value);
        }
        rows.push(row);
    }
    SinrTrace::new(realization, rows)
}

fn cn_component<R: Rng>(rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    z * std::f64::consts::FRAC_1_SQRT_2
}

/// The linear fading power sequence `|h_t|^2` of a unit-variance complex AR(1) gain.
///
/// Exposed for statistical checks; [`generate`] uses the same recursion.
pub fn fading_power(doppler_corr: f64, slots: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (1.0 - doppler_corr * doppler_corr).sqrt();
    let mut h = (cn_component(&mut rng), cn_component(&mut rng));
    let mut out = Vec::with_capacity(slots);
    for t in 0..slots {
        if t > 0 {
            let (wr, wi) = (cn_component(&mut rng), cn_component(&mut rng));
            h = (doppler_corr * h.0 + a * wr, doppler_corr * h.1 + a * wi);
        }
        out.push(h.0 * h.0 + h.1 * h.1);
    }
    out
}

/// Parses trace CSV text. `origin` is only used in error messages.
pub fn parse_trace(text: &str, origin: &str) -> Result<SinrTrace> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        Some((_, h)) => {
            return Err(Error::parse(origin, 1, format!("expected header {TRACE_HEADER:?}, found {:?}", h.trim())))
        }
        None => return Err(Error::parse(origin, 1, "empty file")),
    }
    let mut cells: Vec<(usize, usize, f64, usize)> = Vec::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(Error::parse(origin, lineno, format!("expected 3 fields, found {}", f.len())));
        }
        let slot: usize = f[0]
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("bad slot {:?}", f[0])))?;
        let ue: usize = f[1]
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("bad ue {:?}", f[1])))?;
        let v: f64 = f[2]
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("bad sinr_db {:?}", f[2])))?;
        if !v.is_finite() {
            return Err(Error::parse(origin, lineno, format!("non-finite sinr_db {:?}", f[2])));
        }
        cells.push((slot, ue, v, lineno));
    }
    if cells.is_empty() {
        return Err(Error::parse(origin, 2, "trace has no rows"));
    }
    let num_slots = cells.iter().map(|c| c.0).max().unwrap_or(0) + 1;
    let num_ues = cells.iter().map(|c| c.1).max().unwrap_or(0) + 1;
    let mut grid: Vec<Vec<Option<f64>>> = vec![vec![None; num_slots]; num_ues];
    for &(slot, ue, v, lineno) in &cells {
        if grid[ue][slot].replace(v).is_some() {
            return Err(Error::parse(origin, lineno, format!("duplicate cell slot {slot}, ue {ue}")));
        }
    }
    let last_line = cells.iter().map(|c| c.3).max().unwrap_or(1);
    let mut rows = Vec::with_capacity(num_ues);
    for (ue, row) in grid.into_iter().enumerate() {
        let mut dense = Vec::with_capacity(num_slots);
        for (slot, v) in row.into_iter().enumerate() {
            match v {
                Some(v) => dense.push(v),
                None => {
                    return Err(Error::parse(
                        origin,
                        last_line,
                        format!("missing cell slot {slot}, ue {ue} (inconsistent UE count or gap)"),
                    ))
                }
            }
        }
        rows.push(dense);
    }
    SinrTrace::new(0, rows)
}

/// Loads a trace CSV file.
pub fn load_trace(path: impl AsRef<Path>) -> Result<SinrTrace> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace(&text, &path.display().to_string())
}
