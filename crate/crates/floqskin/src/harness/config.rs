use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::dynamics::{EvolveSettings, ImpuritySettings, InitialState};
use crate::error::{Error, Result};
use crate::floquet::FloquetSettings;
use crate::gbz::{GbzSettings, PipelineSettings};
use crate::model::ModelParams;
use crate::spectra::NearHalfSettings;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Bands,
    Spectrum,
    Skin,
    Gbz,
    Evolve,
    Impurity,
    Decay,
    GammaSweep,
    FreqSweep,
    PhiScan,
    Incommensurate,
    SymmetryCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 12] = [
        Experiment::Bands,
        Experiment::Spectrum,
        Experiment::Skin,
        Experiment::Gbz,
        Experiment::Evolve,
        Experiment::Impurity,
        Experiment::Decay,
        Experiment::GammaSweep,
        Experiment::FreqSweep,
        Experiment::PhiScan,
        Experiment::Incommensurate,
        Experiment::SymmetryCheck,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Bands => "bands",
            Experiment::Spectrum => "spectrum",
            Experiment::Skin => "skin",
            Experiment::Gbz => "gbz",
            Experiment::Evolve => "evolve",
            Experiment::Impurity => "impurity",
            Experiment::Decay => "decay",
            Experiment::GammaSweep => "gamma-sweep",
            Experiment::FreqSweep => "freq-sweep",
            Experiment::PhiScan => "phi-scan",
            Experiment::Incommensurate => "incommensurate",
            Experiment::SymmetryCheck => "symmetry-check",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandsKnobs {
    pub n_k: usize,
}

impl Default for BandsKnobs {
    fn default() -> Self {
        BandsKnobs { n_k: 401 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsKnobs {
    pub initial: InitialState,
    /// Replace the Gaussian band selector by a random unit vector drawn from
    /// the seed.
    pub random_u_vec: bool,
    /// Use the `k = 0` Bloch eigenvector of the least damped band as the
    /// Gaussian band selector.
    pub band_selector: bool,
    pub n_periods: usize,
    pub burn_in: f64,
    pub evolve: EvolveSettings,
}

impl Default for DynamicsKnobs {
    fn default() -> Self {
        DynamicsKnobs {
            initial: InitialState::gaussian(150, 5.0),
            random_u_vec: false,
            band_selector: false,
            n_periods: 200,
            burn_in: 0.3,
            evolve: EvolveSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayKnobs {
    /// Defaults to the middle of the chain.
    pub site: Option<usize>,
    pub n_periods: usize,
    pub discard: f64,
    /// Periods `[from, to)` sampled at every substep.
    pub sub_periods: (usize, usize),
}

impl Default for DecayKnobs {
    fn default() -> Self {
        DecayKnobs { site: None, n_periods: 300, discard: 0.3, sub_periods: (200, 203) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepKnobs {
    pub gammas: Vec<f64>,
    pub omegas: Vec<f64>,
    /// Threshold on the `k = 0` imaginary splitting that defines the onset.
    pub splitting_threshold: f64,
    /// Also compute the GBZ direction at each frequency.
    pub with_gbz: bool,
    pub dk: f64,
}

impl Default for SweepKnobs {
    fn default() -> Self {
        SweepKnobs {
            gammas: (0..=24).map(|i| -(i as f64) / 20.0 + 0.0).collect(),
            omegas: vec![0.4, 1.2],
            splitting_threshold: 5e-3,
            with_gbz: false,
            dk: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhiScanKnobs {
    pub n_phi: usize,
}

impl Default for PhiScanKnobs {
    fn default() -> Self {
        PhiScanKnobs { n_phi: 101 }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NearHalfKnobs {
    pub settings: NearHalfSettings,
    /// Values of `flux - 1/2`; empty means the model flux only.
    pub deviations: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymmetryKnobs {
    pub n_samples: usize,
}

impl Default for SymmetryKnobs {
    fn default() -> Self {
        SymmetryKnobs { n_samples: 16 }
    }
}

/// One run of the command-line tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub model: ModelParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Preset this configuration came from; selects the plot script.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub floquet: FloquetSettings,
    #[serde(default)]
    pub bands: BandsKnobs,
    #[serde(default)]
    pub spectrum: PipelineSettings,
    #[serde(default)]
    pub gbz: GbzSettings,
    #[serde(default)]
    pub dynamics: DynamicsKnobs,
    #[serde(default)]
    pub impurity: ImpuritySettings,
    #[serde(default)]
    pub decay: DecayKnobs,
    #[serde(default)]
    pub sweep: SweepKnobs,
    #[serde(default)]
    pub phi_scan: PhiScanKnobs,
    #[serde(default)]
    pub near_half: NearHalfKnobs,
    #[serde(default)]
    pub symmetry: SymmetryKnobs,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment, model: ModelParams) -> Self {
        ExperimentConfig {
            experiment,
            model,
            seed: 0,
            output_dir: None,
            preset: None,
            floquet: FloquetSettings::default(),
            bands: BandsKnobs::default(),
            spectrum: PipelineSettings::default(),
            gbz: GbzSettings::default(),
            dynamics: DynamicsKnobs::default(),
            impurity: ImpuritySettings::default(),
            decay: DecayKnobs::default(),
            sweep: SweepKnobs::default(),
            phi_scan: PhiScanKnobs::default(),
            near_half: NearHalfKnobs::default(),
            symmetry: SymmetryKnobs::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_value(serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Applies `path.to.key=value`; the value is parsed as JSON and falls
    /// back to a string.
    pub fn with_override(&self, assignment: &str) -> Result<Self> {
        let (path, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut root = self.to_value();
        let mut node = &mut root;
        let keys: Vec<&str> = path.split('.').collect();
        for (i, key) in keys.iter().enumerate() {
            let Value::Object(map) = node else {
                return Err(Error::Config(format!("override `{path}`: `{}` is not an object", keys[..i].join("."))));
            };
            if i + 1 == keys.len() {
                map.insert(key.to_string(), value.clone());
                break;
            }
            node = map.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
        }
        Self::from_value(root).map_err(|e| Error::Config(format!("override `{path}`: {e}")))
    }

    /// SHA-256 of the canonical JSON form (sorted keys), so reordering keys
    /// in the input does not change it. The output directory is excluded.
    pub fn hash(&self) -> String {
        let mut v = self.to_value();
        if let Value::Object(m) = &mut v {
            m.remove("output_dir");
        }
        let canonical = serde_json::to_string(&v).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Range checks of every knob; runs before any computation.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.floquet.validate()?;
        self.spectrum.validate()?;
        self.gbz.validate()?;
        self.dynamics.evolve.validate()?;
        if self.bands.n_k < 3 {
            return Err(Error::param("bands.n_k", "need at least 3 momenta"));
        }
        if self.dynamics.n_periods == 0 {
            return Err(Error::param("dynamics.n_periods", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dynamics.burn_in) {
            return Err(Error::param("dynamics.burn_in", "must lie in [0, 1)"));
        }
        if self.dynamics.random_u_vec && self.dynamics.band_selector {
            return Err(Error::param("dynamics", "random_u_vec and band_selector are exclusive"));
        }
        if matches!(self.experiment, Experiment::Evolve | Experiment::Impurity | Experiment::GammaSweep | Experiment::FreqSweep) {
            self.dynamics.initial.build(&self.model)?;
        }
        if !(0.0..1.0).contains(&self.decay.discard) {
            return Err(Error::param("decay.discard", "must lie in [0, 1)"));
        }
        if self.decay.sub_periods.0 > self.decay.sub_periods.1 {
            return Err(Error::param("decay.sub_periods", "need from <= to"));
        }
        if !(self.sweep.dk > 0.0 && self.sweep.dk < 0.1) {
            return Err(Error::param("sweep.dk", "must lie in (0, 0.1)"));
        }
        if !(self.sweep.splitting_threshold > 0.0) {
            return Err(Error::param("sweep.splitting_threshold", "must be positive"));
        }
        if self.sweep.gammas.iter().chain(&self.sweep.omegas).any(|x| !x.is_finite()) {
            return Err(Error::param("sweep", "grid values must be finite"));
        }
        if self.phi_scan.n_phi == 0 {
            return Err(Error::param("phi_scan.n_phi", "must be >= 1"));
        }
        if self.symmetry.n_samples == 0 {
            return Err(Error::param("symmetry.n_samples", "must be >= 1"));
        }
        if self.near_half.deviations.iter().any(|d| !d.is_finite() || *d == 0.0) {
            return Err(Error::param("near_half.deviations", "must be finite and nonzero"));
        }
        match self.experiment {
            Experiment::Bands | Experiment::GammaSweep | Experiment::SymmetryCheck if self.model.q().is_none() => {
                Err(Error::UnsupportedRepresentation)
            }
            Experiment::GammaSweep if !self.sweep.gammas.contains(&0.0) => {
                Err(Error::param("sweep.gammas", "must include 0"))
            }
            Experiment::FreqSweep if self.sweep.omegas.iter().any(|w| *w <= 0.0) || self.sweep.omegas.is_empty() => {
                Err(Error::param("sweep.omegas", "need at least one positive frequency"))
            }
            Experiment::PhiScan if self.model.omega != 0.0 => {
                Err(Error::WrongMode("phi-scan needs a static chain (model.omega = 0)".into()))
            }
            Experiment::Impurity if self.model.impurities.len() != 1 => {
                Err(Error::param("model.impurities", "impurity experiment needs exactly one impurity"))
            }
            _ => Ok(()),
        }
    }
}
