//! Frozen parameter sets reproducing the figures.

use std::f64::consts::PI;

use super::config::{Experiment, ExperimentConfig};
use crate::dynamics::InitialState;
use crate::model::{Boundary, Flux, ModelParams};

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    build: fn() -> ExperimentConfig,
}

impl Preset {
    pub fn config(&self) -> ExperimentConfig {
        let mut c = (self.build)();
        c.preset = Some(self.name.to_string());
        c
    }
}

/// Drift ratio of the incommensurate companion of the `1/3` chain.
pub const NEAR_THIRD: f64 = 1.0 / 3.0 * std::f64::consts::SQRT_2 / 1.415;

fn lossless() -> ModelParams {
    ModelParams { gamma: vec![0.0; 3], ..ModelParams::reference() }
}

fn evolve(model: ModelParams, initial: InitialState) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Experiment::Evolve, model);
    c.dynamics.initial = initial;
    c
}

fn near_half() -> ModelParams {
    ModelParams {
        flux: Flux::Real(0.5 - PI / 1000.0),
        gamma: vec![-1.2, 0.0],
        n_cells: 400,
        boundary: Boundary::Obc,
        dissipation_period: Some(2),
        ..ModelParams::reference()
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig1c",
        description: "loss-free Gaussian packet spreading along three band velocities",
        build: || evolve(lossless(), InitialState::gaussian(150, 5.0)),
    },
    Preset {
        name: "fig1d",
        description: "loss-free delta input",
        build: || evolve(lossless(), InitialState::Delta { x0: 150 }),
    },
    Preset {
        name: "fig1e",
        description: "lossy Gaussian packet, renormalized snapshots, one-way drift",
        build: || evolve(ModelParams::reference(), InitialState::gaussian(150, 5.0)),
    },
    Preset {
        name: "fig1f",
        description: "lossy delta input, renormalized snapshots",
        build: || evolve(ModelParams::reference(), InitialState::Delta { x0: 150 }),
    },
    Preset {
        name: "fig2",
        description: "bands, periodic and open spectra, dominant-band GBZ and skin weight",
        build: || ExperimentConfig::new(Experiment::Gbz, ModelParams::reference()),
    },
    Preset {
        name: "fig3",
        description: "bulk propagator element and its decay rate",
        build: || {
            let mut c = ExperimentConfig::new(Experiment::Decay, ModelParams::reference());
            c.decay.site = Some(150);
            c
        },
    },
    Preset {
        name: "figS0",
        description: "static loss-free open-chain spectrum versus the potential phase",
        build: || {
            let model = ModelParams { omega: 0.0, n_cells: 30, boundary: Boundary::Obc, ..lossless() };
            ExperimentConfig::new(Experiment::PhiScan, model)
        },
    },
    Preset {
        name: "figS2",
        description: "loss sweep: k = 0 band splitting and the collapse to one-way transport",
        build: || {
            let mut c = ExperimentConfig::new(Experiment::GammaSweep, ModelParams::reference());
            c.dynamics.random_u_vec = true;
            c.seed = 7;
            c
        },
    },
    Preset {
        name: "figS3",
        description: "incommensurate companion of the 1/3 chain, delta input",
        build: || {
            let model = ModelParams {
                flux: Flux::Real(NEAR_THIRD),
                n_cells: 300,
                dissipation_period: Some(3),
                ..ModelParams::reference()
            };
            evolve(model, InitialState::Delta { x0: 150 })
        },
    },
    Preset {
        name: "incomm-half",
        description: "flux just below 1/2: split bands, opposite localization, interference valleys",
        build: || {
            let mut c = ExperimentConfig::new(Experiment::Incommensurate, near_half());
            c.near_half.deviations = vec![-PI / 10000.0, -PI / 3000.0, -PI / 1000.0];
            c
        },
    },
    Preset {
        name: "figR1",
        description: "propagation direction at drive frequencies 0.4 and 1.2",
        build: || {
            let mut c = ExperimentConfig::new(Experiment::FreqSweep, ModelParams::reference());
            c.dynamics.initial = InitialState::Delta { x0: 150 };
            c.sweep.omegas = vec![0.4, 1.2];
            c.sweep.with_gbz = true;
            c
        },
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}
