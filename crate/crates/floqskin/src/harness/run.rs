use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::config::{Experiment, ExperimentConfig};
use super::output::{num, OutputDir, RunManifest};
use super::plots;
use crate::dynamics::{self, InitialState, SweepSettings};
use crate::error::{Error, Result};
use crate::floquet::{self, FloquetSettings, QuasienergyBands};
use crate::gbz;
use crate::linalg::{self, C64};
use crate::model::{Boundary, Flux, ModelParams};
use crate::spectra::{self, PbcLoop, SpectrumResult};

/// What an experiment hands back to the writer.
struct Outcome {
    summary: Value,
    convergence: Value,
}

/// Validates `config`, runs it into `out` and writes the manifest last.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let mut dir = OutputDir::create(out)?;
    dir.json("config.json", &config.to_value())?;
    let outcome = match config.experiment {
        Experiment::Bands => bands(config, &mut dir),
        Experiment::Spectrum => spectrum(config, &mut dir),
        Experiment::Skin => skin(config, &mut dir),
        Experiment::Gbz => gbz_experiment(config, &mut dir),
        Experiment::Evolve => evolve(config, &mut dir),
        Experiment::Impurity => impurity(config, &mut dir),
        Experiment::Decay => decay(config, &mut dir),
        Experiment::GammaSweep => gamma_sweep(config, &mut dir),
        Experiment::FreqSweep => freq_sweep(config, &mut dir),
        Experiment::PhiScan => phi_scan(config, &mut dir),
        Experiment::Incommensurate => incommensurate(config, &mut dir),
        Experiment::SymmetryCheck => symmetry_check(config, &mut dir),
    }?;
    dir.json("summary.json", &outcome.summary)?;
    dir.text("plot.py", &plots::script(config.experiment, config.preset.as_deref()))?;
    let manifest = RunManifest {
        tool: "floqskin".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: config.experiment.name().into(),
        preset: config.preset.clone(),
        config_hash: config.hash(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        files: Vec::new(),
        convergence: outcome.convergence,
    };
    dir.finish(manifest)
}

fn c(z: C64) -> Value {
    json!([z.re, z.im])
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.into()
}

/// Quasienergies at three momenta with `n_steps` and `2 n_steps` slices.
fn step_doubling(params: &ModelParams, fs: &FloquetSettings) -> Result<Value> {
    if params.q().is_none() {
        return Ok(json!({ "floquet_step_doubling": Value::Null }));
    }
    let fine = FloquetSettings { n_steps: 2 * fs.n_steps, ..*fs };
    let period = fs.period(params);
    let mut dev: f64 = 0.0;
    for k in [0.0, 1.0, 2.5] {
        let a = floquet::bloch_floquet(params, k, fs)?;
        let b = floquet::bloch_floquet(params, k, &fine)?;
        dev = dev.max(linalg::hausdorff(&a.quasienergies, &b.quasienergies, Some(2.0 * PI / period)));
    }
    Ok(json!({ "n_steps": fs.n_steps, "floquet_step_doubling": dev }))
}

fn write_bands(dir: &mut OutputDir, b: &QuasienergyBands) -> Result<()> {
    let rows = (0..b.n_bands()).flat_map(|band| {
        (0..b.k.len()).map(move |i| {
            let e = b.eps[band][i];
            vec![num(b.k[i]), band.to_string(), num(e.re), num(e.im), num(b.velocity[band][i])]
        })
    });
    dir.csv("bands.csv", &["k", "band_index", "re_eps", "im_eps", "velocity"], rows)
}

fn write_spectrum(dir: &mut OutputDir, name: &str, s: &SpectrumResult, edges: &[usize]) -> Result<()> {
    let rows = s.eigenvalues.iter().enumerate().map(|(i, e)| {
        vec![i.to_string(), num(e.re), num(e.im), s.boundary.as_str().to_string(), flag(edges.contains(&i))]
    });
    dir.csv(name, &["state_index", "re_E", "im_E", "boundary", "edge_flag"], rows)
}

fn write_skin(dir: &mut OutputDir, w: &[f64]) -> Result<()> {
    dir.csv("skin.csv", &["x", "W"], w.iter().enumerate().map(|(x, v)| vec![x.to_string(), num(*v)]))
}

/// Bulk OBC eigenvalues with a nonzero PBC winding within a few level
/// spacings of them.
fn winding_fraction(obc: &SpectrumResult, pbc: &PbcLoop, bulk: &[usize]) -> f64 {
    if bulk.is_empty() {
        return 0.0;
    }
    let scale = 4.0 * PI / obc.period / obc.len() as f64;
    let hits = bulk.iter().filter(|&&i| pbc.nonzero_winding_near(obc.eigenvalues[i], scale, 8).is_some()).count();
    hits as f64 / bulk.len() as f64
}

fn bands(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let b = floquet::quasienergy_bands(&cfg.model, &floquet::default_k_grid(cfg.bands.n_k), &cfg.floquet)?;
    write_bands(dir, &b)?;
    let vsum = (0..b.k.len()).map(|i| b.velocity.iter().map(|v| v[i]).sum::<f64>().abs()).fold(0.0, f64::max);
    let (band, ik, eps) = b.max_imag();
    let slope = b.velocity[band][ik];
    Ok(Outcome {
        summary: json!({
            "n_bands": b.n_bands(),
            "n_k": b.k.len(),
            "max_imag": { "band": band, "k": b.k[ik], "eps": c(eps), "velocity": slope },
            "max_abs_velocity_sum": vsum,
            "warnings": b.warnings,
        }),
        convergence: step_doubling(&cfg.model, &cfg.floquet)?,
    })
}

/// Open and periodic spectra plus the edge states of the open chain.
fn spectra_pair(cfg: &ExperimentConfig) -> Result<(SpectrumResult, SpectrumResult, Option<PbcLoop>, Vec<usize>)> {
    let cap = cfg.spectrum.dense_cap;
    let obc = spectra::realspace_floquet_spectrum(&cfg.model, Boundary::Obc, &cfg.floquet, cap)?;
    let pbc = spectra::realspace_floquet_spectrum(&cfg.model, Boundary::Pbc, &cfg.floquet, cap)?;
    if cfg.model.q().is_none() {
        return Ok((obc, pbc, None, Vec::new()));
    }
    let lp = PbcLoop::new(&cfg.model, cfg.spectrum.n_k_pbc, &cfg.floquet)?;
    let edges = spectra::detect_edge_states(&obc, &lp, &cfg.spectrum.edge)?;
    Ok((obc, pbc, Some(lp), edges))
}

fn spectrum(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let (obc, pbc, lp, edges) = spectra_pair(cfg)?;
    write_spectrum(dir, "spectrum_obc.csv", &obc, &edges)?;
    write_spectrum(dir, "spectrum_pbc.csv", &pbc, &[])?;
    let bulk = spectra::bulk_states(&obc, &edges);
    let fraction = lp.as_ref().map(|lp| winding_fraction(&obc, lp, &bulk));
    Ok(Outcome {
        summary: json!({
            "n_states": obc.len(),
            "edge_states": edges,
            "bulk_nonzero_winding_fraction": fraction,
            "obc_pbc_hausdorff": linalg::hausdorff(&obc.eigenvalues, &pbc.eigenvalues, Some(2.0 * PI / obc.period)),
        }),
        convergence: step_doubling(&cfg.model, &cfg.floquet)?,
    })
}

fn skin(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let obc = spectra::realspace_floquet_spectrum(&cfg.model, Boundary::Obc, &cfg.floquet, cfg.spectrum.dense_cap)?;
    let edges = match cfg.model.q() {
        Some(_) => {
            let lp = PbcLoop::new(&cfg.model, cfg.spectrum.n_k_pbc, &cfg.floquet)?;
            spectra::detect_edge_states(&obc, &lp, &cfg.spectrum.edge)?
        }
        None => Vec::new(),
    };
    let bulk = spectra::bulk_states(&obc, &edges);
    let profile = spectra::skin_weight(&obc, &bulk)?;
    write_skin(dir, &profile.w)?;
    Ok(Outcome {
        summary: json!({
            "n_bulk": bulk.len(),
            "edge_states": edges,
            "left_mass_fraction": profile.left_mass_fraction,
        }),
        convergence: step_doubling(&cfg.model, &cfg.floquet)?,
    })
}

fn gbz_experiment(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let d = gbz::dominant_gbz(&cfg.model, &cfg.floquet, &cfg.gbz, &cfg.spectrum)?;
    let b = floquet::quasienergy_bands(&cfg.model, &floquet::default_k_grid(cfg.bands.n_k), &cfg.floquet)?;
    write_bands(dir, &b)?;
    let pbc = spectra::realspace_floquet_spectrum(&cfg.model, Boundary::Pbc, &cfg.floquet, cfg.spectrum.dense_cap)?;
    write_spectrum(dir, "spectrum_obc.csv", &d.obc, &d.edges)?;
    write_spectrum(dir, "spectrum_pbc.csv", &pbc, &[])?;
    let g = &d.gbz;
    let rows = g.points.iter().map(|p| {
        vec![num(p.beta.re), num(p.beta.im), num(p.energy.re), num(p.energy.im), num(p.kappa), p.tag.as_str().to_string()]
    });
    dir.csv("gbz.csv", &["re_beta", "im_beta", "re_E", "im_E", "kappa_c", "feature_tag"], rows)?;
    let bulk = spectra::bulk_states(&d.obc, &d.edges);
    let profile = spectra::skin_weight(&d.obc, &bulk)?;
    write_skin(dir, &profile.w)?;
    let direction = match g.direction() {
        Ok(dir) => json!(dir),
        Err(e) => json!(e.to_string()),
    };
    let residual = gbz::verify_points(&cfg.model, g, 2 * cfg.floquet.n_steps)?;
    let mut conv = step_doubling(&cfg.model, &cfg.floquet)?;
    conv["gbz_residual_doubled_steps"] = json!(residual);
    Ok(Outcome {
        summary: json!({
            "radial_range": [g.radial_range.0, g.radial_range.1],
            "direction": direction,
            "dominant_band": d.band.pbc_band,
            "eps_max": c(d.band.eps_max),
            "arc_length": d.band.arc.len(),
            "n_points": g.points.len(),
            "unmatched": g.unmatched.len(),
            "features": g.features,
            "edge_states": d.edges,
            "bulk_nonzero_winding_fraction": winding_fraction(&d.obc, &d.pbc, &bulk),
            "left_mass_fraction": profile.left_mass_fraction,
        }),
        convergence: conv,
    })
}

/// The initial state with the band selector requested by the knobs.
fn initial_state(cfg: &ExperimentConfig, params: &ModelParams) -> Result<InitialState> {
    let d = &cfg.dynamics;
    if !d.random_u_vec && !d.band_selector {
        return Ok(d.initial.clone());
    }
    let InitialState::Gaussian { x0, sigma, .. } = d.initial else {
        return Err(Error::param("dynamics", "band selectors apply to Gaussian packets only"));
    };
    let u_vec = if d.band_selector {
        dynamics::band_vector(params, 0.0, &cfg.floquet)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let v: Vec<C64> =
            (0..params.cell_size()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|z| z / n).collect()
    };
    Ok(InitialState::Gaussian { x0, sigma, u_vec })
}

fn sweep_settings(cfg: &ExperimentConfig) -> SweepSettings {
    SweepSettings {
        n_periods: cfg.dynamics.n_periods,
        burn_in: cfg.dynamics.burn_in,
        evolve: cfg.dynamics.evolve,
        floquet: cfg.floquet,
        dk: cfg.sweep.dk,
    }
}

fn evolve(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let psi0 = initial_state(cfg, &cfg.model)?;
    let rec = dynamics::evolve(&cfg.model, &psi0, cfg.dynamics.n_periods, &cfg.dynamics.evolve)?;
    let rows = rec.times.iter().zip(&rec.snapshots).flat_map(|(t, row)| {
        row.iter().enumerate().map(move |(x, p)| vec![num(*t), x.to_string(), num(*p)])
    });
    dir.csv("evolution.csv", &["t", "site", "density"], rows)?;
    let com = rec.center_of_mass();
    let rows = (0..rec.times.len()).map(|i| vec![num(rec.times[i]), num(com[i]), num(rec.log_norms[i])]);
    dir.csv("trajectory.csv", &["t", "center_of_mass", "log_norm"], rows)?;
    let fit = dynamics::velocity_fit(&rec, cfg.dynamics.burn_in);
    let reliable = dynamics::dominant_velocity(&rec, cfg.dynamics.burn_in).is_ok();
    let fit = match fit {
        Ok(f) => json!({ "velocity": f.velocity, "r_squared": f.r_squared, "window": [f.window.0, f.window.1], "reliable": reliable }),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let mut conv = step_doubling(&cfg.model, &cfg.floquet)?;
    conv["n_substeps"] = json!(cfg.dynamics.evolve.n_substeps);
    conv["all_finite"] = json!(true);
    Ok(Outcome {
        summary: json!({
            "velocity_fit": fit,
            "period": rec.period,
            "cell_size": rec.cell_size,
            "renormalized": rec.renormalized,
            "final_log_norm": rec.log_norms.last(),
            "n_components": dynamics::count_peaks(rec.snapshots.last().unwrap(), rec.cell_size, rec.periodic, 0.05),
        }),
        convergence: conv,
    })
}

fn impurity(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let psi0 = initial_state(cfg, &cfg.model)?;
    let n = cfg.dynamics.n_periods;
    let lossy = dynamics::impurity_experiment(&cfg.model, &psi0, n, &cfg.dynamics.evolve, &cfg.impurity)?;
    let clean = ModelParams { gamma: vec![0.0; cfg.model.gamma.len()], ..cfg.model.clone() };
    let hermitian = dynamics::impurity_experiment(&clean, &psi0, n, &cfg.dynamics.evolve, &cfg.impurity)?;
    let rows = [("lossy", &lossy), ("hermitian", &hermitian)].map(|(case, o)| {
        vec![case.to_string(), o.site.to_string(), num(o.reflected), num(o.transmitted), o.n_periods.to_string()]
    });
    dir.csv("impurity.csv", &["case", "site", "reflected", "transmitted", "n_periods"], rows)?;
    Ok(Outcome {
        summary: json!({
            "lossy": lossy,
            "hermitian": hermitian,
            "reflection_ratio": hermitian.reflected / lossy.reflected,
        }),
        convergence: json!({ "n_substeps": cfg.dynamics.evolve.n_substeps }),
    })
}

fn decay(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let site = cfg.decay.site.unwrap_or(cfg.model.n_sites() / 2);
    let (a, b) = cfg.decay.sub_periods;
    let s = dynamics::propagator_element(&cfg.model, site, cfg.decay.n_periods, a..b, &cfg.dynamics.evolve)?;
    dir.csv("decay.csv", &["t", "log_abs_G"], s.times.iter().zip(&s.log_abs).map(|(t, g)| vec![num(*t), num(*g)]))?;
    dir.csv("decay_sub.csv", &["t", "log_abs_G"], s.sub_times.iter().zip(&s.sub_log_abs).map(|(t, g)| vec![num(*t), num(*g)]))?;
    let reference = match cfg.model.q() {
        Some(_) => Some(floquet::quasienergy_bands(&cfg.model, &floquet::default_k_grid(cfg.bands.n_k), &cfg.floquet)?.max_imag().2.im),
        None => None,
    };
    let est = dynamics::fit_decay_rate(&s, cfg.decay.discard, reference)?;
    Ok(Outcome {
        summary: json!({
            "site": est.site,
            "lambda": est.lambda,
            "reference_im_eps_max": est.reference,
            "relative_error": est.relative_error(),
            "window": [est.window.0, est.window.1],
            "rms": est.rms,
        }),
        convergence: json!({ "n_substeps": cfg.dynamics.evolve.n_substeps, "fit_rms": est.rms }),
    })
}

fn gamma_sweep(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let psi0 = initial_state(cfg, &cfg.model)?;
    let mut pts = dynamics::gamma_sweep(&cfg.model, &cfg.sweep.gammas, &psi0, &sweep_settings(cfg))?;
    pts.sort_by(|a, b| b.gamma_a.total_cmp(&a.gamma_a));
    let rows = pts.iter().flat_map(|p| {
        p.eps_k0.iter().zip(&p.velocities_k0).enumerate().map(move |(band, (e, v))| {
            vec![num(p.gamma_a), band.to_string(), num(e.re), num(e.im), num(*v)]
        })
    });
    dir.csv("gamma_bands.csv", &["gamma_a", "band_index", "re_eps", "im_eps", "velocity"], rows)?;
    let rows = pts.iter().map(|p| {
        vec![num(p.gamma_a), num(p.im_splitting), num(p.drift.velocity), num(p.drift.r_squared), p.n_components.to_string()]
    });
    dir.csv("gamma_drift.csv", &["gamma_a", "im_splitting", "velocity", "r_squared", "n_components"], rows)?;
    Ok(Outcome {
        summary: json!({
            "splitting_threshold": cfg.sweep.splitting_threshold,
            "onset_gamma_a": dynamics::splitting_onset(&pts, cfg.sweep.splitting_threshold),
            "u_vec": match &psi0 { InitialState::Gaussian { u_vec, .. } => u_vec.iter().map(|z| c(*z)).collect(), _ => Vec::new() },
        }),
        convergence: step_doubling(&cfg.model, &cfg.floquet)?,
    })
}

fn freq_sweep(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let psi0 = initial_state(cfg, &cfg.model)?;
    let pts = dynamics::frequency_direction(&cfg.model, &cfg.sweep.omegas, &psi0, &sweep_settings(cfg))?;
    let mut ranges = Vec::new();
    for p in &pts {
        let r = if cfg.sweep.with_gbz {
            let params = ModelParams { omega: p.omega, ..cfg.model.clone() };
            let g = gbz::dominant_gbz(&params, &cfg.floquet, &cfg.gbz, &cfg.spectrum)?.gbz;
            let dir = match g.direction() {
                Ok(d) => format!("{d:?}").to_lowercase(),
                Err(_) => "bidirectional".into(),
            };
            Some((g.radial_range, dir))
        } else {
            None
        };
        ranges.push(r);
    }
    let rows = pts.iter().zip(&ranges).map(|(p, r)| {
        let (lo, hi, d) = match r {
            Some(((lo, hi), d)) => (num(*lo), num(*hi), d.clone()),
            None => (String::new(), String::new(), String::new()),
        };
        vec![num(p.omega), num(p.drift.velocity), num(p.drift.r_squared), lo, hi, d]
    });
    dir.csv("freq_sweep.csv", &["omega", "velocity", "r_squared", "gbz_r_min", "gbz_r_max", "gbz_direction"], rows)?;
    let points: Vec<Value> = pts
        .iter()
        .zip(&ranges)
        .map(|(p, r)| {
            json!({
                "omega": p.omega,
                "velocity": p.drift.velocity,
                "r_squared": p.drift.r_squared,
                "gbz_radial_range": r.as_ref().map(|((a, b), _)| [*a, *b]),
                "gbz_direction": r.as_ref().map(|(_, d)| d.clone()),
            })
        })
        .collect();
    Ok(Outcome {
        summary: json!({ "points": points }),
        convergence: json!({ "n_substeps": cfg.dynamics.evolve.n_substeps, "n_steps": cfg.floquet.n_steps }),
    })
}

fn phi_scan(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let n = cfg.phi_scan.n_phi;
    let grid: Vec<f64> = (0..n).map(|i| 2.0 * PI * i as f64 / n as f64).collect();
    let scan = spectra::static_phi_scan(&cfg.model, &grid)?;
    let rows = scan.iter().flat_map(|(phi, e)| {
        e.iter().enumerate().map(move |(i, z)| vec![num(*phi), i.to_string(), num(z.re), num(z.im)])
    });
    dir.csv("phi_scan.csv", &["phi0", "state_index", "re_E", "im_E"], rows)?;
    let max_im = scan.iter().flat_map(|(_, e)| e.iter().map(|z| z.im.abs())).fold(0.0, f64::max);
    Ok(Outcome {
        summary: json!({ "n_phi": n, "n_states": scan.first().map_or(0, |s| s.1.len()), "max_abs_imag": max_im }),
        convergence: json!({ "method": "dense diagonalization" }),
    })
}

fn incommensurate(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let devs = if cfg.near_half.deviations.is_empty() {
        vec![cfg.model.flux.value() - 0.5]
    } else {
        cfg.near_half.deviations.clone()
    };
    let mut reports = Vec::new();
    for &d in &devs {
        let params = ModelParams { flux: Flux::Real(0.5 + d), ..cfg.model.clone() };
        reports.push(spectra::incommensurate_near_half(&params, &cfg.floquet, &cfg.near_half.settings, cfg.spectrum.dense_cap)?);
    }
    let rows = reports.iter().flat_map(|r| {
        r.energies.iter().zip(&r.labels).enumerate().map(move |(i, (e, b))| {
            vec![num(r.deviation), i.to_string(), num(e.re), num(e.im), format!("{b:?}")]
        })
    });
    dir.csv("near_half.csv", &["deviation", "state_index", "re_E", "im_E", "band"], rows)?;
    let rows = reports.iter().flat_map(|r| {
        let l = r.profiles.first().map_or(0, Vec::len);
        (0..l).map(move |x| vec![num(r.deviation), x.to_string(), num(r.profiles[0][x]), num(r.profiles[1][x]), num(r.profiles[2][x])])
    });
    dir.csv("near_half_weights.csv", &["deviation", "x", "W_I", "W_II", "W_III"], rows)?;
    let slope = (reports.len() >= 2).then(|| {
        let x: Vec<f64> = reports.iter().map(|r| r.deviation.abs().ln()).collect();
        let y: Vec<f64> = reports.iter().map(|r| r.delta_e.ln()).collect();
        dynamics::line_fit(&x, &y).slope
    });
    Ok(Outcome {
        summary: json!({ "reports": reports, "delta_e_loglog_slope": slope }),
        convergence: json!({ "n_steps": cfg.floquet.n_steps }),
    })
}

fn symmetry_check(cfg: &ExperimentConfig, dir: &mut OutputDir) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ks: Vec<f64> = (0..cfg.symmetry.n_samples).map(|_| rng.gen_range(-PI..PI)).collect();
    let p = &cfg.model;
    let fs = &cfg.floquet;
    let mut rows: Vec<(String, f64, Option<f64>)> = Vec::new();
    let t = floquet::check_trace_identity(p, &ks, fs)?;
    rows.push(("trace-identity".into(), t.max_deviation, None));
    if p.omega > 0.0 {
        let h = floquet::check_hidden_symmetry(p, &ks, fs)?;
        rows.push(("hidden-symmetry".into(), h.max_deviation, h.spectral_deviation));
    }
    if p.q() == Some(2) {
        let r = floquet::check_q2_reciprocity(p, &ks, fs)?;
        rows.push(("reciprocity".into(), r.max_deviation, None));
    }
    let b = floquet::quasienergy_bands(p, &floquet::default_k_grid(cfg.bands.n_k), fs)?;
    let vsum = (0..b.k.len()).map(|i| b.velocity.iter().map(|v| v[i]).sum::<f64>().abs()).fold(0.0, f64::max);
    rows.push(("velocity-sum".into(), vsum, None));
    let csv_rows = rows.iter().map(|(name, d, s)| vec![name.clone(), num(*d), s.map(num).unwrap_or_default()]);
    dir.csv("symmetry.csv", &["relation", "max_deviation", "spectral_deviation"], csv_rows)?;
    let summary: serde_json::Map<String, Value> =
        rows.iter().map(|(n, d, s)| (n.clone(), json!({ "max_deviation": d, "spectral_deviation": s }))).collect();
    Ok(Outcome {
        summary: json!({ "k_samples": ks, "relations": summary }),
        convergence: step_doubling(p, fs)?,
    })
}

