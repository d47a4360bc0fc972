//! Stroboscopic wavepacket evolution in real space, drift velocities,
//! impurity scattering, the bulk propagator element and its decay rate.
//!
//! The state is renormalized after every period and the logarithm of the
//! discarded norm is accumulated, so strong gain or loss never over- or
//! underflows. Velocities are reported in unit cells per unit time.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{self, FloquetSettings, EXPM_TOL};
use crate::linalg::{self, CMat, C64, ZERO};
use crate::model::{Boundary, Chain, ChainSlice, ModelParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialState {
    /// `exp(-(x - x0)^2 / 2 sigma^2) u_vec[x mod q]`; an empty `u_vec` means all ones.
    Gaussian {
        x0: usize,
        sigma: f64,
        #[serde(default)]
        u_vec: Vec<C64>,
    },
    Delta {
        x0: usize,
    },
    Custom {
        amplitudes: Vec<C64>,
    },
}

impl InitialState {
    pub fn gaussian(x0: usize, sigma: f64) -> Self {
        InitialState::Gaussian { x0, sigma, u_vec: Vec::new() }
    }

    /// Normalized amplitudes on the chain described by `params`.
    pub fn build(&self, params: &ModelParams) -> Result<Vec<C64>> {
        let l = params.n_sites();
        let periodic = params.boundary == Boundary::Pbc;
        let mut psi = match self {
            InitialState::Gaussian { x0, sigma, u_vec } => {
                check_site(*x0, l)?;
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::param("sigma", "must be finite and positive"));
                }
                let q = params.cell_size();
                if !u_vec.is_empty() && u_vec.len() != q {
                    return Err(Error::param("u_vec", format!("need {q} components, got {}", u_vec.len())));
                }
                (0..l)
                    .map(|x| {
                        let d = site_offset(x, *x0, l, periodic);
                        let w = u_vec.get(x % q.max(1)).copied().unwrap_or(C64::new(1.0, 0.0));
                        w * (-d * d / (2.0 * sigma * sigma)).exp()
                    })
                    .collect::<Vec<_>>()
            }
            InitialState::Delta { x0 } => {
                check_site(*x0, l)?;
                let mut v = vec![ZERO; l];
                v[*x0] = C64::new(1.0, 0.0);
                v
            }
            InitialState::Custom { amplitudes } => {
                if amplitudes.len() != l {
                    return Err(Error::param("amplitudes", format!("need {l} entries, got {}", amplitudes.len())));
                }
                amplitudes.clone()
            }
        };
        let n = norm(&psi);
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::param("initial state", "zero or non-finite norm"));
        }
        psi.iter_mut().for_each(|z| *z /= n);
        Ok(psi)
    }
}

fn check_site(x0: usize, l: usize) -> Result<()> {
    if x0 >= l {
        return Err(Error::param("x0", format!("site {x0} outside [0, {l})")));
    }
    Ok(())
}

/// Signed displacement `x - x0`, minimum image on a ring.
fn site_offset(x: usize, x0: usize, l: usize, periodic: bool) -> f64 {
    let d = x as f64 - x0 as f64;
    if periodic {
        let l = l as f64;
        d - l * (d / l).round()
    } else {
        d
    }
}

fn norm(psi: &[C64]) -> f64 {
    psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSettings {
    /// Midpoint substeps per period (at least 20).
    pub n_substeps: usize,
    /// Record every `stride`-th period.
    pub stride: usize,
    pub renormalize: bool,
    /// Period used for a static chain.
    pub static_period: f64,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        EvolveSettings { n_substeps: 40, stride: 1, renormalize: true, static_period: 1.0 }
    }
}

impl EvolveSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_substeps < 20 {
            return Err(Error::param("n_substeps", "must be >= 20"));
        }
        if self.stride == 0 {
            return Err(Error::param("stride", "must be >= 1"));
        }
        if !(self.static_period.is_finite() && self.static_period > 0.0) {
            return Err(Error::param("static_period", "must be finite and positive"));
        }
        Ok(())
    }
}

/// Precomputed slices of one period of the real-space evolution.
pub struct Evolver {
    slices: Vec<ChainSlice>,
    pub period: f64,
    pub n_sites: usize,
    pub periodic: bool,
}

impl Evolver {
    pub fn new(params: &ModelParams, settings: &EvolveSettings) -> Result<Self> {
        settings.validate()?;
        let chain = Chain::new(params)?;
        let period = params.period().unwrap_or(settings.static_period);
        let dt = period / settings.n_substeps as f64;
        let slices = (0..settings.n_substeps).map(|j| chain.slice((j as f64 + 0.5) * dt, dt)).collect();
        Ok(Evolver { slices, period, n_sites: chain.len, periodic: chain.periodic })
    }

    pub fn n_substeps(&self) -> usize {
        self.slices.len()
    }

    /// Applies substep `j` to every column of `x`.
    pub fn substep(&self, j: usize, x: &mut CMat) {
        linalg::expm_apply(&self.slices[j], x, EXPM_TOL);
    }

    /// One period applied to the columns of `x`.
    pub fn period_step(&self, x: &mut CMat) {
        for j in 0..self.slices.len() {
            self.substep(j, x);
        }
    }
}

/// Renormalizes column 0 and returns the log of the removed norm.
fn renormalize(x: &mut CMat, t: f64) -> Result<f64> {
    let n = norm(x.col_as_slice(0));
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::Propagation { t });
    }
    x.col_as_slice_mut(0).iter_mut().for_each(|z| *z /= n);
    Ok(n.ln())
}

fn column(psi: &[C64]) -> CMat {
    CMat::from_fn(psi.len(), 1, |i, _| psi[i])
}

#[derive(Clone, Debug, Serialize)]
pub struct EvolutionRecord {
    /// Stroboscopic sample times, starting at 0.
    pub times: Vec<f64>,
    /// `|psi(x, t_n)|^2`, one row per sample.
    pub snapshots: Vec<Vec<f64>>,
    pub renormalized: bool,
    /// `ln ||psi(t_n)||` before renormalization.
    pub log_norms: Vec<f64>,
    pub period: f64,
    pub cell_size: usize,
    pub periodic: bool,
    pub params: ModelParams,
}

impl EvolutionRecord {
    /// Pre-renormalization norms (may overflow to infinity for strong gain).
    pub fn norms(&self) -> Vec<f64> {
        self.log_norms.iter().map(|l| l.exp()).collect()
    }

    /// Center of mass of the renormalized density in sites. On a ring this is
    /// the circular mean, unwrapped in time.
    pub fn center_of_mass(&self) -> Vec<f64> {
        let l = self.snapshots.first().map_or(0, Vec::len);
        let mut out = Vec::with_capacity(self.snapshots.len());
        let mut prev: Option<f64> = None;
        for row in &self.snapshots {
            let total: f64 = row.iter().sum();
            let x = if self.periodic {
                let z: C64 = row.iter().enumerate().map(|(x, p)| C64::from_polar(*p, 2.0 * PI * x as f64 / l as f64)).sum();
                let mut a = z.arg() * l as f64 / (2.0 * PI);
                if let Some(p) = prev {
                    a += l as f64 * ((p - a) / l as f64).round();
                }
                a
            } else {
                row.iter().enumerate().map(|(x, p)| x as f64 * p).sum::<f64>() / total
            };
            prev = Some(x);
            out.push(x);
        }
        out
    }
}

/// Evolves `psi0` for `n_periods` with midpoint substeps, recording every
/// `stride`-th period (and `t = 0`).
pub fn evolve(params: &ModelParams, psi0: &InitialState, n_periods: usize, settings: &EvolveSettings) -> Result<EvolutionRecord> {
    let ev = Evolver::new(params, settings)?;
    let mut x = column(&psi0.build(params)?);
    let mut log_norm = 0.0;
    let mut rec = EvolutionRecord {
        times: Vec::new(),
        snapshots: Vec::new(),
        renormalized: settings.renormalize,
        log_norms: Vec::new(),
        period: ev.period,
        cell_size: params.cell_size(),
        periodic: ev.periodic,
        params: params.clone(),
    };
    let mut push = |x: &CMat, t: f64, log_norm: f64| -> Result<()> {
        let scale = if settings.renormalize { 1.0 } else { (2.0 * log_norm).exp() };
        let row: Vec<f64> = x.col_as_slice(0).iter().map(|z| z.norm_sqr() * scale).collect();
        if row.iter().any(|p| !p.is_finite()) {
            return Err(Error::Propagation { t });
        }
        rec.times.push(t);
        rec.snapshots.push(row);
        rec.log_norms.push(log_norm);
        Ok(())
    };
    push(&x, 0.0, 0.0)?;
    for n in 1..=n_periods {
        ev.period_step(&mut x);
        let t = n as f64 * ev.period;
        log_norm += renormalize(&mut x, t)?;
        if n % settings.stride == 0 {
            push(&x, t, log_norm)?;
        }
    }
    Ok(rec)
}

/// Ordinary least squares `y = slope t + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rms: f64,
}

pub fn line_fit(t: &[f64], y: &[f64]) -> LineFit {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    let sty: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let sse: f64 = t.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LineFit { slope, intercept, r_squared, rms: (sse / n).sqrt() }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VelocityFit {
    /// Unit cells per unit time.
    pub velocity: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_samples: usize,
}

/// Centre-of-mass drift over the record after discarding the first
/// `burn_in` fraction of samples.
///
/// A packet whose fitted displacement stays below half a site is reported as
/// stationary regardless of `R^2`.
pub fn dominant_velocity(record: &EvolutionRecord, burn_in: f64) -> Result<VelocityFit> {
    let fit = velocity_fit(record, burn_in)?;
    let span = fit.window.1 - fit.window.0;
    let shift = (fit.velocity * record.cell_size as f64 * span).abs();
    if fit.r_squared < 0.9 && shift > 0.5 {
        return Err(Error::UnreliableVelocity { velocity: fit.velocity, r_squared: fit.r_squared });
    }
    Ok(fit)
}

/// As [`dominant_velocity`] without the reliability check.
pub fn velocity_fit(record: &EvolutionRecord, burn_in: f64) -> Result<VelocityFit> {
    if !(0.0..1.0).contains(&burn_in) {
        return Err(Error::param("burn_in", "must lie in [0, 1)"));
    }
    let com = record.center_of_mass();
    let start = (burn_in * com.len() as f64).floor() as usize;
    let got = com.len() - start;
    if got < 20 {
        return Err(Error::InsufficientSamples { what: "velocity fit", need: 20, got });
    }
    let t = &record.times[start..];
    let f = line_fit(t, &com[start..]);
    Ok(VelocityFit {
        velocity: f.slope / record.cell_size as f64,
        r_squared: f.r_squared,
        window: (t[0], t[t.len() - 1]),
        n_samples: got,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpuritySettings {
    /// Sites skipped on either side of the impurity.
    pub buffer: usize,
    /// Smallest mass past the impurity that counts as arrival of the packet.
    pub arrival_mass: f64,
}

impl Default for ImpuritySettings {
    fn default() -> Self {
        ImpuritySettings { buffer: 5, arrival_mass: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ImpurityOutcome {
    pub site: usize,
    /// Weight of `psi_imp - psi_free` on the incidence side beyond the buffer.
    pub reflected: f64,
    /// Mass of `psi_imp` past the impurity.
    pub transmitted: f64,
    pub n_periods: usize,
}

/// Scatters `psi0` off the single impurity of `params`.
///
/// The same packet is evolved with and without the impurity. The reflected
/// fraction is the weight of the difference on the launch side of the
/// impurity, beyond `buffer` sites (and within half a ring on a ring),
/// relative to the norm of the perturbed state. Both are renormalized
/// consistently, so the numbers refer to the surviving packet.
pub fn impurity_experiment(
    params: &ModelParams,
    psi0: &InitialState,
    n_periods: usize,
    evolve: &EvolveSettings,
    settings: &ImpuritySettings,
) -> Result<ImpurityOutcome> {
    let &[(site, _)] = params.impurities.as_slice() else {
        return Err(Error::param("impurities", "need exactly one impurity"));
    };
    let free_params = ModelParams { impurities: Vec::new(), ..params.clone() };
    let with = Evolver::new(params, evolve)?;
    let free = Evolver::new(&free_params, evolve)?;
    let psi = psi0.build(params)?;
    let l = psi.len();
    let periodic = with.periodic;
    let start = centre(&psi, periodic);
    let side = if site_offset_f(start, site as f64, l, periodic) >= 0.0 { 1.0 } else { -1.0 };

    let (mut a, mut b) = (column(&psi), column(&psi));
    let (mut la, mut lb) = (0.0, 0.0);
    for n in 1..=n_periods {
        with.period_step(&mut a);
        free.period_step(&mut b);
        let t = n as f64 * with.period;
        la += renormalize(&mut a, t)?;
        lb += renormalize(&mut b, t)?;
    }
    let ratio = (lb - la).exp();
    let half = l as f64 / 2.0;
    let buffer = settings.buffer as f64;
    let (mut reflected, mut transmitted, mut arrived) = (0.0, 0.0, 0.0);
    for x in 0..l {
        let d = side * site_offset(x, site, l, periodic);
        let pa = a[(x, 0)];
        let pb = b[(x, 0)] * ratio;
        if d > buffer && d < half {
            reflected += (pa - pb).norm_sqr();
        } else if d < 0.0 {
            arrived += b[(x, 0)].norm_sqr();
            if d < -buffer {
                transmitted += pa.norm_sqr();
            }
        }
    }
    if !(reflected.is_finite() && transmitted.is_finite()) {
        return Err(Error::Propagation { t: n_periods as f64 * with.period });
    }
    if arrived < settings.arrival_mass {
        return Err(Error::Inconclusive { site });
    }
    Ok(ImpurityOutcome { site, reflected, transmitted, n_periods })
}

fn site_offset_f(x: f64, x0: f64, l: usize, periodic: bool) -> f64 {
    let d = x - x0;
    if periodic {
        d - l as f64 * (d / l as f64).round()
    } else {
        d
    }
}

fn centre(psi: &[C64], periodic: bool) -> f64 {
    let l = psi.len() as f64;
    let p: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = p.iter().sum();
    if periodic {
        let z: C64 = p.iter().enumerate().map(|(x, w)| C64::from_polar(*w, 2.0 * PI * x as f64 / l)).sum();
        (z.arg() * l / (2.0 * PI)).rem_euclid(l)
    } else {
        p.iter().enumerate().map(|(x, w)| x as f64 * w).sum::<f64>() / total
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PropagatorSamples {
    pub site: usize,
    pub times: Vec<f64>,
    /// `ln |G_aa(t_n)|` at stroboscopic times, starting with `t = 0`.
    pub log_abs: Vec<f64>,
    /// Within-period samples over the requested periods.
    pub sub_times: Vec<f64>,
    pub sub_log_abs: Vec<f64>,
    pub period: f64,
}

/// `G_aa(t) = <a| U(t, 0) |a>` by evolving the basis state `|a>`.
pub fn propagator_element(
    params: &ModelParams,
    site: usize,
    n_periods: usize,
    sub_periods: std::ops::Range<usize>,
    settings: &EvolveSettings,
) -> Result<PropagatorSamples> {
    let ev = Evolver::new(params, settings)?;
    let l = ev.n_sites;
    check_site(site, l)?;
    if !ev.periodic && (site < l / 4 || l - 1 - site < l / 4) {
        return Err(Error::param("site", format!("site {site} is within L/4 of an open edge")));
    }
    let mut x = CMat::zeros(l, 1);
    x[(site, 0)] = C64::new(1.0, 0.0);
    let dt = ev.period / ev.n_substeps() as f64;
    let mut out = PropagatorSamples {
        site,
        times: vec![0.0],
        log_abs: vec![0.0],
        sub_times: Vec::new(),
        sub_log_abs: Vec::new(),
        period: ev.period,
    };
    let mut log_norm = 0.0;
    for n in 0..n_periods {
        let t0 = n as f64 * ev.period;
        if sub_periods.contains(&n) {
            for j in 0..ev.n_substeps() {
                ev.substep(j, &mut x);
                out.sub_times.push(t0 + (j + 1) as f64 * dt);
                out.sub_log_abs.push(x[(site, 0)].norm().ln() + log_norm);
            }
        } else {
            ev.period_step(&mut x);
        }
        let t = t0 + ev.period;
        log_norm += renormalize(&mut x, t)?;
        out.times.push(t);
        out.log_abs.push(x[(site, 0)].norm().ln() + log_norm);
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayEstimate {
    pub site: usize,
    pub lambda: f64,
    pub window: (f64, f64),
    pub rms: f64,
    pub reference: Option<f64>,
    pub samples: Vec<(f64, f64)>,
}

impl DecayEstimate {
    pub fn relative_error(&self) -> Option<f64> {
        self.reference.map(|r| ((self.lambda - r) / r).abs())
    }
}

/// Least-squares slope of the stroboscopic `ln |G_aa|` after discarding the
/// first `discard` fraction of the run.
///
/// The residual check applies only when the fit describes an actual decay
/// (a total drop above one e-fold); a norm-preserving run oscillates around
/// a flat line and is returned as is.
pub fn fit_decay_rate(samples: &PropagatorSamples, discard: f64, reference: Option<f64>) -> Result<DecayEstimate> {
    if !(0.0..1.0).contains(&discard) {
        return Err(Error::param("discard", "must lie in [0, 1)"));
    }
    let t_end = *samples.times.last().unwrap_or(&0.0);
    let pts: Vec<(f64, f64)> = samples
        .times
        .iter()
        .zip(&samples.log_abs)
        .filter(|(t, y)| **t >= discard * t_end && y.is_finite())
        .map(|(t, y)| (*t, *y))
        .collect();
    if pts.len() < 30 {
        return Err(Error::InsufficientSamples { what: "decay fit", need: 30, got: pts.len() });
    }
    let t: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let f = line_fit(&t, &y);
    let window = (t[0], t[t.len() - 1]);
    let drop = (f.slope * (window.1 - window.0)).abs();
    if drop > 1.0 && f.rms > 0.1 * drop {
        return Err(Error::TransientTooShort { slope: f.slope, rms: f.rms, drop });
    }
    Ok(DecayEstimate { site: samples.site, lambda: f.slope, window, rms: f.rms, reference, samples: pts })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSettings {
    pub n_periods: usize,
    pub burn_in: f64,
    pub evolve: EvolveSettings,
    pub floquet: FloquetSettings,
    /// Momentum step of the band velocities at `k = 0`.
    pub dk: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            n_periods: 200,
            burn_in: 0.3,
            evolve: EvolveSettings::default(),
            floquet: FloquetSettings::default(),
            dk: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaPoint {
    pub gamma_a: f64,
    /// Quasienergies of the bands at `k = 0`, tracked by eigenvector overlap.
    pub eps_k0: Vec<C64>,
    pub velocities_k0: Vec<f64>,
    /// `max Im eps - min Im eps` at `k = 0`.
    pub im_splitting: f64,
    pub drift: VelocityFit,
    /// Separate density peaks in the final snapshot.
    pub n_components: usize,
}

/// Sweeps the loss on the first sublattice, `gamma[0] = gamma_a`.
pub fn gamma_sweep(template: &ModelParams, gammas: &[f64], psi0: &InitialState, settings: &SweepSettings) -> Result<Vec<GammaPoint>> {
    if !gammas.contains(&0.0) {
        return Err(Error::param("gamma grid", "must include 0"));
    }
    if template.gamma.is_empty() {
        return Err(Error::param("gamma", "template has no loss pattern"));
    }
    gammas
        .par_iter()
        .map(|&g| {
            let mut params = template.clone();
            params.gamma[0] = g;
            let bands = floquet::quasienergy_bands(&params, &[-settings.dk, 0.0, settings.dk], &settings.floquet)?;
            let eps_k0: Vec<C64> = bands.eps.iter().map(|b| b[1]).collect();
            let velocities_k0 = bands.velocity.iter().map(|v| v[1]).collect();
            let im = eps_k0.iter().map(|e| e.im);
            let im_splitting = im.clone().fold(f64::NEG_INFINITY, f64::max) - im.fold(f64::INFINITY, f64::min);
            let rec = evolve(&params, psi0, settings.n_periods, &settings.evolve)?;
            let drift = velocity_fit(&rec, settings.burn_in)?;
            let n_components = count_peaks(rec.snapshots.last().unwrap(), rec.cell_size, rec.periodic, 0.05);
            Ok(GammaPoint { gamma_a: g, eps_k0, velocities_k0, im_splitting, drift, n_components })
        })
        .collect()
}

/// Smallest `|gamma_a|` at which the `k = 0` imaginary splitting exceeds
/// `threshold`, linearly interpolated between grid points.
pub fn splitting_onset(points: &[GammaPoint], threshold: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.gamma_a, p.im_splitting)).collect();
    pts.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    let i = pts.iter().position(|p| p.1 > threshold)?;
    if i == 0 {
        return Some(pts[0].0);
    }
    let (g0, s0) = pts[i - 1];
    let (g1, s1) = pts[i];
    Some(g0 + (threshold - s0) / (s1 - s0) * (g1 - g0))
}

/// Local maxima of the cell-summed, smoothed density above `min_fraction`
/// of the global maximum.
pub fn count_peaks(density: &[f64], cell: usize, periodic: bool, min_fraction: f64) -> usize {
    let cells: Vec<f64> = density.chunks(cell.max(1)).map(|c| c.iter().sum()).collect();
    let n = cells.len();
    if n < 3 {
        return 1;
    }
    let w = 2isize;
    let at = |i: isize| -> Option<f64> {
        if periodic {
            Some(cells[i.rem_euclid(n as isize) as usize])
        } else {
            (0..n as isize).contains(&i).then(|| cells[i as usize])
        }
    };
    let smooth: Vec<f64> = (0..n as isize)
        .map(|i| {
            let v: Vec<f64> = (i - w..=i + w).filter_map(at).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let top = smooth.iter().cloned().fold(0.0, f64::max);
    let get = |i: isize| -> Option<f64> {
        if periodic {
            Some(smooth[i.rem_euclid(n as isize) as usize])
        } else {
            (0..n as isize).contains(&i).then(|| smooth[i as usize])
        }
    };
    (0..n as isize)
        .filter(|&i| {
            let s = smooth[i as usize];
            s > min_fraction * top
                && (1..=3).all(|d| get(i - d).map_or(true, |v| v < s) && get(i + d).map_or(true, |v| v <= s))
        })
        .count()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FrequencyPoint {
    pub omega: f64,
    pub drift: VelocityFit,
}

pub fn frequency_direction(template: &ModelParams, omegas: &[f64], psi0: &InitialState, settings: &SweepSettings) -> Result<Vec<FrequencyPoint>> {
    if let Some(w) = omegas.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::param("omega", format!("{w} is not positive")));
    }
    omegas
        .par_iter()
        .map(|&omega| {
            let params = ModelParams { omega, ..template.clone() };
            let rec = evolve(&params, psi0, settings.n_periods, &settings.evolve)?;
            Ok(FrequencyPoint { omega, drift: velocity_fit(&rec, settings.burn_in)? })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryComparison {
    pub n_periods: usize,
    /// Largest per-site difference of the renormalized densities in the bulk.
    pub max_difference: f64,
    /// Open-chain mass within `edge_window` sites of either end.
    pub edge_mass: f64,
}

/// Evolves the same packet on the open and the closed chain and compares the
/// renormalized densities on the middle half.
pub fn compare_boundaries(
    params: &ModelParams,
    psi0: &InitialState,
    n_periods: usize,
    edge_window: usize,
    settings: &EvolveSettings,
) -> Result<BoundaryComparison> {
    let settings = EvolveSettings { renormalize: true, stride: n_periods.max(1), ..*settings };
    let open = ModelParams { boundary: Boundary::Obc, ..params.clone() };
    let closed = ModelParams { boundary: Boundary::Pbc, ..params.clone() };
    let a = evolve(&open, psi0, n_periods, &settings)?;
    let b = evolve(&closed, psi0, n_periods, &settings)?;
    let (da, db) = (a.snapshots.last().unwrap(), b.snapshots.last().unwrap());
    let l = da.len();
    let w = edge_window.min(l / 2);
    Ok(BoundaryComparison {
        n_periods,
        max_difference: max_density_difference(da, db, l / 4..l - l / 4),
        edge_mass: da[..w].iter().chain(&da[l - w..]).sum(),
    })
}

/// Largest per-site difference of two raw densities over `sites`.
pub fn max_density_difference(a: &[f64], b: &[f64], sites: std::ops::Range<usize>) -> f64 {
    sites.map(|x| (a[x] - b[x]).abs()).fold(0.0, f64::max)
}

/// Bloch eigenvector of the band with the largest `Im eps` at momentum `k`,
/// the band selector of a Gaussian packet. Ties go to the smallest `|Re eps|`.
pub fn band_vector(params: &ModelParams, k: f64, floquet: &FloquetSettings) -> Result<Vec<C64>> {
    let h = floquet::bloch_floquet(params, k, floquet)?;
    let (vals, mut vecs) = linalg::eig(&h.matrix)?;
    linalg::normalize_columns(&mut vecs);
    let best = (0..vals.len())
        .max_by(|&i, &j| {
            let (a, b) = (vals[i], vals[j]);
            if (a.im - b.im).abs() > 1e-10 {
                a.im.total_cmp(&b.im)
            } else {
                b.re.abs().total_cmp(&a.re.abs())
            }
        })
        .ok_or_else(|| Error::Eigen("empty spectrum".into()))?;
    Ok(vecs.col_as_slice(best).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Flux;

    fn hermitian_static(n_cells: usize) -> ModelParams {
        ModelParams { omega: 0.0, gamma: vec![0.0; 3], n_cells, ..ModelParams::reference() }
    }

    #[test]
    fn initial_states_are_normalized() {
        let p = ModelParams::reference();
        for s in [
            InitialState::gaussian(150, 5.0),
            InitialState::Delta { x0: 3 },
            InitialState::Gaussian { x0: 0, sigma: 2.0, u_vec: vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0), ZERO] },
        ] {
            let v = s.build(&p).unwrap();
            assert!((norm(&v) - 1.0).abs() < 1e-14);
        }
        assert!(InitialState::Delta { x0: 300 }.build(&p).is_err());
        assert!(InitialState::Custom { amplitudes: vec![ZERO; 300] }.build(&p).is_err());
    }

    #[test]
    fn ring_gaussian_wraps() {
        let p = ModelParams { boundary: Boundary::Pbc, ..ModelParams::reference() };
        let v = InitialState::gaussian(0, 3.0).build(&p).unwrap();
        assert!((v[1].norm() - v[299].norm()).abs() < 1e-15);
    }

    #[test]
    fn norms_and_renormalized_rows() {
        let p = ModelParams { n_cells: 20, ..ModelParams::reference() };
        let s = EvolveSettings { n_substeps: 20, ..Default::default() };
        let rec = evolve(&p, &InitialState::gaussian(30, 3.0), 10, &s).unwrap();
        assert_eq!(rec.times.len(), 11);
        assert!(rec.times.windows(2).all(|w| w[1] > w[0]));
        for row in &rec.snapshots {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(rec.log_norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        let raw = evolve(&p, &InitialState::gaussian(30, 3.0), 10, &EvolveSettings { renormalize: false, ..s }).unwrap();
        let total: f64 = raw.snapshots[10].iter().sum();
        assert!((total.ln() - 2.0 * rec.log_norms[10]).abs() < 1e-10);
    }

    #[test]
    fn static_hermitian_packet_does_not_drift() {
        let p = hermitian_static(100);
        let s = EvolveSettings { static_period: 2.0, ..Default::default() };
        let rec = evolve(&p, &InitialState::Delta { x0: 150 }, 40, &s).unwrap();
        let com = rec.center_of_mass();
        assert!(com.iter().all(|x| (x - 150.0).abs() < 0.5));
        let v = dominant_velocity(&rec, 0.3).unwrap();
        assert!(v.velocity.abs() < 0.002);
    }

    #[test]
    fn line_fit_recovers_slope() {
        let t: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 3.0 - 0.5 * t).collect();
        let f = line_fit(&t, &y);
        assert!((f.slope + 0.5).abs() < 1e-12 && (f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_loss_decays_at_gamma() {
        let p = ModelParams {
            flux: Flux::Rational(0, 1),
            v: 0.0,
            gamma: vec![-0.5],
            omega: 0.0,
            n_cells: 80,
            boundary: Boundary::Pbc,
            ..ModelParams::reference()
        };
        let s = EvolveSettings { n_substeps: 20, static_period: 0.5, ..Default::default() };
        let g = propagator_element(&p, 40, 40, 0..0, &s).unwrap();
        assert_eq!(g.log_abs[0], 0.0);
        // |G_aa| = e^{gamma t} |J_0(2ut)| for a uniformly lossy ring.
        let t = g.times[3];
        let oracle = -0.5 * t + bessel_j0(2.0 * t).abs().ln();
        assert!((g.log_abs[3] - oracle).abs() < 1e-6, "{} vs {oracle}", g.log_abs[3]);
    }

    fn bessel_j0(x: f64) -> f64 {
        // Power series; fine for the moderate arguments used here.
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= -(x * x / 4.0) / (k * k) as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn impurity_needs_exactly_one() {
        let p = ModelParams::reference();
        let e = impurity_experiment(&p, &InitialState::Delta { x0: 10 }, 1, &EvolveSettings::default(), &ImpuritySettings::default());
        assert!(matches!(e, Err(Error::InvalidParam { .. })));
    }

    #[test]
    fn zero_impurity_reflects_nothing() {
        let p = ModelParams { impurities: vec![(60, 0.0)], n_cells: 40, boundary: Boundary::Pbc, ..ModelParams::reference() };
        let out =
            impurity_experiment(&p, &InitialState::gaussian(80, 3.0), 30, &EvolveSettings::default(), &ImpuritySettings::default())
                .unwrap();
        assert!(out.reflected < 1e-20);
    }

    #[test]
    fn peaks_of_two_bumps() {
        let d: Vec<f64> = (0..300)
            .map(|x| {
                let x = x as f64;
                (-(x - 60.0f64).powi(2) / 50.0).exp() + 0.5 * (-(x - 220.0f64).powi(2) / 50.0).exp()
            })
            .collect();
        assert_eq!(count_peaks(&d, 3, false, 0.05), 2);
    }
}
