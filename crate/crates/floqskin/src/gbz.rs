//! Stroboscopic generalized Brillouin zone by circle scanning.
//!
//! For each radius `|beta| = exp(-kappa)` the quasienergies of the continued
//! Bloch propagator are compared with the open-chain spectrum. Matches are
//! clustered, polished to roots of `det[U(beta) - exp(-i E T)]`, and for every
//! energy the pair of roots with equal modulus is kept.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::floquet::{self, FloquetSettings};
use crate::linalg::{self, CMat, C64, IM};
use crate::model::{BlochModel, Boundary, ModelParams};
use crate::spectra::{self, EdgeCriteria, PbcLoop, SpectrumResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbzSettings {
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub n_kappa: usize,
    pub n_k: usize,
    pub match_tol: f64,
    /// Largest `|ln|b1| - ln|b2||` accepted for an equal-modulus pair.
    pub pair_tol: f64,
    /// Newton polish of grid matches.
    pub refine: bool,
}

impl Default for GbzSettings {
    fn default() -> Self {
        GbzSettings {
            kappa_min: -0.6,
            kappa_max: 0.6,
            n_kappa: 121,
            n_k: 721,
            match_tol: 2e-3,
            pair_tol: 0.1,
            refine: true,
        }
    }
}

impl GbzSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_min < self.kappa_max) || !self.kappa_min.is_finite() || !self.kappa_max.is_finite() {
            return Err(Error::param("kappa range", "need finite kappa_min < kappa_max"));
        }
        if self.kappa_min > 0.0 || self.kappa_max < 0.0 {
            return Err(Error::param("kappa range", "must bracket 0"));
        }
        if self.n_kappa < 2 || self.n_k < 8 {
            return Err(Error::param("grid", "need n_kappa >= 2 and n_k >= 8"));
        }
        if !(self.match_tol > 0.0) || !(self.pair_tol > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        Ok(())
    }

    pub fn kappas(&self) -> Vec<f64> {
        let n = self.n_kappa - 1;
        (0..=n).map(|i| self.kappa_min + (self.kappa_max - self.kappa_min) * i as f64 / n as f64).collect()
    }

    fn ks(&self) -> Vec<f64> {
        (0..self.n_k).map(|j| -PI + 2.0 * PI * j as f64 / self.n_k as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureTag {
    None,
    Saddle,
    Cusp,
}

impl FeatureTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureTag::None => "none",
            FeatureTag::Saddle => "saddle",
            FeatureTag::Cusp => "cusp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GbzPoint {
    pub beta: C64,
    pub energy: C64,
    /// `-ln|beta|`.
    pub kappa: f64,
    /// Index into the energy list passed to the scan.
    pub energy_index: usize,
    pub tag: FeatureTag,
}

/// A coalescing root pair at an endpoint of the open-boundary arc.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Saddle {
    pub energy: C64,
    /// Midpoint of the pair.
    pub beta: C64,
    /// Distance between the two roots; it vanishes in the long-chain limit.
    pub separation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CuspPair {
    pub energy: C64,
    pub beta: [C64; 2],
    /// Turning angle of the arc at the cusp (radians).
    pub angle: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Features {
    pub saddles: Vec<Saddle>,
    pub cusp: Option<CuspPair>,
    /// Arc spacing at the endpoints over the median arc spacing; below 1 the
    /// eigenvalues accumulate at the saddles.
    pub endpoint_density_ratio: Option<f64>,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GbzResult {
    pub points: Vec<GbzPoint>,
    pub features: Features,
    /// `[min |beta|, max |beta|]` over the paired points.
    pub radial_range: (f64, f64),
    pub band: Option<usize>,
    pub energies: Vec<C64>,
    /// Energies for which no equal-modulus pair was found.
    pub unmatched: Vec<usize>,
    /// Per energy, the `kappa` interval across which the winding of
    /// `det[U(beta) - exp(-i E T)]` around `|beta| = exp(-kappa)` changes sign.
    pub brackets: Vec<Option<(f64, f64)>>,
    pub raw_matches: usize,
    pub period: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    Left,
    Right,
}

impl GbzResult {
    /// `r_max < 1`: modes pile up on the left and packets drift left;
    /// `r_min > 1`: rightward.
    pub fn direction(&self) -> Result<Direction> {
        let (r_min, r_max) = self.radial_range;
        if r_max < 1.0 {
            Ok(Direction::Left)
        } else if r_min > 1.0 {
            Ok(Direction::Right)
        } else {
            Err(Error::Bidirectional { r_min, r_max })
        }
    }

    /// Roots belonging to energy `i`.
    pub fn roots_of(&self, i: usize) -> Vec<&GbzPoint> {
        self.points.iter().filter(|p| p.energy_index == i).collect()
    }
}

struct Ctx {
    model: BlochModel,
    period: f64,
    n_steps: usize,
}

impl Ctx {
    fn new(params: &ModelParams, floquet: &FloquetSettings) -> Result<Self> {
        floquet.validate()?;
        Ok(Ctx { model: BlochModel::new(params)?, period: floquet.period(params), n_steps: floquet.n_steps })
    }

    fn propagator(&self, beta: C64) -> CMat {
        floquet::bloch_propagator(&self.model, beta, self.period, self.n_steps)
    }

    fn quasienergies(&self, beta: C64) -> Result<Vec<C64>> {
        let w = linalg::eigenvalues(&self.propagator(beta))?;
        Ok(floquet::quasienergies_of(&w, self.period))
    }

    /// Folded distance from `e` to the nearest quasienergy at `beta`.
    fn residual(&self, beta: C64, e: C64) -> Result<f64> {
        Ok(self.quasienergies(beta)?.iter().map(|&x| folded_distance(x, e, self.period)).fold(f64::INFINITY, f64::min))
    }

    fn det(&self, beta: C64, lam: C64) -> C64 {
        let mut u = self.propagator(beta);
        for i in 0..u.nrows() {
            u[(i, i)] -= lam;
        }
        linalg::determinant(&u)
    }

    /// Newton iteration on `det[U(beta) - lam]` with a central complex
    /// difference for the derivative.
    fn polish(&self, mut beta: C64, e: C64) -> C64 {
        let lam = (-IM * e * self.period).exp();
        for _ in 0..40 {
            let h = 1e-6 * beta.norm();
            let f = self.det(beta, lam);
            let df = (self.det(beta + h, lam) - self.det(beta - h, lam)) / (2.0 * h);
            if f.norm() == 0.0 || !df.is_finite() || df.norm() == 0.0 {
                break;
            }
            let step = f / df;
            let step = if step.norm() > 0.1 * beta.norm() { step * (0.1 * beta.norm() / step.norm()) } else { step };
            beta -= step;
            if step.norm() < 1e-14 * beta.norm() {
                break;
            }
        }
        beta
    }
}

pub(crate) fn folded_distance(a: C64, b: C64, period: f64) -> f64 {
    let zone = 2.0 * PI / period;
    let mut dr = a.re - b.re;
    dr -= zone * (dr / zone).round();
    dr.hypot(a.im - b.im)
}

#[derive(Clone, Copy, Debug)]
struct RawMatch {
    kappa: f64,
    k: f64,
    energy: usize,
    distance: f64,
}

/// Scans circles `|beta| = exp(-kappa)` and records generalized momenta
/// whose quasienergies come within `match_tol` of one of `energies`.
pub fn gbz_circle_scan(
    params: &ModelParams,
    energies: &[C64],
    floquet: &FloquetSettings,
    settings: &GbzSettings,
) -> Result<GbzResult> {
    settings.validate()?;
    if energies.is_empty() {
        return Err(Error::EmptyFilter);
    }
    let ctx = Ctx::new(params, floquet)?;
    let ks = settings.ks();
    let kappas = settings.kappas();
    let dk = 2.0 * PI / settings.n_k as f64;
    let dkappa = (settings.kappa_max - settings.kappa_min) / (settings.n_kappa - 1) as f64;
    let rings: Vec<Vec<Vec<C64>>> = kappas
        .par_iter()
        .map(|&kappa| ks.iter().map(|&k| ctx.quasienergies(C64::from_polar((-kappa).exp(), k))).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let raw: Vec<RawMatch> = rings
        .par_iter()
        .zip(&kappas)
        .flat_map_iter(|(ring, &kappa)| ring_matches(ring, kappa, &ks, energies, ctx.period, settings.match_tol))
        .collect();
    if raw.is_empty() {
        return Err(Error::EmptyGbz { kappa_min: settings.kappa_min, kappa_max: settings.kappa_max });
    }
    // windings[kappa][energy]
    let windings: Vec<Vec<Option<i32>>> = rings
        .par_iter()
        .map(|ring| {
            let mu: Vec<Vec<C64>> = ring.iter().map(|es| es.iter().map(|e| (-IM * e * ctx.period).exp()).collect()).collect();
            energies.iter().map(|e| ring_winding(&mu, (-IM * e * ctx.period).exp())).collect()
        })
        .collect();
    let brackets: Vec<Option<(f64, f64)>> =
        (0..energies.len()).map(|i| sign_change(&kappas, &windings.iter().map(|w| w[i]).collect::<Vec<_>>())).collect();
    let per_energy: Vec<(usize, Option<[C64; 2]>)> = (0..energies.len())
        .into_par_iter()
        .map(|i| {
            let Some((lo, hi)) = brackets[i] else { return Ok((i, None)) };
            let (lo, hi) = (lo - 1.01 * dkappa, hi + 1.01 * dkappa);
            let reps = cluster(raw.iter().filter(|m| m.energy == i && m.kappa >= lo && m.kappa <= hi), 1.01 * dkappa, 2.01 * dk);
            let mut roots: Vec<C64> = Vec::new();
            for m in reps {
                let guess = C64::from_polar((-m.kappa).exp(), m.k);
                let b = if settings.refine { ctx.polish(guess, energies[i]) } else { guess };
                let ok = if settings.refine {
                    b.is_finite() && b.norm() > 0.0 && ctx.residual(b, energies[i])? < 1e-9 && (lo..=hi).contains(&-b.norm().ln())
                } else {
                    true
                };
                if ok && roots.iter().all(|r| (r - b).norm() > 1e-6 * b.norm().max(1.0)) {
                    roots.push(b);
                }
            }
            Ok((i, equal_modulus_pair(&roots, settings.pair_tol)))
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut unmatched = Vec::new();
    for (i, pair) in per_energy {
        match pair {
            Some(p) => {
                for beta in p {
                    points.push(GbzPoint { beta, energy: energies[i], kappa: -beta.norm().ln(), energy_index: i, tag: FeatureTag::None });
                }
            }
            None => unmatched.push(i),
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyGbz { kappa_min: settings.kappa_min, kappa_max: settings.kappa_max });
    }
    let r_min = points.iter().map(|p| p.beta.norm()).fold(f64::INFINITY, f64::min);
    let r_max = points.iter().map(|p| p.beta.norm()).fold(0.0, f64::max);
    Ok(GbzResult {
        points,
        features: Features::default(),
        radial_range: (r_min, r_max),
        band: None,
        energies: energies.to_vec(),
        unmatched,
        brackets,
        raw_matches: raw.len(),
        period: ctx.period,
    })
}

fn ring_matches(ring: &[Vec<C64>], kappa: f64, ks: &[f64], energies: &[C64], period: f64, tol: f64) -> Vec<RawMatch> {
    let mut found = Vec::new();
    let dk = 2.0 * PI / ks.len() as f64;
    for (j, now) in ring.iter().enumerate() {
        let next = &ring[(j + 1) % ring.len()];
        for &a in now {
            // Link to the nearest eigenvalue at the next momentum and match
            // against the segment between them.
            let b = next.iter().copied().min_by(|x, y| folded_distance(a, *x, period).total_cmp(&folded_distance(a, *y, period)));
            let seg = b.map_or(C64::new(0.0, 0.0), |b| delta(a, b, period));
            for (i, &e) in energies.iter().enumerate() {
                let to_e = delta(a, e, period);
                let s = if seg.norm_sqr() > 0.0 { ((to_e * seg.conj()).re / seg.norm_sqr()).clamp(0.0, 1.0) } else { 0.0 };
                let d = (to_e - seg * s).norm();
                if d < tol {
                    found.push(RawMatch { kappa, k: ks[j] + s * dk, energy: i, distance: d });
                }
            }
        }
    }
    found
}

/// Winding of `prod_j (mu_j(k) - lam)` over a ring; `None` when the
/// sampling is too coarse to round reliably.
fn ring_winding(mu: &[Vec<C64>], lam: C64) -> Option<i32> {
    let det: Vec<C64> = mu.iter().map(|m| m.iter().map(|x| x - lam).product()).collect();
    if det.iter().any(|d| d.norm_sqr() == 0.0) {
        return None;
    }
    let n = det.len();
    let turns = (0..n).map(|j| (det[(j + 1) % n] / det[j]).arg()).sum::<f64>() / (2.0 * PI);
    let w = turns.round();
    ((turns - w).abs() < 0.25).then_some(w as i32)
}

/// `kappa` interval between the last circle with positive winding and the
/// first with negative winding (the winding drops by one for each root a
/// shrinking circle leaves behind).
fn sign_change(kappas: &[f64], w: &[Option<i32>]) -> Option<(f64, f64)> {
    let lo = kappas.iter().zip(w).filter(|(_, w)| matches!(w, Some(x) if *x > 0)).map(|(k, _)| *k).fold(f64::NEG_INFINITY, f64::max);
    let hi = kappas.iter().zip(w).filter(|(_, w)| matches!(w, Some(x) if *x < 0)).map(|(k, _)| *k).fold(f64::INFINITY, f64::min);
    (lo.is_finite() && hi.is_finite() && lo < hi).then_some((lo, hi))
}

/// Best match per neighbourhood in the `(kappa, k)` plane.
fn cluster<'a>(matches: impl Iterator<Item = &'a RawMatch>, dkappa: f64, dk: f64) -> Vec<RawMatch> {
    let mut reps: Vec<RawMatch> = Vec::new();
    for m in matches {
        let near = reps.iter_mut().find(|r| {
            let d = (r.k - m.k + PI).rem_euclid(2.0 * PI) - PI;
            (r.kappa - m.kappa).abs() <= dkappa && d.abs() <= dk
        });
        match near {
            Some(r) if m.distance < r.distance => *r = *m,
            Some(_) => {}
            None => reps.push(*m),
        }
    }
    reps
}

fn equal_modulus_pair(roots: &[C64], tol: f64) -> Option<[C64; 2]> {
    let mut best: Option<(f64, [C64; 2])> = None;
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            let d = (roots[i].norm().ln() - roots[j].norm().ln()).abs();
            if d < tol && best.map_or(true, |(b, _)| d < b) {
                best = Some((d, [roots[i], roots[j]]));
            }
        }
    }
    best.map(|(_, p)| p)
}

#[derive(Clone, Debug, Serialize)]
pub struct DominantBand {
    /// Periodic band holding the largest imaginary part.
    pub pbc_band: usize,
    pub eps_max: C64,
    /// The arc and, for a mirror-symmetric spectrum, its mirror image.
    pub states: Vec<usize>,
    /// Ordered arc starting at the top of the spectrum.
    pub arc: Vec<usize>,
}

/// The open-boundary arc that controls long-time dynamics, ordered from the
/// bulk eigenvalue with the largest imaginary part (see [`arc_chain`]). When
/// the bulk spectrum is symmetric under `eps -> -conj(eps)` the chain runs in
/// the `Re >= 0` half and `states` adds the mirror arc.
pub fn dominant_band(
    params: &ModelParams,
    obc: &[C64],
    exclude: &[usize],
    floquet: &FloquetSettings,
    n_k: usize,
) -> Result<DominantBand> {
    let bands = floquet::quasienergy_bands(params, &floquet::default_k_grid(n_k), floquet)?;
    let (pbc_band, _, eps_max) = bands.max_imag();
    let period = bands.period;
    let bulk: Vec<usize> = (0..obc.len()).filter(|i| !exclude.contains(i)).collect();
    if bulk.is_empty() {
        return Err(Error::EmptyFilter);
    }
    let scale = bulk.iter().map(|&i| obc[i].norm()).fold(0.0, f64::max).max(1e-300);
    let mirror_of = |i: usize| {
        let m = C64::new(-obc[i].re, obc[i].im);
        bulk.iter().copied().find(|&j| (obc[j] - m).norm() < 1e-8 * scale)
    };
    let symmetric = bulk.iter().all(|&i| mirror_of(i).is_some());
    let pool: Vec<usize> = if symmetric { bulk.iter().copied().filter(|&i| obc[i].re >= 0.0).collect() } else { bulk.clone() };
    let arc = arc_chain(obc, &pool, period);
    let mut states = arc.clone();
    if symmetric {
        for &i in &arc {
            if let Some(m) = mirror_of(i) {
                if !states.contains(&m) {
                    states.push(m);
                }
            }
        }
    }
    Ok(DominantBand { pbc_band, eps_max, states, arc })
}

/// Nearest-neighbour chain through `pool` starting at its eigenvalue with the
/// largest imaginary part; a link longer than five times the median
/// nearest-neighbour spacing of the pool ends it.
pub fn arc_chain(e: &[C64], pool: &[usize], period: f64) -> Vec<usize> {
    if pool.is_empty() {
        return Vec::new();
    }
    let nn: Vec<f64> = pool
        .iter()
        .map(|&i| pool.iter().filter(|&&j| j != i).map(|&j| folded_distance(e[i], e[j], period)).fold(f64::INFINITY, f64::min))
        .collect();
    let link = 5.0 * median(&nn);
    let start = pool.iter().copied().max_by(|&a, &b| e[a].im.total_cmp(&e[b].im)).unwrap_or(pool[0]);
    let mut chain = vec![start];
    let mut used: Vec<bool> = pool.iter().map(|&j| j == start).collect();
    loop {
        let last = chain[chain.len() - 1];
        let next = (0..pool.len())
            .filter(|&m| !used[m])
            .map(|m| (m, folded_distance(e[last], e[pool[m]], period)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match next {
            Some((m, d)) if d <= link => {
                used[m] = true;
                chain.push(pool[m]);
            }
            _ => break,
        }
    }
    chain
}

/// Saddle points at the two ends of the open-boundary arc and the root pair
/// at its sharpest turn.
///
/// `arc` indexes `gbz.energies` in order along the arc (see
/// [`arc_chain`]). A cusp is the sharpest turn if it exceeds both 30 degrees
/// and five times the median turning angle.
pub fn classify_features(gbz: &mut GbzResult, arc: &[usize]) {
    let mut f = Features::default();
    let e: Vec<C64> = arc.iter().map(|&i| gbz.energies[i]).collect();
    let period = gbz.period;
    if e.len() < 3 {
        f.diagnostics.push("arc has fewer than three eigenvalues".into());
        gbz.features = f;
        return;
    }
    let chain: Vec<usize> = (0..e.len()).collect();
    let pair_of = |i: usize| -> Option<[C64; 2]> {
        let r: Vec<C64> = gbz.points.iter().filter(|p| p.energy_index == arc[i]).map(|p| p.beta).collect();
        (r.len() == 2).then(|| [r[0], r[1]])
    };
    let mut saddle_idx = Vec::new();
    let mut cusp_idx = None;
    for &end in &[chain[0], *chain.last().unwrap_or(&chain[0])] {
        if saddle_idx.contains(&end) {
            continue;
        }
        // The endpoint itself may lack a resolved pair; walk inwards.
        let pos = chain.iter().position(|&c| c == end).unwrap_or(0);
        let walk: Vec<usize> = if pos == 0 { chain.iter().take(4).copied().collect() } else { chain.iter().rev().take(4).copied().collect() };
        match walk.iter().find_map(|&i| pair_of(i).map(|p| (i, p))) {
            Some((i, p)) => {
                saddle_idx.push(i);
                f.saddles.push(Saddle { energy: e[i], beta: (p[0] + p[1]) / 2.0, separation: (p[0] - p[1]).norm() });
            }
            None => f.diagnostics.push(format!("no root pair near arc endpoint {}", e[end])),
        }
    }
    if chain.len() >= 5 {
        let turns: Vec<(usize, f64)> = (2..chain.len() - 2)
            .filter_map(|w| {
                let a = delta(e[chain[w - 2]], e[chain[w]], period);
                let b = delta(e[chain[w]], e[chain[w + 2]], period);
                (a.norm() > 0.0 && b.norm() > 0.0).then(|| (w, (b / a).arg().abs()))
            })
            .collect();
        let typical = median(&turns.iter().map(|t| t.1).collect::<Vec<_>>());
        match turns.iter().copied().max_by(|a, b| a.1.total_cmp(&b.1)) {
            Some((w, ang)) if ang > (PI / 6.0).max(5.0 * typical) => {
                match [chain[w], chain[w - 1], chain[w + 1]].into_iter().find_map(|i| pair_of(i).map(|p| (i, p))) {
                    Some((i, p)) => {
                        cusp_idx = Some(arc[i]);
                        f.cusp = Some(CuspPair { energy: e[i], beta: p, angle: ang });
                    }
                    None => f.diagnostics.push(format!("cusp at {} has no root pair", e[chain[w]])),
                }
            }
            Some((_, ang)) => f.diagnostics.push(format!("no cusp: sharpest turn {:.1} deg", ang.to_degrees())),
            None => {}
        }
        let spacing: Vec<f64> = chain.windows(2).map(|p| folded_distance(e[p[0]], e[p[1]], period)).collect();
        let m = median(&spacing);
        if m > 0.0 && spacing.len() >= 2 {
            f.endpoint_density_ratio = Some(0.5 * (spacing[0] + spacing[spacing.len() - 1]) / m);
        }
    }
    let saddle_idx: Vec<usize> = saddle_idx.iter().map(|&i| arc[i]).collect();
    for p in &mut gbz.points {
        if saddle_idx.contains(&p.energy_index) {
            p.tag = FeatureTag::Saddle;
        } else if Some(p.energy_index) == cusp_idx {
            p.tag = FeatureTag::Cusp;
        }
    }
    gbz.features = f;
}

fn delta(a: C64, b: C64, period: f64) -> C64 {
    let zone = 2.0 * PI / period;
    let mut d = b - a;
    d.re -= zone * (d.re / zone).round();
    d
}

fn median(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if s.is_empty() {
        return 0.0;
    }
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

/// Grids of the open/periodic spectra feeding [`dominant_gbz`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSettings {
    /// Momenta of the periodic loop used for windings and edge states.
    pub n_k_pbc: usize,
    /// Momenta of the tracked bands that locate the dominant band.
    pub n_k_bands: usize,
    pub dense_cap: usize,
    pub edge: EdgeCriteria,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings { n_k_pbc: 401, n_k_bands: 241, dense_cap: spectra::DEFAULT_DENSE_CAP, edge: EdgeCriteria::default() }
    }
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_k_pbc < 8 || self.n_k_bands < 8 {
            return Err(Error::param("n_k", "need at least 8 momenta"));
        }
        if self.edge.window == 0 || !(0.0..=1.0).contains(&self.edge.min_mass) {
            return Err(Error::param("edge", "need window >= 1 and min_mass in [0, 1]"));
        }
        Ok(())
    }
}

pub struct DominantGbz {
    pub obc: SpectrumResult,
    pub pbc: PbcLoop,
    pub edges: Vec<usize>,
    pub band: DominantBand,
    /// Scan over `band.states`; arc features classified.
    pub gbz: GbzResult,
}

/// Open spectrum, edge states, dominant arc and its generalized Brillouin
/// zone with classified features.
pub fn dominant_gbz(
    params: &ModelParams,
    floquet: &FloquetSettings,
    settings: &GbzSettings,
    pipeline: &PipelineSettings,
) -> Result<DominantGbz> {
    pipeline.validate()?;
    settings.validate()?;
    let obc = spectra::realspace_floquet_spectrum(params, Boundary::Obc, floquet, pipeline.dense_cap)?;
    let pbc = PbcLoop::new(params, pipeline.n_k_pbc, floquet)?;
    let edges = spectra::detect_edge_states(&obc, &pbc, &pipeline.edge)?;
    let band = dominant_band(params, &obc.eigenvalues, &edges, floquet, pipeline.n_k_bands)?;
    let energies: Vec<C64> = band.states.iter().map(|&i| obc.eigenvalues[i]).collect();
    let mut gbz = gbz_circle_scan(params, &energies, floquet, settings)?;
    gbz.band = Some(band.pbc_band);
    // `states` starts with the arc.
    let arc: Vec<usize> = (0..band.arc.len()).collect();
    classify_features(&mut gbz, &arc);
    Ok(DominantGbz { obc, pbc, edges, band, gbz })
}

/// Radius interval of the dominant band's roots, the input of the direction
/// predicate.
pub fn radial_range(params: &ModelParams, floquet: &FloquetSettings, settings: &GbzSettings, pipeline: &PipelineSettings) -> Result<(f64, f64)> {
    Ok(dominant_gbz(params, floquet, settings, pipeline)?.gbz.radial_range)
}

/// Largest folded residual `min |eps(beta) - E|` of the points, recomputed
/// with `n_steps` slices.
pub fn verify_points(params: &ModelParams, gbz: &GbzResult, n_steps: usize) -> Result<f64> {
    let fs = FloquetSettings { n_steps, ..FloquetSettings::default() };
    let ctx = Ctx::new(params, &fs)?;
    gbz.points.par_iter().map(|p| ctx.residual(p.beta, p.energy)).try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Boundary, Flux};

    fn coarse() -> GbzSettings {
        GbzSettings { n_kappa: 25, n_k: 181, match_tol: 5e-3, ..GbzSettings::default() }
    }

    #[test]
    fn q1_lossy_gbz_is_unit_circle() {
        // eps = i gamma - 2 u cos k is reciprocal: roots beta and 1/beta
        // at every energy, so the pair sits on |beta| = 1.
        let p = ModelParams {
            flux: Flux::Rational(0, 1),
            gamma: vec![-0.5],
            v: 0.0,
            omega: 0.0,
            n_cells: 40,
            boundary: Boundary::Obc,
            ..ModelParams::reference()
        };
        let energies: Vec<C64> = (1..=40).step_by(4).map(|j| C64::new(-2.0 * (PI * j as f64 / 41.0).cos(), -0.5)).collect();
        let g = gbz_circle_scan(&p, &energies, &FloquetSettings::with_steps(20), &coarse()).unwrap();
        assert!(g.unmatched.is_empty(), "{:?}", g.unmatched);
        assert!((g.radial_range.0 - 1.0).abs() < 1e-8 && (g.radial_range.1 - 1.0).abs() < 1e-8, "{:?}", g.radial_range);
        for p in &g.points {
            let k = p.beta.arg();
            assert!((C64::new(-2.0 * k.cos(), -0.5) - p.energy).norm() < 1e-8);
        }
        assert!(matches!(g.direction(), Err(Error::Bidirectional { .. })));
    }

    #[test]
    fn hatano_nelson_like_radius() {
        // Static q = 2 chain with staggered loss is reciprocal: unit circle.
        let p = ModelParams {
            flux: Flux::Rational(1, 2),
            gamma: vec![-0.4, 0.0],
            omega: 0.0,
            n_cells: 20,
            ..ModelParams::reference()
        };
        let spec = crate::spectra::realspace_floquet_spectrum(&p, Boundary::Obc, &FloquetSettings::with_steps(10), 100).unwrap();
        let e: Vec<C64> = spec.eigenvalues.iter().step_by(5).copied().collect();
        let g = gbz_circle_scan(&p, &e, &FloquetSettings::with_steps(10), &coarse()).unwrap();
        assert!((g.radial_range.0 - 1.0).abs() < 1e-6 && (g.radial_range.1 - 1.0).abs() < 1e-6, "{:?}", g.radial_range);
    }

    #[test]
    fn empty_range_is_reported() {
        let p = ModelParams { flux: Flux::Rational(0, 1), gamma: vec![0.0], omega: 0.0, ..ModelParams::reference() };
        let far = [C64::new(0.0, 30.0)];
        assert!(matches!(
            gbz_circle_scan(&p, &far, &FloquetSettings::with_steps(4), &coarse()),
            Err(Error::EmptyGbz { .. })
        ));
        let bad = GbzSettings { kappa_min: 0.1, ..coarse() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn pair_selection() {
        let r = [C64::new(0.5, 0.0), C64::new(0.0, 0.9), C64::new(-0.905, 0.0), C64::new(2.0, 0.0)];
        let p = equal_modulus_pair(&r, 0.02).unwrap();
        assert!((p[0].norm() - 0.9).abs() < 1e-12 && (p[1].norm() - 0.905).abs() < 1e-12);
        assert!(equal_modulus_pair(&r[..1], 0.02).is_none());
    }

    #[test]
    fn features_on_a_segment() {
        // Static q = 1 chain: open spectrum is a segment, saddles at k = 0, pi.
        let p = ModelParams {
            flux: Flux::Rational(0, 1),
            gamma: vec![0.0],
            v: 0.0,
            omega: 0.0,
            n_cells: 30,
            ..ModelParams::reference()
        };
        let energies: Vec<C64> = (1..=30).map(|j| C64::new(-2.0 * (PI * j as f64 / 31.0).cos(), 0.0)).collect();
        let mut g = gbz_circle_scan(&p, &energies, &FloquetSettings::with_steps(4), &coarse()).unwrap();
        let arc: Vec<usize> = (0..energies.len()).collect();
        classify_features(&mut g, &arc);
        assert_eq!(g.features.saddles.len(), 2, "{:?}", g.features);
        let mut s: Vec<f64> = g.features.saddles.iter().map(|s| s.beta.re).collect();
        s.sort_by(f64::total_cmp);
        assert!((s[0] + 1.0).abs() < 0.02 && (s[1] - 1.0).abs() < 0.02, "{s:?}");
        assert!(g.features.cusp.is_none());
        assert!(g.features.endpoint_density_ratio.unwrap() < 1.0);
    }
}
