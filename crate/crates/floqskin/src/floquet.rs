//! One-period propagators, effective Floquet Hamiltonians, tracked
//! quasienergy bands and the symmetry checks of the driven chain.
//!
//! `U = prod_{j=n..1} exp(-i H(t_j) dt)` with midpoint samples `t_j`, and
//! `H_F = (i/T) log U` on the principal branch, `Re eps` in `(-pi/T, pi/T]`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Dense, C64, IM, ZERO};
use crate::model::{BlochModel, Chain, ModelParams};

/// Eigenvector bases worse than this fall back to inverse scaling and squaring.
pub const MAX_BASIS_CONDITION: f64 = 1e8;
/// Relative truncation of each slice exponential.
pub const EXPM_TOL: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FloquetSettings {
    /// Midpoint slices per period.
    pub n_steps: usize,
    /// Stroboscopic period used when `omega == 0`.
    pub static_period: f64,
}

impl Default for FloquetSettings {
    fn default() -> Self {
        FloquetSettings { n_steps: 200, static_period: 1.0 }
    }
}

impl FloquetSettings {
    pub fn with_steps(n_steps: usize) -> Self {
        FloquetSettings { n_steps, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", "must be >= 1"));
        }
        if !(self.static_period.is_finite() && self.static_period > 0.0) {
            return Err(Error::param("static_period", "must be finite and positive"));
        }
        Ok(())
    }

    pub fn period(&self, params: &ModelParams) -> f64 {
        params.period().unwrap_or(self.static_period)
    }
}

#[derive(Clone, Debug)]
pub struct PeriodPropagator {
    pub matrix: CMat,
    pub n_steps: usize,
    pub period: f64,
}

/// Time-ordered midpoint product for an arbitrary sampler `t -> H(t)`.
pub fn period_propagator<F>(mut sampler: F, period: f64, n_steps: usize) -> Result<PeriodPropagator>
where
    F: FnMut(f64) -> CMat,
{
    if n_steps == 0 {
        return Err(Error::param("n_steps", "must be >= 1"));
    }
    if !(period.is_finite() && period > 0.0) {
        return Err(Error::param("period", "must be finite and positive"));
    }
    let dt = period / n_steps as f64;
    let mut u: Option<CMat> = None;
    for j in 0..n_steps {
        let t = (j as f64 + 0.5) * dt;
        let h = sampler(t);
        if !linalg::all_finite(&h) {
            return Err(Error::Propagation { t });
        }
        let a = linalg::scaled(&h, -IM * dt);
        let m = u.get_or_insert_with(|| CMat::identity(h.nrows(), h.ncols()));
        linalg::expm_apply(&Dense(&a), m, EXPM_TOL);
    }
    Ok(PeriodPropagator { matrix: u.expect("n_steps >= 1"), n_steps, period })
}

/// Propagator of the Bloch block at generalized momentum `beta` from `t0`
/// over `n` slices of width `dt`.
pub fn bloch_slices(model: &BlochModel, beta: C64, t0: f64, dt: f64, n: usize) -> CMat {
    let q = model.q;
    if q <= SMALL_BLOCK {
        return small_slices(model, beta, t0, dt, n);
    }
    dense_slices(model, beta, t0, dt, n)
}

fn dense_slices(model: &BlochModel, beta: C64, t0: f64, dt: f64, n: usize) -> CMat {
    let q = model.q;
    let mut u = CMat::identity(q, q);
    let mut h = CMat::zeros(q, q);
    for j in 0..n {
        model.fill(beta, t0 + (j as f64 + 0.5) * dt, &mut h);
        for c in 0..q {
            h.col_as_slice_mut(c).iter_mut().for_each(|z| *z *= -IM * dt);
        }
        linalg::expm_apply(&Dense(&h), &mut u, EXPM_TOL);
    }
    u
}

const SMALL_BLOCK: usize = 8;

fn small_slices(model: &BlochModel, beta: C64, t0: f64, dt: f64, n: usize) -> CMat {
    match model.q {
        1 => fixed_slices::<1>(model, beta, t0, dt, n),
        2 => fixed_slices::<2>(model, beta, t0, dt, n),
        3 => fixed_slices::<3>(model, beta, t0, dt, n),
        4 => fixed_slices::<4>(model, beta, t0, dt, n),
        5 => fixed_slices::<5>(model, beta, t0, dt, n),
        6 => fixed_slices::<6>(model, beta, t0, dt, n),
        7 => fixed_slices::<7>(model, beta, t0, dt, n),
        _ => fixed_slices::<8>(model, beta, t0, dt, n),
    }
}

fn fixed_slices<const N: usize>(model: &BlochModel, beta: C64, t0: f64, dt: f64, n: usize) -> CMat {
    let mut flat = [C64::new(0.0, 0.0); SMALL_BLOCK * SMALL_BLOCK];
    let mut u = linalg::small::identity::<N>();
    for j in 0..n {
        model.fill_flat(beta, t0 + (j as f64 + 0.5) * dt, &mut flat[..N * N]);
        let mut a = [[C64::new(0.0, 0.0); N]; N];
        for (c, col) in a.iter_mut().enumerate() {
            for (r, z) in col.iter_mut().enumerate() {
                *z = flat[c * N + r] * (-IM * dt);
            }
        }
        u = linalg::small::matmul(&linalg::small::expm(a), &u);
    }
    CMat::from_fn(N, N, |i, j| u[j][i])
}

pub fn bloch_propagator(model: &BlochModel, beta: C64, period: f64, n_steps: usize) -> CMat {
    bloch_slices(model, beta, 0.0, period / n_steps as f64, n_steps)
}

/// Applies one full period of the real-space evolution to the columns of `x`.
pub fn chain_period_apply(chain: &Chain, x: &mut CMat, period: f64, n_steps: usize) {
    let dt = period / n_steps as f64;
    for j in 0..n_steps {
        let g = chain.slice((j as f64 + 0.5) * dt, dt);
        linalg::expm_apply(&g, x, EXPM_TOL);
    }
}

/// Full `L x L` one-period propagator of the real-space chain.
pub fn chain_propagator(params: &ModelParams, settings: &FloquetSettings) -> Result<PeriodPropagator> {
    settings.validate()?;
    let chain = Chain::new(params)?;
    let period = settings.period(params);
    let mut u = CMat::identity(chain.len, chain.len);
    chain_period_apply(&chain, &mut u, period, settings.n_steps);
    if !linalg::all_finite(&u) {
        return Err(Error::Propagation { t: period });
    }
    Ok(PeriodPropagator { matrix: u, n_steps: settings.n_steps, period })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogMethod {
    Eigen,
    InverseScaling,
}

#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub matrix: CMat,
    pub period: f64,
    /// Quasienergies on the principal branch.
    pub quasienergies: Vec<C64>,
    pub method: LogMethod,
    /// Eigenvector basis condition number of the propagator.
    pub condition: f64,
}

/// Folds `Re eps` into `(-pi/T, pi/T]`.
pub fn fold_quasienergy(e: C64, period: f64) -> C64 {
    let w = 2.0 * PI / period;
    let mut re = e.re - w * (e.re / w).round();
    if re <= -PI / period {
        re += w;
    }
    if re > PI / period {
        re -= w;
    }
    C64::new(re, e.im)
}

/// Quasienergies `(i/T) ln lambda` of propagator eigenvalues.
pub fn quasienergies_of(eigs: &[C64], period: f64) -> Vec<C64> {
    eigs.iter().map(|z| fold_quasienergy(IM * z.ln() / period, period)).collect()
}

/// `H_F = (i/T) log U` on the principal branch.
pub fn effective_hamiltonian(u: &PeriodPropagator) -> Result<EffectiveHamiltonian> {
    let period = u.period;
    let (logs, v, cond) = linalg::log_eig(&u.matrix)?;
    if cond <= MAX_BASIS_CONDITION {
        let eps: Vec<C64> = logs.iter().map(|l| fold_quasienergy(IM * l / period, period)).collect();
        let matrix = linalg::reassemble(&v, &eps);
        return Ok(EffectiveHamiltonian { matrix, period, quasienergies: eps, method: LogMethod::Eigen, condition: cond });
    }
    let l = linalg::log_inverse_scaling(&u.matrix)?;
    let matrix = linalg::scaled(&l, IM / period);
    let quasienergies = linalg::eigenvalues(&matrix)?
        .into_iter()
        .map(|e| fold_quasienergy(e, period))
        .collect();
    Ok(EffectiveHamiltonian { matrix, period, quasienergies, method: LogMethod::InverseScaling, condition: cond })
}

/// `exp(-i H_F T)`, for round-trip checks.
pub fn reexponentiate(h: &EffectiveHamiltonian) -> CMat {
    linalg::expm(&linalg::scaled(&h.matrix, -IM * h.period))
}

/// Effective Hamiltonian of the Bloch block at real momentum `k`.
pub fn bloch_floquet(params: &ModelParams, k: f64, settings: &FloquetSettings) -> Result<EffectiveHamiltonian> {
    settings.validate()?;
    let model = BlochModel::new(params)?;
    bloch_floquet_with(&model, C64::from_polar(1.0, k), settings.period(params), settings.n_steps)
        .map_err(|e| with_k(e, k))
}

pub(crate) fn bloch_floquet_with(model: &BlochModel, beta: C64, period: f64, n_steps: usize) -> Result<EffectiveHamiltonian> {
    let u = bloch_propagator(model, beta, period, n_steps);
    effective_hamiltonian(&PeriodPropagator { matrix: u, n_steps, period })
}

fn with_k(e: Error, k: f64) -> Error {
    match e {
        Error::Defective { reason, .. } => Error::Defective { k: Some(k), reason },
        other => other,
    }
}

/// `n` points spanning `(-pi, pi]`.
pub fn default_k_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| -PI + 2.0 * PI * (j + 1) as f64 / n as f64).collect()
}

#[derive(Clone, Debug)]
pub struct QuasienergyBands {
    pub k: Vec<f64>,
    /// `eps[band][ik]`, real parts unwrapped along each band.
    pub eps: Vec<Vec<C64>>,
    /// `d Re eps / dk` (cells per unit time).
    pub velocity: Vec<Vec<f64>>,
    pub period: f64,
    pub warnings: Vec<String>,
}

impl QuasienergyBands {
    pub fn n_bands(&self) -> usize {
        self.eps.len()
    }

    /// Complex `d eps / dk` of one band by the same stencil as `velocity`.
    pub fn derivative(&self, band: usize) -> Vec<C64> {
        finite_difference(&self.k, &self.eps[band])
    }

    /// `(band, k index, eps)` of the largest imaginary part.
    pub fn max_imag(&self) -> (usize, usize, C64) {
        let mut best = (0, 0, C64::new(0.0, f64::NEG_INFINITY));
        for (b, row) in self.eps.iter().enumerate() {
            for (i, e) in row.iter().enumerate() {
                if e.im > best.2.im {
                    best = (b, i, *e);
                }
            }
        }
        best
    }

    /// All quasienergies folded back to the principal window.
    pub fn folded(&self) -> Vec<C64> {
        self.eps.iter().flatten().map(|&e| fold_quasienergy(e, self.period)).collect()
    }
}

fn finite_difference<T>(k: &[f64], y: &[T]) -> Vec<T>
where
    T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let n = k.len();
    if n < 2 {
        return y.iter().map(|&v| v * 0.0).collect();
    }
    (0..n)
        .map(|i| {
            if i == 0 {
                if n >= 3 {
                    let h = k[1] - k[0];
                    (y[1] * 4.0 - y[0] * 3.0 - y[2]) * (0.5 / h)
                } else {
                    (y[1] - y[0]) * (1.0 / (k[1] - k[0]))
                }
            } else if i == n - 1 {
                if n >= 3 {
                    let h = k[n - 1] - k[n - 2];
                    (y[n - 1] * 3.0 - y[n - 2] * 4.0 + y[n - 3]) * (0.5 / h)
                } else {
                    (y[n - 1] - y[n - 2]) * (1.0 / (k[n - 1] - k[n - 2]))
                }
            } else {
                (y[i + 1] - y[i - 1]) * (1.0 / (k[i + 1] - k[i - 1]))
            }
        })
        .collect()
}

/// Quasienergy bands on `k_grid`, tracked by maximal eigenvector overlap.
///
/// The per-momentum eigendecompositions run in parallel; tracking is a
/// serial pass over them, so results do not depend on scheduling.
pub fn quasienergy_bands(params: &ModelParams, k_grid: &[f64], settings: &FloquetSettings) -> Result<QuasienergyBands> {
    settings.validate()?;
    if k_grid.is_empty() {
        return Err(Error::param("k_grid", "must not be empty"));
    }
    if k_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("k_grid", "must be strictly increasing"));
    }
    let model = BlochModel::new(params)?;
    let period = settings.period(params);
    let n_steps = settings.n_steps;
    let decomps: Vec<(Vec<C64>, CMat)> = k_grid
        .par_iter()
        .map(|&k| {
            let u = bloch_propagator(&model, C64::from_polar(1.0, k), period, n_steps);
            let (w, v) = linalg::eig(&u).map_err(|e| with_k(e, k))?;
            Ok((quasienergies_of(&w, period), v))
        })
        .collect::<Result<_>>()?;

    let q = model.q;
    let zone = 2.0 * PI / period;
    let mut warnings = Vec::new();
    let mut eps = vec![Vec::with_capacity(k_grid.len()); q];
    let (e0, v0) = &decomps[0];
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| e0[a].re.total_cmp(&e0[b].re).then(a.cmp(&b)));
    for (b, &i) in order.iter().enumerate() {
        eps[b].push(e0[i]);
    }
    let mut prev_vecs: Vec<Vec<C64>> = order.iter().map(|&i| v0.col_as_slice(i).to_vec()).collect();
    for (ik, (e, v)) in decomps.iter().enumerate().skip(1) {
        let overlap: Vec<Vec<f64>> = prev_vecs
            .iter()
            .map(|pv| {
                (0..q)
                    .map(|c| pv.iter().zip(v.col_as_slice(c)).map(|(a, b)| a.conj() * b).sum::<C64>().norm())
                    .collect()
            })
            .collect();
        for row in &overlap {
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            if q > 1 && sorted[0] - sorted[1] < 1e-6 {
                warnings.push(format!("band tracking degeneracy at k = {:.6}", k_grid[ik]));
                break;
            }
        }
        let perm = best_assignment(&overlap);
        for b in 0..q {
            let mut next = e[perm[b]];
            let last = *eps[b].last().expect("seeded");
            next.re -= zone * ((next.re - last.re) / zone).round();
            eps[b].push(next);
        }
        prev_vecs = perm.iter().map(|&c| v.col_as_slice(c).to_vec()).collect();
    }
    let velocity = eps
        .iter()
        .map(|band| finite_difference(k_grid, &band.iter().map(|e| e.re).collect::<Vec<_>>()))
        .collect();
    Ok(QuasienergyBands { k: k_grid.to_vec(), eps, velocity, period, warnings })
}

/// Assignment maximizing the summed overlap; exhaustive for small sizes,
/// greedy otherwise. Ties resolve toward the smallest index.
fn best_assignment(w: &[Vec<f64>]) -> Vec<usize> {
    let n = w.len();
    if n <= 6 {
        let mut best = (f64::NEG_INFINITY, (0..n).collect::<Vec<_>>());
        let mut perm: Vec<usize> = (0..n).collect();
        permute(&mut perm, 0, &mut |p| {
            let s: f64 = p.iter().enumerate().map(|(r, &c)| w[r][c]).sum();
            if s > best.0 + 1e-14 {
                best = (s, p.to_vec());
            }
        });
        return best.1;
    }
    let mut taken = vec![false; n];
    let mut out = vec![0; n];
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|r| (0..n).map(move |c| (r, c))).collect();
    pairs.sort_by(|a, b| w[b.0][b.1].total_cmp(&w[a.0][a.1]).then(a.cmp(b)));
    let mut done = vec![false; n];
    for (r, c) in pairs {
        if !done[r] && !taken[c] {
            out[r] = c;
            done[r] = true;
            taken[c] = true;
        }
    }
    out
}

fn permute(p: &mut Vec<usize>, i: usize, f: &mut impl FnMut(&[usize])) {
    if i == p.len() {
        f(p);
        return;
    }
    // Lexicographic order so the first maximum found has the smallest indices.
    for j in i..p.len() {
        p[i..=j].rotate_right(1);
        permute(p, i + 1, f);
        p[i..=j].rotate_left(1);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `H_F(k) = H_F(-k)^T` for two-band chains.
    Reciprocity,
    /// `V^{-1} conj(H_F(k)) V = -H_F(q pi - k)`.
    HiddenSymmetry,
    /// `{eps(k)} = {-conj(eps(q pi - k))}`.
    QuasienergyPairing,
    /// `Tr H_F(k)` independent of `k`.
    TraceIdentity,
}

#[derive(Clone, Debug)]
pub struct SymmetryReport {
    pub relation: Relation,
    pub max_deviation: f64,
    /// Companion set-level deviation (quasienergy pairing for the hidden
    /// symmetry check).
    pub spectral_deviation: Option<f64>,
    /// `(U, S, V)` at the last sample, when applicable.
    pub auxiliary: Option<(CMat, CMat, CMat)>,
}

pub fn check_q2_reciprocity(params: &ModelParams, ks: &[f64], settings: &FloquetSettings) -> Result<SymmetryReport> {
    settings.validate()?;
    let model = BlochModel::new(params)?;
    if model.q != 2 {
        return Err(Error::WrongModel(format!("reciprocity check needs q = 2, got q = {}", model.q)));
    }
    let period = settings.period(params);
    let mut dev: f64 = 0.0;
    for &k in ks {
        let a = bloch_floquet_with(&model, C64::from_polar(1.0, k), period, settings.n_steps).map_err(|e| with_k(e, k))?;
        let b = bloch_floquet_with(&model, C64::from_polar(1.0, -k), period, settings.n_steps).map_err(|e| with_k(e, -k))?;
        let bt = b.matrix.transpose().to_owned();
        dev = dev.max(linalg::max_abs_diff(&a.matrix, &bt));
    }
    Ok(SymmetryReport { relation: Relation::Reciprocity, max_deviation: dev, spectral_deviation: None, auxiliary: None })
}

/// Checks the hidden antiunitary-like symmetry and the quasienergy pairing
/// it implies. `S` is the half-period propagator at `q pi - k`, built on the
/// same midpoint grid as the full period (so `n_steps` must be even).
pub fn check_hidden_symmetry(params: &ModelParams, ks: &[f64], settings: &FloquetSettings) -> Result<SymmetryReport> {
    settings.validate()?;
    if params.omega <= 0.0 {
        return Err(Error::WrongMode("the hidden symmetry pairs t with t + T/2 and needs a drive".into()));
    }
    if settings.n_steps % 2 != 0 {
        return Err(Error::param("n_steps", "must be even for the half-period propagator"));
    }
    let model = BlochModel::new(params)?;
    let q = model.q;
    let period = settings.period(params);
    let n = settings.n_steps;
    let dt = period / n as f64;
    let parity = CMat::from_fn(q, q, |i, j| if i != j { ZERO } else if i % 2 == 0 { C64::new(1.0, 0.0) } else { C64::new(-1.0, 0.0) });
    let mut op_dev: f64 = 0.0;
    let mut set_dev: f64 = 0.0;
    let mut aux = None;
    for &k in ks {
        let kp = q as f64 * PI - k;
        let hk = bloch_floquet_with(&model, C64::from_polar(1.0, k), period, n).map_err(|e| with_k(e, k))?;
        let hkp = bloch_floquet_with(&model, C64::from_polar(1.0, kp), period, n).map_err(|e| with_k(e, kp))?;
        let s = bloch_slices(&model, C64::from_polar(1.0, kp), 0.0, dt, n / 2);
        let v = &parity * &s;
        let vi = linalg::inverse(&v);
        let conj_hk = hk.matrix.conjugate().to_owned();
        let lhs = &(&vi * &conj_hk) * &v;
        op_dev = op_dev.max(linalg::norm_max(&(&lhs + &hkp.matrix)));
        let partner: Vec<C64> = hkp.quasienergies.iter().map(|e| -e.conj()).collect();
        set_dev = set_dev.max(linalg::hausdorff(&hk.quasienergies, &partner, Some(2.0 * PI / period)));
        aux = Some((parity.clone(), s, v));
    }
    Ok(SymmetryReport {
        relation: Relation::HiddenSymmetry,
        max_deviation: op_dev,
        spectral_deviation: Some(set_dev),
        auxiliary: aux,
    })
}

/// Spread of `Tr H_F(k)` over `ks` (real part modulo the quasienergy zone).
pub fn check_trace_identity(params: &ModelParams, ks: &[f64], settings: &FloquetSettings) -> Result<SymmetryReport> {
    settings.validate()?;
    let model = BlochModel::new(params)?;
    let period = settings.period(params);
    let zone = 2.0 * PI / period;
    let traces: Vec<C64> = ks
        .par_iter()
        .map(|&k| {
            let u = bloch_propagator(&model, C64::from_polar(1.0, k), period, settings.n_steps);
            let w = linalg::eigenvalues(&u).map_err(|e| with_k(e, k))?;
            Ok(quasienergies_of(&w, period).into_iter().sum::<C64>())
        })
        .collect::<Result<_>>()?;
    let mut dev: f64 = 0.0;
    if let Some(&t0) = traces.first() {
        for t in &traces {
            let mut d = *t - t0;
            d.re -= zone * (d.re / zone).round();
            dev = dev.max(d.norm());
        }
    }
    Ok(SymmetryReport { relation: Relation::TraceIdentity, max_deviation: dev, spectral_deviation: None, auxiliary: None })
}
