//! Instantaneous Hamiltonians of the driven dissipative AAH chain.
//!
//! Conventions: hoppings are `-u`; site `n = q*m + s` (cell `m`, sublattice
//! `s`); the on-site term is `v cos(2 pi phi n + Omega t + phi0) + i gamma(n)`.
//! In momentum space `e^{ik}` multiplies the `(q-1, 0)` corner, so a Bloch
//! wave `e^{ikm}` with positive `d eps/dk` moves toward larger `n`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, Generator, C64, IM, ZERO};

/// Magnetic flux per plaquette, i.e. the spatial frequency of the potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flux {
    Rational(i64, i64),
    Real(f64),
}

impl Flux {
    pub fn value(&self) -> f64 {
        match *self {
            Flux::Rational(p, q) => p as f64 / q as f64,
            Flux::Real(x) => x,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    #[default]
    #[serde(rename = "PBC")]
    Pbc,
    #[serde(rename = "OBC")]
    Obc,
}

impl Boundary {
    pub fn as_str(&self) -> &'static str {
        match self {
            Boundary::Pbc => "PBC",
            Boundary::Obc => "OBC",
        }
    }
}

/// Physical specification of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub u: f64,
    pub v: f64,
    pub flux: Flux,
    #[serde(default)]
    pub phase_offset: f64,
    /// Drive frequency; zero means a static chain.
    pub omega: f64,
    /// Imaginary on-site potentials, repeated with period `gamma.len()`.
    pub gamma: Vec<f64>,
    /// Unit cells for rational flux, sites for irrational flux.
    pub n_cells: usize,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub impurities: Vec<(usize, f64)>,
    /// Period of the loss pattern for irrational flux. Defaults to
    /// `round(1/flux)`; must equal `gamma.len()`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dissipation_period: Option<usize>,
}

impl ModelParams {
    /// The reference chain: `q = 3`, `u = v = 1`, `Omega = 0.4`, loss
    /// `-1.2` on the first site of each cell, 100 cells, PBC.
    pub fn reference() -> Self {
        ModelParams {
            u: 1.0,
            v: 1.0,
            flux: Flux::Rational(1, 3),
            phase_offset: 0.0,
            omega: 0.4,
            gamma: vec![-1.2, 0.0, 0.0],
            n_cells: 100,
            boundary: Boundary::Pbc,
            impurities: Vec::new(),
            dissipation_period: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("u", self.u), ("v", self.v), ("phase_offset", self.phase_offset), ("omega", self.omega)] {
            if !x.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if self.omega < 0.0 {
            return Err(Error::param("omega", "must be >= 0"));
        }
        if self.n_cells == 0 {
            return Err(Error::param("n_cells", "must be >= 1"));
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::param("gamma", "entries must be finite"));
        }
        match self.flux {
            Flux::Rational(p, q) => {
                if q < 1 {
                    return Err(Error::param("flux", "denominator must be >= 1"));
                }
                if gcd(p.unsigned_abs(), q as u64) != 1 {
                    return Err(Error::param("flux", format!("{p}/{q} is not in lowest terms")));
                }
                if self.gamma.len() != q as usize {
                    return Err(Error::param("gamma", format!("expected {q} entries, got {}", self.gamma.len())));
                }
                if self.dissipation_period.is_some_and(|d| d != q as usize) {
                    return Err(Error::param("dissipation_period", "must equal q for rational flux"));
                }
            }
            Flux::Real(x) => {
                if !x.is_finite() || x <= 0.0 {
                    return Err(Error::param("flux", "irrational flux must be finite and positive"));
                }
                let d = self.loss_period();
                if d == 0 {
                    return Err(Error::param("dissipation_period", "must be >= 1"));
                }
                if self.gamma.len() != d {
                    return Err(Error::param(
                        "gamma",
                        format!("expected {d} entries (dissipation period), got {}", self.gamma.len()),
                    ));
                }
            }
        }
        let l = self.n_sites();
        for &(site, strength) in &self.impurities {
            if site >= l {
                return Err(Error::param("impurities", format!("site {site} outside [0, {l})")));
            }
            if !strength.is_finite() {
                return Err(Error::param("impurities", "strength must be finite"));
            }
        }
        Ok(())
    }

    /// Bands per cell for rational flux.
    pub fn q(&self) -> Option<usize> {
        match self.flux {
            Flux::Rational(_, q) => Some(q as usize),
            Flux::Real(_) => None,
        }
    }

    pub fn n_sites(&self) -> usize {
        match self.flux {
            Flux::Rational(_, q) => q as usize * self.n_cells,
            Flux::Real(_) => self.n_cells,
        }
    }

    /// Period of the loss pattern in sites.
    pub fn loss_period(&self) -> usize {
        match self.flux {
            Flux::Rational(_, q) => q as usize,
            Flux::Real(x) => self.dissipation_period.unwrap_or_else(|| (1.0 / x).round() as usize),
        }
    }

    /// Sites per (nominal) unit cell, used to express velocities in cells.
    pub fn cell_size(&self) -> usize {
        match self.flux {
            Flux::Rational(_, q) => q as usize,
            Flux::Real(x) => ((1.0 / x).round() as usize).max(1),
        }
    }

    /// Drive period `2 pi / Omega`, `None` for a static chain.
    pub fn period(&self) -> Option<f64> {
        (self.omega > 0.0).then(|| 2.0 * PI / self.omega)
    }

    pub fn is_hermitian(&self) -> bool {
        self.gamma.iter().all(|&g| g == 0.0)
    }

    /// Static part of the phase of site `n`.
    fn site_phase(&self, n: usize) -> f64 {
        match self.flux {
            Flux::Rational(p, q) => {
                let r = (p.rem_euclid(q) as u128 * n as u128 % q as u128) as f64;
                2.0 * PI * r / q as f64 + self.phase_offset
            }
            Flux::Real(x) => 2.0 * PI * x * n as f64 + self.phase_offset,
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Precomputed momentum-space model; `fill` writes `H(beta, t)`.
#[derive(Clone, Debug)]
pub struct BlochModel {
    pub q: usize,
    u: f64,
    v: f64,
    omega: f64,
    phases: Vec<f64>,
    gamma: Vec<f64>,
}

impl BlochModel {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let q = params.q().ok_or(Error::UnsupportedRepresentation)?;
        Ok(BlochModel {
            q,
            u: params.u,
            v: params.v,
            omega: params.omega,
            phases: (0..q).map(|s| params.site_phase(s)).collect(),
            gamma: params.gamma.clone(),
        })
    }

    pub fn fill(&self, beta: C64, t: f64, out: &mut CMat) {
        let q = self.q;
        let mut flat = vec![ZERO; q * q];
        self.fill_flat(beta, t, &mut flat);
        for j in 0..q {
            out.col_as_slice_mut(j).copy_from_slice(&flat[j * q..(j + 1) * q]);
        }
    }

    /// Column-major variant of [`fill`](Self::fill).
    pub(crate) fn fill_flat(&self, beta: C64, t: f64, out: &mut [C64]) {
        let q = self.q;
        out.fill(ZERO);
        for s in 0..q {
            out[s * q + s] = C64::new(self.v * (self.omega * t + self.phases[s]).cos(), self.gamma[s]);
        }
        let hop = C64::new(-self.u, 0.0);
        for s in 0..q.saturating_sub(1) {
            out[(s + 1) * q + s] += hop;
            out[s * q + s + 1] += hop;
        }
        out[(q - 1) * q] += hop / beta;
        out[q - 1] += hop * beta;
    }

    /// Upper bound on the 1-norm of `H(beta, t)` over all `t`.
    pub fn norm_bound(&self, beta: C64) -> f64 {
        let g = self.gamma.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let b = beta.norm().max(1.0 / beta.norm());
        self.v.abs() + g + self.u.abs() * (1.0 + b).max(2.0)
    }
}

/// `H(k, t)` for rational flux.
pub fn bloch_hamiltonian(params: &ModelParams, k: f64, t: f64) -> Result<CMat> {
    bloch_hamiltonian_beta(params, C64::from_polar(1.0, k), t)
}

/// `H(beta, t)`: the Bloch matrix with `e^{ik} -> beta`.
pub fn bloch_hamiltonian_beta(params: &ModelParams, beta: C64, t: f64) -> Result<CMat> {
    if beta == ZERO || !beta.is_finite() {
        return Err(Error::SingularContinuation);
    }
    let m = BlochModel::new(params)?;
    let mut out = CMat::zeros(m.q, m.q);
    m.fill(beta, t, &mut out);
    Ok(out)
}

/// Precomputed real-space chain. Stores the static parts of the diagonal.
#[derive(Clone, Debug)]
pub struct Chain {
    pub len: usize,
    pub periodic: bool,
    u: f64,
    v: f64,
    omega: f64,
    phases: Vec<f64>,
    /// `i gamma(n) + V_imp(n)`.
    static_diag: Vec<C64>,
}

impl Chain {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let len = params.n_sites();
        let mut static_diag: Vec<C64> = (0..len)
            .map(|n| C64::new(0.0, params.gamma[n % params.gamma.len()]))
            .collect();
        for &(site, strength) in &params.impurities {
            static_diag[site] += strength;
        }
        Ok(Chain {
            len,
            periodic: params.boundary == Boundary::Pbc,
            u: params.u,
            v: params.v,
            omega: params.omega,
            phases: (0..len).map(|n| params.site_phase(n)).collect(),
            static_diag,
        })
    }

    pub fn diagonal(&self, t: f64, out: &mut [C64]) {
        for ((o, &ph), &s) in out.iter_mut().zip(&self.phases).zip(&self.static_diag) {
            *o = s + self.v * (self.omega * t + ph).cos();
        }
    }

    pub fn dense(&self, t: f64) -> CMat {
        let l = self.len;
        let mut d = vec![ZERO; l];
        self.diagonal(t, &mut d);
        let mut h = CMat::zeros(l, l);
        let hop = C64::new(-self.u, 0.0);
        for n in 0..l {
            h[(n, n)] = d[n];
            if n + 1 < l {
                h[(n, n + 1)] += hop;
                h[(n + 1, n)] += hop;
            }
        }
        if self.periodic {
            h[(0, l - 1)] += hop;
            h[(l - 1, 0)] += hop;
        }
        h
    }

    /// Generator `-i dt H(t)` for one slice.
    pub fn slice(&self, t: f64, dt: f64) -> ChainSlice {
        let mut diag = vec![ZERO; self.len];
        self.diagonal(t, &mut diag);
        let f = -IM * dt;
        let norm1 = diag.iter().fold(0.0f64, |m, d| m.max(d.norm())) * dt + 2.0 * self.u.abs() * dt;
        ChainSlice {
            diag: diag.into_iter().map(|d| d * f).collect(),
            hop: f * -self.u,
            periodic: self.periodic,
            norm1,
        }
    }
}

/// `-i dt H` for the nearest-neighbour chain, applied without forming it.
pub struct ChainSlice {
    diag: Vec<C64>,
    hop: C64,
    periodic: bool,
    norm1: f64,
}

impl Generator for ChainSlice {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn norm1(&self) -> f64 {
        self.norm1
    }

    fn apply(&self, x: &CMat, out: &mut CMat, scale: C64) {
        let l = self.diag.len();
        let hop = self.hop * scale;
        for j in 0..x.ncols() {
            let xs = x.col_as_slice(j);
            let os = out.col_as_slice_mut(j);
            for n in 0..l {
                let mut acc = self.diag[n] * scale * xs[n];
                if n > 0 {
                    acc += hop * xs[n - 1];
                }
                if n + 1 < l {
                    acc += hop * xs[n + 1];
                }
                os[n] = acc;
            }
            if self.periodic {
                os[0] += hop * xs[l - 1];
                os[l - 1] += hop * xs[0];
            }
        }
    }
}

/// Dense `L x L` instantaneous Hamiltonian (rational or irrational flux).
pub fn real_space_hamiltonian(params: &ModelParams, t: f64) -> Result<CMat> {
    Ok(Chain::new(params)?.dense(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, hausdorff, max_abs_diff};

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-14
    }

    #[test]
    fn reference_bloch_matrix_at_origin() {
        let p = ModelParams::reference();
        let h = bloch_hamiltonian(&p, 0.0, 0.0).unwrap();
        assert!(close(h[(0, 0)], C64::new(1.0, -1.2)));
        assert!(close(h[(1, 1)], C64::new((2.0 * PI / 3.0).cos(), 0.0)));
        assert!(close(h[(2, 2)], C64::new((4.0 * PI / 3.0).cos(), 0.0)));
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)] {
            assert!(close(h[(i, j)], C64::new(-1.0, 0.0)), "({i},{j})");
        }
    }

    #[test]
    fn single_band_closed_form() {
        let p = ModelParams {
            v: 0.0,
            flux: Flux::Rational(0, 1),
            gamma: vec![-0.5],
            ..ModelParams::reference()
        };
        let h = bloch_hamiltonian(&p, PI / 3.0, 1.234).unwrap();
        assert!((h[(0, 0)] - C64::new(-1.0, -0.5)).norm() < 1e-14);
    }

    #[test]
    fn beta_on_unit_circle_and_scaling() {
        let p = ModelParams::reference();
        let a = bloch_hamiltonian(&p, 0.7, 0.3).unwrap();
        let b = bloch_hamiltonian_beta(&p, C64::from_polar(1.0, 0.7), 0.3).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-15);
        let c = bloch_hamiltonian_beta(&p, C64::new(0.8, 0.0), 0.0).unwrap();
        assert!(close(c[(0, 2)], C64::new(-1.25, 0.0)));
        assert!(close(c[(2, 0)], C64::new(-0.8, 0.0)));
        assert!(matches!(
            bloch_hamiltonian_beta(&p, ZERO, 0.0),
            Err(Error::SingularContinuation)
        ));
    }

    #[test]
    fn determinant_is_analytic_in_beta() {
        // Cauchy-Riemann: d/dbeta along real and imaginary directions agree.
        let p = ModelParams::reference();
        let b0 = C64::from_polar(0.9, PI / 4.0);
        let det = |b: C64| crate::linalg::determinant(&bloch_hamiltonian_beta(&p, b, 0.37).unwrap());
        let h = 1e-6;
        let dx = (det(b0 + h) - det(b0 - h)) / (2.0 * h);
        let dy = (det(b0 + IM * h) - det(b0 - IM * h)) / (2.0 * h * IM);
        assert!((dx - dy).norm() < 1e-7 * dx.norm().max(1.0));
    }

    #[test]
    fn irrational_flux_has_no_bloch_form() {
        let p = ModelParams {
            flux: Flux::Real(0.3),
            ..ModelParams::reference()
        };
        assert!(matches!(bloch_hamiltonian(&p, 0.0, 0.0), Err(Error::UnsupportedRepresentation)));
    }

    #[test]
    fn obc_loss_free_is_real_symmetric() {
        let p = ModelParams {
            gamma: vec![0.0; 3],
            n_cells: 5,
            boundary: Boundary::Obc,
            ..ModelParams::reference()
        };
        let h = real_space_hamiltonian(&p, 0.77).unwrap();
        for i in 0..15 {
            for j in 0..15 {
                assert_eq!(h[(i, j)].im, 0.0);
                assert_eq!(h[(i, j)], h[(j, i)]);
            }
        }
    }

    #[test]
    fn pbc_is_block_circulant() {
        let p = ModelParams { n_cells: 4, ..ModelParams::reference() };
        let e_real = eigenvalues(&real_space_hamiltonian(&p, 0.0).unwrap()).unwrap();
        let mut e_bloch = Vec::new();
        for k in [0.0, PI / 2.0, -PI / 2.0, PI] {
            e_bloch.extend(eigenvalues(&bloch_hamiltonian(&p, k, 0.0).unwrap()).unwrap());
        }
        assert!(hausdorff(&e_real, &e_bloch, None) < 1e-10);
    }

    #[test]
    fn impurity_adds_to_diagonal() {
        let mut p = ModelParams::reference();
        let clean = real_space_hamiltonian(&p, 0.0).unwrap();
        p.impurities.push((33, 0.1));
        let dirty = real_space_hamiltonian(&p, 0.0).unwrap();
        assert!(((dirty[(33, 33)] - clean[(33, 33)]) - C64::new(0.1, 0.0)).norm() < 1e-15);
        p.impurities[0].0 = 300;
        assert!(p.validate().is_err());
    }

    #[test]
    fn validation_rejects_bad_shapes() {
        let mut p = ModelParams::reference();
        p.gamma.pop();
        assert!(p.validate().is_err());
        let p = ModelParams { flux: Flux::Rational(2, 6), gamma: vec![0.0; 6], ..ModelParams::reference() };
        assert!(p.validate().is_err());
        let p = ModelParams { n_cells: 0, ..ModelParams::reference() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn irrational_loss_pattern_uses_its_own_period() {
        let p = ModelParams {
            flux: Flux::Real(1.0 / (2.0 + PI / 1000.0)),
            gamma: vec![-1.2, 0.0],
            n_cells: 41,
            ..ModelParams::reference()
        };
        p.validate().unwrap();
        assert_eq!(p.loss_period(), 2);
        let h = real_space_hamiltonian(&p, 0.0).unwrap();
        for n in 0..41 {
            let want = if n % 2 == 0 { -1.2 } else { 0.0 };
            assert_eq!(h[(n, n)].im, want);
        }
    }

    #[test]
    fn json_round_trip_and_field_names() {
        let p = ModelParams::reference();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains(r#""flux":{"rational":[1,3]}"#), "{s}");
        assert!(s.contains(r#""boundary":"PBC""#));
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let r: ModelParams = serde_json::from_str(
            r#"{"u":1,"v":1,"flux":{"real":0.3},"omega":0.4,"gamma":[0,0,0],"n_cells":30}"#,
        )
        .unwrap();
        assert_eq!(r.flux, Flux::Real(0.3));
        assert!(serde_json::from_str::<ModelParams>(r#"{"u":1,"bogus":2}"#).is_err());
    }
}
