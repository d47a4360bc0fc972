//! Dense complex kernels: matrix exponentials (full and action form),
//! principal logarithms and a few norms.
//!
//! Matrices are `faer::Mat<C64>`, column-major. The propagators never form
//! `exp(A)` for the real-space chain; they apply the truncated Taylor series
//! of a tridiagonal generator directly to the running product.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const IM: C64 = C64::new(0.0, 1.0);

/// Unit roundoff used as the default truncation tolerance of series.
const SERIES_TOL: f64 = 1.1e-16;
/// Taylor terms are always truncated well before this.
const MAX_TERMS: usize = 60;

/// Linear operator `X -> A X` acting column-wise on a dense block.
pub trait Generator {
    fn dim(&self) -> usize;
    /// Induced 1-norm of `A` (an upper bound is fine).
    fn norm1(&self) -> f64;
    /// `out = scale * A x`. `out` and `x` have identical shape.
    fn apply(&self, x: &CMat, out: &mut CMat, scale: C64);
}

/// Dense generator backed by an explicit matrix.
pub struct Dense<'a>(pub &'a CMat);

impl Generator for Dense<'_> {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn norm1(&self) -> f64 {
        norm1(self.0)
    }

    fn apply(&self, x: &CMat, out: &mut CMat, scale: C64) {
        let a = self.0;
        let n = a.nrows();
        if n > 24 {
            faer::linalg::matmul::matmul(
                out.as_mut(),
                faer::Accum::Replace,
                a.as_ref(),
                x.as_ref(),
                scale,
                faer::Par::Seq,
            );
            return;
        }
        for j in 0..x.ncols() {
            let xj = x.col_as_slice(j);
            let oj = out.col_as_slice_mut(j);
            oj.fill(ZERO);
            for (l, &xl) in xj.iter().enumerate() {
                if xl == ZERO {
                    continue;
                }
                let f = xl * scale;
                for (o, &al) in oj.iter_mut().zip(a.col_as_slice(l)) {
                    *o += al * f;
                }
            }
        }
    }
}

/// Computes `exp(A) x` in place by a truncated Taylor series with
/// substepping so that each substep has `||A||/s <= 1`.
///
/// Terms are summed until two consecutive ones fall below `tol` relative to
/// the partial sum (max-abs norm).
pub fn expm_apply<G: Generator>(g: &G, x: &mut CMat, tol: f64) {
    let nrm = g.norm1();
    if nrm == 0.0 {
        return;
    }
    let s = nrm.ceil().max(1.0) as usize;
    let tol = tol.max(SERIES_TOL);
    let mut term = Mat::<C64>::zeros(x.nrows(), x.ncols());
    let mut next = Mat::<C64>::zeros(x.nrows(), x.ncols());
    for _ in 0..s {
        term.copy_from(&*x);
        let mut small = 0;
        for j in 1..=MAX_TERMS {
            let scale = C64::new(1.0 / (j * s) as f64, 0.0);
            g.apply(&term, &mut next, scale);
            std::mem::swap(&mut term, &mut next);
            add_assign(x, &term);
            if norm_max(&term) <= tol * norm_max(x) {
                small += 1;
                if small == 2 {
                    break;
                }
            } else {
                small = 0;
            }
        }
    }
}

/// Fixed-size kernels for tiny matrices, stored as `a[col][row]`.
pub(crate) mod small {
    use super::{C64, ZERO};

    pub type Sq<const N: usize> = [[C64; N]; N];

    pub fn identity<const N: usize>() -> Sq<N> {
        let mut e = [[ZERO; N]; N];
        for (i, c) in e.iter_mut().enumerate() {
            c[i] = C64::new(1.0, 0.0);
        }
        e
    }

    #[inline(always)]
    pub fn matmul<const N: usize>(a: &Sq<N>, b: &Sq<N>) -> Sq<N> {
        let mut c = [[ZERO; N]; N];
        for j in 0..N {
            for l in 0..N {
                let blj = b[j][l];
                for i in 0..N {
                    c[j][i] += a[l][i] * blj;
                }
            }
        }
        c
    }

    /// `exp(a)`: degree-16 Taylor polynomial by Paterson-Stockmeyer after
    /// scaling to `||a||_1 <= 0.8` (truncation error below unit roundoff),
    /// then squaring.
    pub fn expm<const N: usize>(mut a: Sq<N>) -> Sq<N> {
        let nrm = a.iter().map(|c| c.iter().map(|z| z.l1_norm()).sum::<f64>()).fold(0.0, f64::max);
        let sq = if nrm > 0.8 { (nrm / 0.8).log2().ceil() as i32 } else { 0 };
        let f = 0.5f64.powi(sq);
        a.iter_mut().flatten().for_each(|z| *z *= f);
        let a2 = matmul(&a, &a);
        let a3 = matmul(&a2, &a);
        let a4 = matmul(&a3, &a);
        let mut coef = [1.0f64; 17];
        for k in 1..17 {
            coef[k] = coef[k - 1] / k as f64;
        }
        // B_i = sum_r c_{4i+r} A^r, r = 0..3
        let block = |i: usize| -> Sq<N> {
            let mut b = [[ZERO; N]; N];
            for c in 0..N {
                for r in 0..N {
                    b[c][r] = a[c][r] * coef[4 * i + 1] + a2[c][r] * coef[4 * i + 2] + a3[c][r] * coef[4 * i + 3];
                }
                b[c][c] += coef[4 * i];
            }
            b
        };
        let mut e = identity::<N>();
        e.iter_mut().flatten().for_each(|z| *z *= coef[16]);
        for i in (0..4).rev() {
            let mut t = matmul(&a4, &e);
            let b = block(i);
            for (x, y) in t.iter_mut().flatten().zip(b.iter().flatten()) {
                *x += *y;
            }
            e = t;
        }
        for _ in 0..sq {
            e = matmul(&e, &e);
        }
        e
    }
}

/// Dense matrix exponential by scaling and squaring with a truncated Taylor
/// kernel (relative accuracy close to unit roundoff for moderate norms).
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let nrm = norm1(a);
    let squarings = if nrm > 0.5 {
        (nrm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(squarings);
    let b = scaled(a, C64::new(scale, 0.0));
    let mut e = CMat::identity(n, n);
    expm_apply(&Dense(&b), &mut e, SERIES_TOL);
    for _ in 0..squarings {
        e = &e * &e;
    }
    e
}

/// Eigendecomposition `A = V diag(w) V^{-1}` with unit-norm columns.
pub fn eig(a: &CMat) -> Result<(Vec<C64>, CMat)> {
    let dec = a.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let w: Vec<C64> = dec.S().column_vector().iter().copied().collect();
    let mut v = dec.U().to_owned();
    normalize_columns(&mut v);
    Ok((w, v))
}

pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>> {
    a.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

pub fn inverse(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

pub fn determinant(a: &CMat) -> C64 {
    a.determinant()
}

/// Condition number of an eigenvector basis in the Frobenius norm,
/// `||V||_F ||V^{-1}||_F`; infinite for a singular basis.
pub fn basis_condition(v: &CMat) -> f64 {
    let vi = inverse(v);
    let c = v.norm_l2() * vi.norm_l2();
    if c.is_finite() {
        c
    } else {
        f64::INFINITY
    }
}

/// Principal logarithm via the eigendecomposition. Returns the log of each
/// eigenvalue, the basis and the basis condition number.
pub fn log_eig(u: &CMat) -> Result<(Vec<C64>, CMat, f64)> {
    let (w, v) = eig(u)?;
    let cond = basis_condition(&v);
    Ok((w.iter().map(|z| z.ln()).collect(), v, cond))
}

/// `V diag(d) V^{-1}`.
pub fn reassemble(v: &CMat, d: &[C64]) -> CMat {
    let n = v.nrows();
    let vd = CMat::from_fn(n, n, |i, j| v[(i, j)] * d[j]);
    let vi = inverse(v);
    &vd * &vi
}

/// Principal logarithm by inverse scaling and squaring: Denman-Beavers
/// square roots until `||A^{1/2^s} - I||_1 < 1/4`, then the Mercator series.
pub fn log_inverse_scaling(u: &CMat) -> Result<CMat> {
    let n = u.nrows();
    let id = CMat::identity(n, n);
    let mut a = u.clone();
    let mut s = 0;
    while norm1(&(&a - &id)) >= 0.25 {
        a = sqrtm_db(&a)?;
        s += 1;
        if s > 60 {
            return Err(Error::Defective {
                k: None,
                reason: "square-root iteration did not approach the identity".into(),
            });
        }
    }
    let x = &a - &id;
    let mut acc = x.clone();
    let mut pow = x.clone();
    for j in 2..=400 {
        pow = &pow * &x;
        let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
        let t = scaled(&pow, C64::new(sign / j as f64, 0.0));
        acc += &t;
        if norm_max(&t) <= SERIES_TOL * norm_max(&acc).max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let out = scaled(&acc, C64::new(2f64.powi(s), 0.0));
    if !all_finite(&out) {
        return Err(Error::Defective {
            k: None,
            reason: "non-finite logarithm".into(),
        });
    }
    Ok(out)
}

fn sqrtm_db(a: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = CMat::identity(n, n);
    for _ in 0..100 {
        let yi = inverse(&y);
        let zi = inverse(&z);
        let y1 = scaled(&(&y + &zi), C64::new(0.5, 0.0));
        let z1 = scaled(&(&z + &yi), C64::new(0.5, 0.0));
        let delta = norm1(&(&y1 - &y));
        y = y1;
        z = z1;
        if !all_finite(&y) {
            break;
        }
        if delta <= 1e-14 * norm1(&y) {
            return Ok(y);
        }
    }
    Err(Error::Defective {
        k: None,
        reason: "Denman-Beavers square root did not converge".into(),
    })
}

pub fn scaled(a: &CMat, s: C64) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

fn add_assign(x: &mut CMat, y: &CMat) {
    for j in 0..x.ncols() {
        for (a, &b) in x.col_as_slice_mut(j).iter_mut().zip(y.col_as_slice(j)) {
            *a += b;
        }
    }
}

pub fn normalize_columns(v: &mut CMat) {
    for j in 0..v.ncols() {
        let col = v.col_as_slice_mut(j);
        let n = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if n > 0.0 {
            col.iter_mut().for_each(|z| *z /= n);
        }
    }
}

/// Induced 1-norm (max column sum).
pub fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.col_as_slice(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn norm_max(a: &CMat) -> f64 {
    (0..a.ncols())
        .flat_map(|j| a.col_as_slice(j).iter().map(|z| z.norm()))
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    norm_max(&(a - b))
}

pub fn all_finite(a: &CMat) -> bool {
    (0..a.ncols()).all(|j| a.col_as_slice(j).iter().all(|z| z.re.is_finite() && z.im.is_finite()))
}

/// Symmetric Hausdorff distance between two finite point sets in the
/// complex plane. With `re_period = Some(p)` real parts are compared modulo
/// `p` (quasienergy zone).
pub fn hausdorff(a: &[C64], b: &[C64], re_period: Option<f64>) -> f64 {
    let d = |x: C64, y: C64| {
        let mut dr = x.re - y.re;
        if let Some(p) = re_period {
            dr -= p * (dr / p).round();
        }
        dr.hypot(x.im - y.im)
    };
    let one_way = |a: &[C64], b: &[C64]| {
        a.iter()
            .map(|&x| b.iter().map(|&y| d(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    one_way(a, b).max(one_way(b, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_mat(n: usize, seed: u64, amp: f64) -> CMat {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 2.0 * amp
        };
        CMat::from_fn(n, n, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn expm_of_diagonal() {
        let a = CMat::from_fn(3, 3, |i, j| if i == j { C64::new(i as f64, -0.3 * i as f64) } else { ZERO });
        let e = expm(&a);
        for i in 0..3 {
            assert!((e[(i, i)] - a[(i, i)].exp()).norm() < 1e-13 * a[(i, i)].exp().norm());
        }
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn expm_of_nilpotent_is_finite_series() {
        let mut a = CMat::zeros(3, 3);
        a[(0, 1)] = C64::new(2.0, 0.0);
        a[(1, 2)] = C64::new(0.0, 3.0);
        let e = expm(&a);
        // I + A + A^2/2
        assert!((e[(0, 2)] - C64::new(0.0, 3.0)).norm() < 1e-14);
        assert!((e[(0, 1)] - C64::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn expm_large_norm_matches_eig() {
        let a = rand_mat(4, 7, 3.0);
        let e = expm(&a);
        let (w, v) = eig(&a).unwrap();
        let r = reassemble(&v, &w.iter().map(|z| z.exp()).collect::<Vec<_>>());
        assert!(max_abs_diff(&e, &r) < 1e-10 * norm_max(&e));
    }

    #[test]
    fn expm_apply_matches_expm() {
        let a = rand_mat(5, 3, 1.7);
        let mut x = rand_mat(5, 11, 1.0);
        let want = &expm(&a) * &x;
        expm_apply(&Dense(&a), &mut x, 0.0);
        assert!(max_abs_diff(&want, &x) < 1e-12 * norm_max(&want));
    }

    #[test]
    fn log_routes_agree() {
        let a = scaled(&rand_mat(4, 5, 0.4), IM);
        let u = expm(&a);
        let (l, v, cond) = log_eig(&u).unwrap();
        assert!(cond < 1e3);
        let via_eig = reassemble(&v, &l);
        let via_iss = log_inverse_scaling(&u).unwrap();
        assert!(max_abs_diff(&via_eig, &a) < 1e-11);
        assert!(max_abs_diff(&via_iss, &a) < 1e-11);
    }

    #[test]
    fn inverse_scaling_log_handles_jordan_block() {
        // exp of a Jordan block: the eigenvector basis is singular.
        let mut a = CMat::zeros(2, 2);
        a[(0, 0)] = C64::new(0.1, 0.2);
        a[(1, 1)] = C64::new(0.1, 0.2);
        a[(0, 1)] = ONE;
        let u = expm(&a);
        let l = log_inverse_scaling(&u).unwrap();
        assert!(max_abs_diff(&l, &a) < 1e-11);
    }

    #[test]
    fn hausdorff_basics() {
        let a = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let b = [C64::new(0.0, 0.1)];
        assert!((hausdorff(&a, &b, None) - (1.0f64 + 0.01).sqrt()).abs() < 1e-15);
        let c = [C64::new(0.99, 0.0)];
        let d = [C64::new(-0.99, 0.0)];
        assert!(hausdorff(&c, &d, Some(2.0)) < 0.0200001);
    }
}
