//! Dense complex linear algebra on small Hermitian matrices.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. The Hermitian
//! eigensolver is a cyclic complex Jacobi sweep, which is plenty for the
//! 2x2..10x10 matrices that show up in the games, and still usable for the
//! few-hundred-dimensional real Jacobians.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Square complex matrix with `A == A^H` maintained on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMat);

impl HermitianMatrix {
    pub fn zeros(n: usize) -> Self {
        Self(CMat::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMat::identity(n, n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self(CMat::identity(n, n) * Complex64::new(s, 0.0))
    }

    /// Symmetrizes a square matrix. Panics on non-square input; use
    /// [`hermitize`] for a fallible version.
    pub fn hermitized(m: CMat) -> Self {
        assert!(m.is_square(), "hermitized: matrix is {}x{}", m.nrows(), m.ncols());
        let mut h = m.adjoint();
        h += &m;
        h *= Complex64::new(0.5, 0.0);
        for i in 0..h.nrows() {
            h[(i, i)].im = 0.0;
        }
        Self(h)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * Complex64::new(s, 0.0))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self(&self.0 + &other.0 * Complex64::new(s, 0.0))
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.0)
    }

    pub fn eigen(&self) -> EigenDecomposition {
        jacobi_eigen(self)
    }
}

impl Serialize for HermitianMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        serde_cmat::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for HermitianMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let m = serde_cmat::deserialize(d)?;
        hermitize(&m).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter writing a complex matrix as nested rows of `[re, im]`.
pub mod serde_cmat {
    use super::CMat;
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        Ok(CMat::from_fn(nrows, ncols, |i, j| {
            Complex64::new(rows[i][j][0], rows[i][j][1])
        }))
    }
}

/// Nested `Vec<Vec<CMat>>` with the same entry encoding.
pub mod serde_cmat_grid {
    use super::CMat;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "super::serde_cmat")] CMat);

    pub fn serialize<S: Serializer>(g: &[Vec<CMat>], s: S) -> Result<S::Ok, S::Error> {
        let w: Vec<Vec<Wrapped>> = g
            .iter()
            .map(|row| row.iter().map(|m| Wrapped(m.clone())).collect())
            .collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<CMat>>, D::Error> {
        let w: Vec<Vec<Wrapped>> = Vec::deserialize(d)?;
        Ok(w.into_iter()
            .map(|row| row.into_iter().map(|m| m.0).collect())
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Ascending.
    pub values: Vec<f64>,
    /// Columns are the matching unit eigenvectors.
    pub vectors: CMat,
}

impl EigenDecomposition {
    /// `V diag(d) V^H`.
    pub fn reassemble(&self, d: &[f64]) -> HermitianMatrix {
        let n = self.vectors.nrows();
        let mut vd = self.vectors.clone();
        for j in 0..n {
            let s = Complex64::new(d[j], 0.0);
            for i in 0..n {
                vd[(i, j)] *= s;
            }
        }
        HermitianMatrix::hermitized(&vd * self.vectors.adjoint())
    }
}

pub fn hermitize(m: &CMat) -> Result<HermitianMatrix> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(HermitianMatrix::hermitized(m.clone()))
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Real inner product `Re tr(A^H B)`.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// `A X A^H`.
pub fn sandwich(a: &CMat, x: &CMat) -> CMat {
    a * x * a.adjoint()
}

/// `A^H X A`.
pub fn congruence(a: &CMat, x: &CMat) -> CMat {
    a.adjoint() * x * a
}

fn off_diagonal_norm(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

/// Cyclic complex Jacobi. Sweeps until the off-diagonal Frobenius mass is
/// below `1e-13 * ||A||_F` (or exactly zero).
pub fn jacobi_eigen(h: &HermitianMatrix) -> EigenDecomposition {
    let n = h.dim();
    let mut a = h.as_matrix().clone();
    let mut v = CMat::identity(n, n);
    let scale = frobenius(&a);
    let threshold = 1e-13 * scale;
    for _sweep in 0..100 {
        let off = off_diagonal_norm(&a);
        if off <= threshold || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let g = a[(p, q)];
                let gabs = g.norm();
                if gabs <= f64::MIN_POSITIVE || gabs <= 1e-300 * scale {
                    continue;
                }
                let phase = g / gabs;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let zeta = (aqq - app) / (2.0 * gabs);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // V = diag(1, conj(phase)) * [[c, s], [-s, c]] on the (p, q) plane.
                let vpp = Complex64::new(c, 0.0);
                let vpq = Complex64::new(s, 0.0);
                let vqp = -phase.conj() * s;
                let vqq = phase.conj() * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * vpp + akq * vqp;
                    a[(k, q)] = akp * vpq + akq * vqq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = vpp.conj() * apk + vqp.conj() * aqk;
                    a[(q, k)] = vpq.conj() * apk + vqq.conj() * aqk;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)].im = 0.0;
                a[(q, q)].im = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * vpp + vkq * vqp;
                    v[(k, q)] = vkp * vpq + vkq * vqq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMat::from_fn(n, n, |i, j| v[(i, order[j])]);
    EigenDecomposition { values, vectors }
}

pub fn min_eig_herm(h: &HermitianMatrix) -> f64 {
    h.eigen().values.first().copied().unwrap_or(0.0)
}

/// Smallest eigenvalue of the symmetric part of a real square matrix.
pub fn min_eig_sym_part(j: &RMat) -> f64 {
    min_eig_herm(&real_to_hermitian(&((j + j.transpose()) * 0.5)))
}

pub fn real_to_hermitian(m: &RMat) -> HermitianMatrix {
    HermitianMatrix::hermitized(m.map(|x| Complex64::new(x, 0.0)))
}

/// Largest singular value, as `sqrt(lambda_max(A^H A))`.
pub fn spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = if a.nrows() < a.ncols() {
        a * a.adjoint()
    } else {
        a.adjoint() * a
    };
    let vals = jacobi_eigen(&HermitianMatrix::hermitized(gram)).values;
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

pub fn spectral_norm_real(a: &RMat) -> f64 {
    spectral_norm(&a.map(|x| Complex64::new(x, 0.0)))
}

/// Lower Cholesky factor, or `None` when a pivot is not strictly positive.
fn cholesky_lower(a: &CMat) -> Option<CMat> {
    let n = a.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn cholesky(a: &HermitianMatrix) -> Result<CMat> {
    cholesky_lower(a.as_matrix()).ok_or_else(|| Error::NotPositiveDefinite {
        min_eig: min_eig_herm(a),
    })
}

/// `ln det A` for Hermitian positive definite `A`.
pub fn logdet(a: &HermitianMatrix) -> Result<f64> {
    let l = cholesky(a)?;
    Ok(2.0 * (0..a.dim()).map(|i| l[(i, i)].re.ln()).sum::<f64>())
}

/// Inverse of a Hermitian positive definite matrix.
pub fn inverse_pd(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let l = cholesky(a)?;
    let n = a.dim();
    // Invert the triangular factor column by column, then form L^-H L^-1.
    let mut linv = CMat::zeros(n, n);
    for c in 0..n {
        linv[(c, c)] = Complex64::new(1.0, 0.0) / l[(c, c)];
        for i in (c + 1)..n {
            let mut s = ZERO;
            for k in c..i {
                s -= l[(i, k)] * linv[(k, c)];
            }
            linv[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(HermitianMatrix::hermitized(linv.adjoint() * linv))
}

/// Nearest PSD matrix in Frobenius norm: clip negative eigenvalues.
pub fn psd_project(a: &HermitianMatrix) -> HermitianMatrix {
    let e = a.eigen();
    let d: Vec<f64> = e.values.iter().map(|&x| x.max(0.0)).collect();
    e.reassemble(&d)
}

/// Euclidean projection of `v` onto `{x >= 0, sum(x) <= cap}`.
pub fn project_capped_simplex(v: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|&x| x.max(0.0)).collect();
    if cap <= 0.0 {
        return vec![0.0; v.len()];
    }
    if clipped.iter().sum::<f64>() <= cap {
        return clipped;
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - cap) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Joint Frobenius projection of `(sigma, w)` onto
/// `{sigma >= 0, w >= 0, tr(sigma) + tr(w) <= power}`.
pub fn project_feasible(
    sigma: &HermitianMatrix,
    w: &HermitianMatrix,
    power: f64,
) -> Result<(HermitianMatrix, HermitianMatrix)> {
    if !(power >= 0.0) {
        return Err(Error::Numerical(format!("negative power budget {power}")));
    }
    if sigma.dim() != w.dim() {
        return Err(Error::Dimension(format!(
            "projection pair has dims {} and {}",
            sigma.dim(),
            w.dim()
        )));
    }
    let es = sigma.eigen();
    let ew = w.eigen();
    let ns = es.values.len();
    let mut all = es.values.clone();
    all.extend_from_slice(&ew.values);
    let proj = project_capped_simplex(&all, power);
    Ok((es.reassemble(&proj[..ns]), ew.reassemble(&proj[ns..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_herm(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
        let m = CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        HermitianMatrix::hermitized(m)
    }

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> HermitianMatrix {
        let m = CMat::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        HermitianMatrix::hermitized(&m * m.adjoint() + CMat::identity(n, n) * Complex64::new(0.1, 0.0))
    }

    #[test]
    fn jacobi_matches_nalgebra_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..8 {
            let h = random_herm(&mut rng, n);
            let ours = h.eigen();
            let mut theirs: Vec<f64> = h.as_matrix().clone().symmetric_eigenvalues().iter().cloned().collect();
            theirs.sort_by(f64::total_cmp);
            for (a, b) in ours.values.iter().zip(&theirs) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            let back = ours.reassemble(&ours.values);
            assert!(frobenius(&(back.as_matrix() - h.as_matrix())) < 1e-12);
            let vhv = ours.vectors.adjoint() * &ours.vectors;
            assert!(frobenius(&(vhv - CMat::identity(n, n))) < 1e-12);
        }
    }

    #[test]
    fn jacobi_handles_diagonal_and_zero() {
        let z = HermitianMatrix::zeros(3);
        assert_eq!(z.eigen().values, vec![0.0; 3]);
        let d = HermitianMatrix::hermitized(CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ])));
        assert_eq!(d.eigen().values, vec![-1.0, 3.0]);
    }

    #[test]
    fn logdet_of_identity_is_zero() {
        assert_eq!(logdet(&HermitianMatrix::identity(4)).unwrap(), 0.0);
    }

    #[test]
    fn logdet_matches_eigenvalue_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..7 {
            let a = random_pd(&mut rng, n);
            let via_eig: f64 = a.eigen().values.iter().map(|x| x.ln()).sum();
            assert!((logdet(&a).unwrap() - via_eig).abs() < 1e-10);
        }
    }

    #[test]
    fn logdet_rejects_indefinite() {
        let a = HermitianMatrix::scaled_identity(2, -1.0);
        match logdet(&a) {
            Err(Error::NotPositiveDefinite { min_eig }) => assert!((min_eig + 1.0).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverse_pd_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_pd(&mut rng, 4);
        let inv = inverse_pd(&a).unwrap();
        let prod = a.as_matrix() * inv.as_matrix();
        assert!(frobenius(&(prod - CMat::identity(4, 4))) < 1e-10);
    }

    #[test]
    fn hermitize_rejects_non_square() {
        assert!(matches!(hermitize(&CMat::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn psd_project_leaves_psd_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_pd(&mut rng, 3);
        let p = psd_project(&a);
        assert!(frobenius(&(p.as_matrix() - a.as_matrix())) < 1e-12);
    }

    #[test]
    fn capped_simplex_examples() {
        assert_eq!(project_capped_simplex(&[0.5, -1.0], 2.0), vec![0.5, 0.0]);
        let p = project_capped_simplex(&[3.0, 1.0], 2.0);
        assert!((p[0] - 2.0).abs() < 1e-15 && p[1] == 0.0);
        let p = project_capped_simplex(&[1.0, 1.0, 1.0], 1.5);
        for x in p {
            assert!((x - 0.5).abs() < 1e-15);
        }
        assert_eq!(project_capped_simplex(&[1.0, 2.0], 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn projection_of_zero_power_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (s, w) = project_feasible(&random_herm(&mut rng, 3), &random_herm(&mut rng, 3), 0.0).unwrap();
        assert!(s.frobenius_norm() < 1e-14 && w.frobenius_norm() < 1e-14);
    }

    #[test]
    fn projection_rejects_bad_input() {
        let i = HermitianMatrix::identity(2);
        assert!(project_feasible(&i, &i, -1.0).is_err());
        assert!(project_feasible(&i, &HermitianMatrix::identity(3), 1.0).is_err());
    }

    #[test]
    fn spectral_norm_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (r, c) in [(2, 3), (3, 2), (4, 4), (1, 5)] {
            let a = CMat::from_fn(r, c, |_, _| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let svd = a.clone().svd(false, false);
            let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            assert!((spectral_norm(&a) - top).abs() < 1e-10);
        }
    }
}
