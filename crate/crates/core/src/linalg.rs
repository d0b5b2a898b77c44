//! Dense complex linear-algebra helpers shared by the whole crate.
//!
//! Everything operates on `nalgebra::DMatrix<Complex<f64>>`. Register sizes
//! are at most 2^7 = 128, so dense algorithms are always appropriate; clarity
//! and exactness win over asymptotic cleverness here.
//!
//! The matrix functions are the only nontrivial numerics in this module:
//!
//! - [`expm_hermitian`] — exact exponential of (−i·s·H) for Hermitian `H`
//!   via eigendecomposition; used for all piecewise-constant propagators.
//! - [`expm`] — scaling-and-squaring with a diagonal Padé approximant for
//!   general (non-Hermitian) matrices; used by the Liouville-space
//!   validation path.
//! - [`logm_real`] — principal logarithm of a real matrix via inverse
//!   scaling-and-squaring (Denman–Beavers square roots) and a Padé/Mercator
//!   core; used for error-generator extraction. The principal branch is
//!   well-defined only when no eigenvalue lies on the closed negative real
//!   axis; callers are told when eigenvalues come near it.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

/// Complex double — the scalar type for all quantum objects in this crate.
pub type C64 = Complex<f64>;

/// Complex dynamic matrix.
pub type CMat = DMatrix<C64>;

/// Complex dynamic vector.
pub type CVec = DVector<C64>;

/// i as a `C64`.
pub const IM: C64 = C64::new(0.0, 1.0);

/// 1 as a `C64`.
pub const ONE: C64 = C64::new(1.0, 0.0);

/// 0 as a `C64`.
pub const ZERO: C64 = C64::new(0.0, 0.0);

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Kronecker product of a list of factors, left to right (first factor is
/// most significant).
pub fn kron_all(factors: &[CMat]) -> CMat {
    assert!(!factors.is_empty(), "kron_all needs at least one factor");
    let mut out = factors[0].clone();
    for f in &factors[1..] {
        out = out.kronecker(f);
    }
    out
}

/// Conjugate transpose.
pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

/// 2×2 identity.
pub fn id2() -> CMat {
    CMat::identity(2, 2)
}

/// n×n identity.
pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Pauli X.
pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

/// Pauli Y.
pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, -IM, IM, ZERO])
}

/// Pauli Z.
pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Single-qubit Pauli by index 0..=3 → I, X, Y, Z.
pub fn pauli(i: usize) -> CMat {
    match i {
        0 => id2(),
        1 => pauli_x(),
        2 => pauli_y(),
        3 => pauli_z(),
        _ => panic!("pauli index {i} out of range"),
    }
}

/// n-qubit Pauli string from per-qubit indices (index 0 = most significant).
pub fn pauli_string(idx: &[usize]) -> CMat {
    let factors: Vec<CMat> = idx.iter().map(|&i| pauli(i)).collect();
    kron_all(&factors)
}

/// Trace.
pub fn trace(a: &CMat) -> C64 {
    a.trace()
}

/// Frobenius norm.
pub fn frobenius_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Operator (spectral) norm: largest singular value.
///
/// Computed as sqrt of the largest eigenvalue of A†A, which is Hermitian
/// positive semidefinite — avoids relying on complex SVD support.
pub fn operator_norm(a: &CMat) -> f64 {
    let ata = a.adjoint() * a;
    let eig = hermitian_eigenvalues(&ata);
    eig.iter().fold(0.0_f64, |m, &x| m.max(x.max(0.0))).sqrt()
}

/// Largest absolute entry.
pub fn max_abs_entry(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// Hermiticity defect `max |A − A†|` (elementwise).
pub fn hermiticity_defect(a: &CMat) -> f64 {
    max_abs_entry(&(a - a.adjoint()))
}

/// Eigenvalues of a Hermitian matrix, ascending. The input is symmetrized
/// first so that callers may pass matrices Hermitian only up to rounding.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let (vals, _) = hermitian_eig(a);
    vals
}

/// Full eigendecomposition of a Hermitian matrix: `(eigenvalues, V)` with
/// `A = V · diag(λ) · V†`, eigenvalues ascending, `V` unitary.
pub fn hermitian_eig(a: &CMat) -> (Vec<f64>, CMat) {
    let sym = (a + a.adjoint()).scale(0.5);
    let se = sym.symmetric_eigen();
    // nalgebra returns unordered eigenpairs; sort ascending for stable tests.
    let n = se.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].partial_cmp(&se.eigenvalues[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut v = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        v.set_column(col, &se.eigenvectors.column(i));
    }
    (vals, v)
}

/// Exact propagator `exp(−i · scale · H)` for Hermitian `H`.
///
/// `scale` carries the 2π·t factor, so `H` stays in linear-frequency units.
pub fn expm_hermitian(h: &CMat, scale: f64) -> CMat {
    let (vals, v) = hermitian_eig(h);
    let phases = CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&w| (-IM * (scale * w)).exp()),
    );
    &v * CMat::from_diagonal(&phases) * v.adjoint()
}

/// General matrix exponential via scaling-and-squaring with a (6,6) Padé
/// approximant. Adequate for the ≤ 256×256 superoperators used in
/// validation; accuracy ~1e−13 for well-scaled inputs.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm = a.iter().map(|z| z.norm()).fold(0.0_f64, f64::max) * n as f64;
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let x = a.scale(1.0 / 2f64.powi(s as i32));

    // (m,m) diagonal Padé: exp(x) ≈ q(x)^{-1} p(x) with
    // c_0 = 1, c_j = c_{j-1} · (m − j + 1) / ((2m − j + 1) · j).
    const M: usize = 8;
    let mut c = [0.0_f64; M + 1];
    c[0] = 1.0;
    for j in 1..=M {
        c[j] = c[j - 1] * (M - j + 1) as f64 / (((2 * M - j + 1) * j) as f64);
    }
    let mut term = eye(n);
    let mut p = term.scale(c[0]);
    let mut q = term.scale(c[0]);
    for (k, &ck) in c.iter().enumerate().skip(1) {
        term = &term * &x;
        p += term.scale(ck);
        if k % 2 == 0 {
            q += term.scale(ck);
        } else {
            q -= term.scale(ck);
        }
    }
    let mut e = q
        .lu()
        .solve(&p)
        .expect("expm: Padé denominator is singular");
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// Result of a principal-matrix-logarithm computation.
pub struct LogmResult {
    /// The principal logarithm.
    pub log: DMatrix<f64>,
    /// Smallest distance of any eigenvalue of the input to the closed
    /// negative real axis, as a fraction of its modulus. Near zero means the
    /// principal branch is ill-conditioned / ambiguous.
    pub negative_axis_margin: f64,
}

/// Principal logarithm of a real square matrix with no eigenvalue on the
/// closed negative real axis.
///
/// Inverse scaling-and-squaring: repeated Denman–Beavers square roots bring
/// the matrix within `‖X − I‖ < 0.25`, a Mercator/Padé series computes
/// log(I + E), and the roots are undone by doubling.
pub fn logm_real(a: &DMatrix<f64>) -> Result<LogmResult, String> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "logm needs a square matrix");

    // Branch-margin diagnostic from the eigenvalues of the (real) input.
    let margin = negative_axis_margin(a);
    if margin == 0.0 {
        return Err("matrix has an eigenvalue on the closed negative real axis; \
                    principal logarithm undefined"
            .to_string());
    }

    let id = DMatrix::<f64>::identity(n, n);
    let mut x = a.clone();
    let mut k = 0u32;
    while (&x - &id).norm() > 0.25 {
        // Denman–Beavers iteration for the principal square root.
        let (mut y, mut z) = (x.clone(), id.clone());
        for _ in 0..60 {
            let y_inv = y
                .clone()
                .try_inverse()
                .ok_or_else(|| "singular iterate in matrix square root".to_string())?;
            let z_inv = z
                .clone()
                .try_inverse()
                .ok_or_else(|| "singular iterate in matrix square root".to_string())?;
            let y_next = (&y + &z_inv).scale(0.5);
            let z_next = (&z + &y_inv).scale(0.5);
            let delta = (&y_next - &y).norm();
            y = y_next;
            z = z_next;
            if delta < 1e-14 * y.norm() {
                break;
            }
        }
        x = y;
        k += 1;
        if k > 60 {
            return Err("matrix square-root sequence failed to contract".to_string());
        }
    }

    // log(I + E) by the alternating Mercator series; ‖E‖ < 0.25 ensures
    // fast geometric convergence.
    let e = &x - &id;
    let mut term = e.clone();
    let mut log = e.clone();
    for m in 2..60 {
        term = &term * &e;
        let add = term.scale(if m % 2 == 0 { -1.0 / m as f64 } else { 1.0 / m as f64 });
        log += &add;
        if add.norm() < 1e-16 * log.norm().max(1e-300) {
            break;
        }
    }
    log *= 2f64.powi(k as i32);
    Ok(LogmResult {
        log,
        negative_axis_margin: margin,
    })
}

/// Distance of the eigenvalue closest to the closed negative real axis,
/// normalized by its modulus (0 = on the axis, 1 = farthest possible).
fn negative_axis_margin(a: &DMatrix<f64>) -> f64 {
    let eig = a.complex_eigenvalues();
    let mut margin = f64::INFINITY;
    for lam in eig.iter() {
        let r = lam.norm();
        if r == 0.0 {
            return 0.0;
        }
        // Distance to the ray {x ≤ 0, y = 0} relative to |λ|: for Re λ < 0
        // it is |Im λ|/|λ|; otherwise |λ| dominates the distance to the ray
        // through the origin, normalized to 1.
        let d = if lam.re < 0.0 { lam.im.abs() / r } else { 1.0 };
        margin = margin.min(d);
    }
    margin
}

/// Complex eigenvalues of a real matrix (convenience wrapper).
pub fn complex_eigenvalues_real(a: &DMatrix<f64>) -> Vec<C64> {
    a.complex_eigenvalues().iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pauli_algebra() {
        let (x, y, z) = (pauli_x(), pauli_y(), pauli_z());
        // XY = iZ and cyclic permutations.
        assert!(max_abs_entry(&(&x * &y - z.scale_im())) < 1e-15);
        assert!(max_abs_entry(&(&x * &x - eye(2))) < 1e-15);
        assert!(max_abs_entry(&(&y * &y - eye(2))) < 1e-15);
        assert!(max_abs_entry(&(&z * &z - eye(2))) < 1e-15);
    }

    trait ScaleIm {
        fn scale_im(&self) -> CMat;
    }
    impl ScaleIm for CMat {
        fn scale_im(&self) -> CMat {
            self.map(|v| IM * v)
        }
    }

    #[test]
    fn hermitian_eig_reconstructs() {
        let h = CMat::from_row_slice(
            2,
            2,
            &[C64::new(1.0, 0.0), C64::new(0.3, -0.4), C64::new(0.3, 0.4), C64::new(-2.0, 0.0)],
        );
        let (vals, v) = hermitian_eig(&h);
        let lam = CVec::from_iterator(2, vals.iter().map(|&w| C64::new(w, 0.0)));
        let rec = &v * CMat::from_diagonal(&lam) * v.adjoint();
        assert!(max_abs_entry(&(rec - h)) < 1e-12);
    }

    #[test]
    fn expm_hermitian_rotation() {
        // exp(−i (θ/2) σx) applied to |0⟩ gives cos(θ/2)|0⟩ − i sin(θ/2)|1⟩.
        let theta = 0.7_f64;
        let u = expm_hermitian(&pauli_x(), theta / 2.0);
        assert_abs_diff_eq!(u[(0, 0)].re, (theta / 2.0).cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(u[(1, 0)].im, -(theta / 2.0).sin(), epsilon = 1e-14);
        // Unitarity.
        assert!(max_abs_entry(&(u.adjoint() * &u - eye(2))) < 1e-13);
    }

    #[test]
    fn expm_matches_hermitian_path() {
        let h = pauli_y().scale(1.3) + pauli_z().scale(-0.4);
        let direct = expm(&h.map(|v| -IM * v));
        let viaeig = expm_hermitian(&h, 1.0);
        assert!(max_abs_entry(&(direct - viaeig)) < 1e-12);
    }

    #[test]
    fn logm_inverts_exp_small() {
        // Real 4×4 with known log: exp(L) then logm recovers L.
        let l = DMatrix::<f64>::from_row_slice(
            2,
            2,
            &[-0.02, 0.015, -0.01, -0.03],
        );
        let e = {
            let lc = l.map(|v| C64::new(v, 0.0));
            expm(&lc).map(|z| z.re)
        };
        let r = logm_real(&e).expect("principal log exists");
        assert!((r.log - l).norm() < 1e-12);
        assert!(r.negative_axis_margin > 0.9);
    }

    #[test]
    fn logm_rejects_negative_eigenvalue() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(logm_real(&m).is_err());
    }

    #[test]
    fn operator_norm_of_projector() {
        let p = CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ZERO]);
        assert_abs_diff_eq!(operator_norm(&p), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(operator_norm(&p.scale(2.5)), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn kron_dimensions_and_values() {
        let a = pauli_z();
        let b = pauli_x();
        let k = kron(&a, &b);
        assert_eq!(k.nrows(), 4);
        // (Z ⊗ X)[2,3] = Z[1,1]·X[0,1] = −1.
        assert_abs_diff_eq!(k[(2, 3)].re, -1.0, epsilon = 1e-15);
    }
}
