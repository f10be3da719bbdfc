//! Dense helpers shared by the operator and spectral modules.
//!
//! Complex products are routed through real `gemm` calls on the real and
//! imaginary parts, which is several times faster than nalgebra's generic
//! complex kernel at the sizes used here.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type RMat = DMatrix<f64>;

pub fn split(m: &CMat) -> (RMat, RMat) {
    (m.map(|z| z.re), m.map(|z| z.im))
}

pub fn join(re: &RMat, im: &RMat) -> CMat {
    re.zip_map(im, Complex64::new)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn is_real(m: &CMat) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

/// `a * b` for complex matrices.
pub fn cmul(a: &CMat, b: &CMat) -> CMat {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    join(&re, &im)
}

/// `a * b` with real `a`.
pub fn rcmul(a: &RMat, b: &CMat) -> CMat {
    let (br, bi) = split(b);
    join(&(a * br), &(a * bi))
}

/// `a * b` with real `b`.
pub fn crmul(a: &CMat, b: &RMat) -> CMat {
    let (ar, ai) = split(a);
    join(&(ar * b), &(ai * b))
}

/// `basis^T m basis` for a real basis.
pub fn compress(m: &CMat, basis: &RMat) -> CMat {
    let (mr, mi) = split(m);
    let bt = basis.transpose();
    let re = &bt * (mr * basis);
    if mi.iter().all(|&x| x == 0.0) {
        return to_complex(&re);
    }
    let im = &bt * (mi * basis);
    join(&re, &im)
}

/// `basis m basis^T` for a real basis.
pub fn expand(m: &CMat, basis: &RMat) -> CMat {
    let (mr, mi) = split(m);
    let bt = basis.transpose();
    let re = basis * (mr * &bt);
    let im = basis * (mi * &bt);
    join(&re, &im)
}

pub fn real_matvec(a: &RMat, v: &DVector<Complex64>) -> DVector<Complex64> {
    let re = a * v.map(|z| z.re);
    let im = a * v.map(|z| z.im);
    re.zip_map(&im, Complex64::new)
}

pub fn real_tr_matvec(a: &RMat, v: &DVector<Complex64>) -> DVector<Complex64> {
    let re = a.tr_mul(&v.map(|z| z.re));
    let im = a.tr_mul(&v.map(|z| z.im));
    re.zip_map(&im, Complex64::new)
}

/// Half-bandwidth of a matrix: the largest `|i - j|` with a nonzero entry.
pub fn bandwidth(m: &CMat) -> usize {
    let mut bw = 0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] != Complex64::new(0.0, 0.0) {
                bw = bw.max(i.abs_diff(j));
            }
        }
    }
    bw
}

/// `a * b` for a banded `a` with half-bandwidth `bw`, in `O(n² bw)`.
pub fn banded_mul(a: &CMat, bw: usize, b: &CMat) -> CMat {
    let n = a.nrows();
    let mut out = CMat::zeros(n, b.ncols());
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        let hi = (i + bw).min(a.ncols() - 1);
        for k in lo..=hi {
            let aik = a[(i, k)];
            if aik == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..b.ncols() {
                out[(i, j)] += aik * b[(k, j)];
            }
        }
    }
    out
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_real(m: &RMat) -> f64 {
    m.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// `max |M - M^dagger|`.
pub fn hermiticity_residual(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(M + M^dagger) / 2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    let mut out = m.clone();
    let n = m.nrows();
    for j in 0..n {
        for i in 0..=j {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    out
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMat) -> DVector<f64> {
    let mut values = if is_real(m) {
        m.map(|z| z.re).symmetric_eigenvalues()
    } else {
        m.clone().symmetric_eigenvalues()
    };
    values.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
    values
}

/// Deterministic, non-degenerate starting vector.
fn start_vector(n: usize) -> DVector<Complex64> {
    let v = DVector::from_fn(n, |j, _| {
        let s = ((j as f64 + 1.0) * 0.618_033_988_749_895).fract();
        Complex64::new(1.0 + 0.5 * s, 0.25 * (1.0 - s))
    });
    let norm = v.norm();
    v / Complex64::new(norm, 0.0)
}

/// Largest eigenvalue of a Hermitian positive semidefinite operator given by
/// its action, by Lanczos with full reorthogonalization.
pub fn lanczos_max_eigenvalue(
    n: usize,
    apply: impl Fn(&DVector<Complex64>) -> DVector<Complex64>,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let max_steps = n.min(160);
    let mut basis: Vec<DVector<Complex64>> = Vec::with_capacity(max_steps);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut q = start_vector(n);
    let mut previous = f64::NAN;
    for step in 0..max_steps {
        let mut w = apply(&q);
        let alpha = q.dotc(&w).re;
        basis.push(q.clone());
        alphas.push(alpha);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dotc(&w);
                w.axpy(-c, b, Complex64::new(1.0, 0.0));
            }
        }
        let beta = w.norm();
        let estimate = tridiagonal_max(&alphas, &betas);
        let converged = step >= 4
            && (estimate - previous).abs() <= 1e-13 * estimate.abs().max(f64::MIN_POSITIVE);
        if converged || beta <= 1e-14 * estimate.abs().max(1e-300) || step + 1 == max_steps {
            return estimate;
        }
        previous = estimate;
        betas.push(beta);
        q = w / Complex64::new(beta, 0.0);
    }
    previous
}

fn tridiagonal_max(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    let t = RMat::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j {
            betas[i]
        } else if j + 1 == i {
            betas[j]
        } else {
            0.0
        }
    });
    t.symmetric_eigenvalues().max()
}

/// Spectral norm of an operator given by its action and its adjoint action.
pub fn operator_norm(
    n: usize,
    apply: impl Fn(&DVector<Complex64>) -> DVector<Complex64>,
    apply_adjoint: impl Fn(&DVector<Complex64>) -> DVector<Complex64>,
) -> f64 {
    lanczos_max_eigenvalue(n, |v| apply_adjoint(&apply(v))).max(0.0).sqrt()
}

/// Spectral norm of a dense complex matrix.
pub fn spectral_norm(m: &CMat) -> f64 {
    operator_norm(m.ncols(), |v| m * v, |v| m.ad_mul(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(n: usize, m: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, m, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn split_product_matches_generic_product() {
        let a = random_complex(7, 5, 1);
        let b = random_complex(5, 6, 2);
        let diff = cmul(&a, &b) - &a * &b;
        assert!(max_abs(&diff) < 1e-13);
    }

    #[test]
    fn banded_product_matches_dense() {
        let n = 10;
        let mut a = random_complex(n, n, 21);
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) > 1 {
                    a[(i, j)] = Complex64::new(0.0, 0.0);
                }
            }
        }
        assert_eq!(bandwidth(&a), 1);
        let b = random_complex(n, 4, 22);
        assert!(max_abs(&(banded_mul(&a, 1, &b) - &a * &b)) < 1e-13);
    }

    #[test]
    fn spectral_norm_agrees_with_svd() {
        for seed in 0..4 {
            let m = random_complex(24, 24, seed);
            let svd = m.clone().svd(false, false);
            let expected = svd.singular_values.max();
            let got = spectral_norm(&m);
            assert!((got - expected).abs() <= 1e-9 * expected, "{got} vs {expected}");
        }
    }

    #[test]
    fn spectral_norm_handles_degenerate_top() {
        let m = CMat::from_diagonal(&DVector::from_vec(vec![
            Complex64::new(3.0, 0.0),
            Complex64::new(0.0, 3.0),
            Complex64::new(1.0, 0.0),
        ]));
        assert!((spectral_norm(&m) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn hermitian_part_is_hermitian() {
        let m = random_complex(9, 9, 5);
        let h = hermitian_part(&m);
        assert_eq!(hermiticity_residual(&h), 0.0);
        let values = hermitian_eigenvalues(&h);
        assert!(values.as_slice().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn compress_and_expand_are_adjoint_sandwiches() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = RMat::from_fn(6, 3, |_, _| rng.gen_range(-1.0..1.0));
        let m = random_complex(6, 6, 3);
        let direct = basis.transpose().map(|x| Complex64::new(x, 0.0)) * &m * basis.map(|x| Complex64::new(x, 0.0));
        assert!(max_abs(&(compress(&m, &basis) - direct)) < 1e-13);
        let small = random_complex(3, 3, 4);
        let direct = basis.map(|x| Complex64::new(x, 0.0)) * &small * basis.transpose().map(|x| Complex64::new(x, 0.0));
        assert!(max_abs(&(expand(&small, &basis) - direct)) < 1e-13);
    }
}
