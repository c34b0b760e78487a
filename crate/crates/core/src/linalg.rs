//! Dense kernels shared by the Fock-space code.
//!
//! Complex products are split into four real products so that `f32`/`f64`
//! matrices reach nalgebra's blocked real GEMM.

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::scalar::{cplx, Real};

pub(crate) fn split<T: Real>(a: &DMatrix<Complex<T>>) -> (DMatrix<T>, DMatrix<T>) {
    (a.map(|z| z.re), a.map(|z| z.im))
}

pub(crate) fn join<T: Real>(re: &DMatrix<T>, im: &DMatrix<T>) -> DMatrix<Complex<T>> {
    re.zip_map(im, |a, b| cplx(a, b))
}

fn is_real<T: Real>(a: &DMatrix<Complex<T>>) -> bool {
    a.iter().all(|z| z.im == T::zero())
}

/// `a * b`.
pub(crate) fn cmatmul<T: Real>(a: &DMatrix<Complex<T>>, b: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    let a_real = ai.iter().all(|&x| x == T::zero());
    let b_real = bi.iter().all(|&x| x == T::zero());
    match (a_real, b_real) {
        (true, true) => (&ar * &br).map(|x| cplx(x, T::zero())),
        (true, false) => join(&(&ar * &br), &(&ar * &bi)),
        (false, true) => join(&(&ar * &br), &(&ai * &br)),
        (false, false) => join(&(&ar * &br - &ai * &bi), &(&ar * &bi + &ai * &br)),
    }
}

/// Eigenvalues and unitary eigenvectors of a Hermitian matrix, with a real
/// symmetric fast path.
pub(crate) fn hermitian_eigen<T: Real>(h: DMatrix<Complex<T>>) -> (Vec<T>, DMatrix<Complex<T>>) {
    if is_real(&h) {
        let eig = SymmetricEigen::new(h.map(|z| z.re));
        let vecs = eig.eigenvectors.map(|x| cplx(x, T::zero()));
        return (eig.eigenvalues.iter().copied().collect(), vecs);
    }
    let eig = SymmetricEigen::new(h);
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

/// `exp(G)` for the real antisymmetric tridiagonal `G` with
/// `G[k, k+1] = -G[k+1, k] = upper[k]`.
///
/// With `P = diag(i^k)`, `P^dag G P = i J` for the real symmetric `J` sharing
/// the off-diagonal, so `exp(G) = P V e^{i Lambda} V^T P^dag` and only a real
/// symmetric eigenproblem is solved. The result is real orthogonal.
pub(crate) fn exp_antisymmetric_tridiagonal<T: Real>(upper: &[T]) -> DMatrix<T> {
    let n = upper.len() + 1;
    let mut j = DMatrix::zeros(n, n);
    for (k, &u) in upper.iter().enumerate() {
        j[(k, k + 1)] = u;
        j[(k + 1, k)] = u;
    }
    let eig = SymmetricEigen::new(j);
    let v = eig.eigenvectors;
    let cos_v = scale_columns(&v, eig.eigenvalues.iter().map(|&l| l.cos()));
    let sin_v = scale_columns(&v, eig.eigenvalues.iter().map(|&l| l.sin()));
    let vt = v.transpose();
    let c = cos_v * &vt;
    let s = sin_v * &vt;
    // entry = Re(i^{m-n} (C + i S))
    DMatrix::from_fn(n, n, |m, k| match (m + 4 * n - k) % 4 {
        0 => c[(m, k)],
        1 => -s[(m, k)],
        2 => -c[(m, k)],
        _ => s[(m, k)],
    })
}

fn scale_columns<T: Real>(v: &DMatrix<T>, factors: impl Iterator<Item = T>) -> DMatrix<T> {
    let mut out = v.clone();
    for (j, f) in factors.enumerate() {
        let mut col = out.column_mut(j);
        col *= f;
    }
    out
}
