//! Matrix products backed by `matrixmultiply::dgemm`.

use super::Matrix;

/// `op(a) · op(b)` where `op` optionally transposes.
pub fn matmul(a: &Matrix, ta: bool, b: &Matrix, tb: bool) -> Matrix {
    let (m, k) = if ta { (a.cols(), a.rows()) } else { a.shape() };
    let (k2, n) = if tb { (b.cols(), b.rows()) } else { b.shape() };
    assert_eq!(k, k2, "matmul inner dimension");
    let mut c = Matrix::zeros(m, n);
    gemm_into(1.0, a, ta, b, tb, 0.0, &mut c);
    c
}

/// `c ← alpha · op(a) · op(b) + beta · c`
pub fn gemm_into(alpha: f64, a: &Matrix, ta: bool, b: &Matrix, tb: bool, beta: f64, c: &mut Matrix) {
    let (m, k) = if ta { (a.cols(), a.rows()) } else { a.shape() };
    let (k2, n) = if tb { (b.cols(), b.rows()) } else { b.shape() };
    assert_eq!(k, k2, "gemm inner dimension");
    assert_eq!(c.shape(), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale_in_place(beta);
        return;
    }
    let (rsa, csa) = if ta { (1, a.cols() as isize) } else { (a.cols() as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols() as isize) } else { (b.cols() as isize, 1) };
    let ldc = c.cols() as isize;
    // SAFETY: strides describe the row-major buffers of `a`, `b` and `c`, whose
    // shapes were checked above; `c` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_slice().as_ptr(),
            rsa,
            csa,
            b.as_slice().as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_slice().as_mut_ptr(),
            ldc,
            1,
        );
    }
}
