//! Dense kernels over contiguous slices. The reductions keep eight partial
//! sums so they vectorize without reassociation flags.

use ndarray::{Array2, ArrayView2};

use super::Scalar;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += *x * *y;
    }
    s
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `y = W x` for a row-major `W` of shape `rows × x.len()`.
pub fn gemv<T: Scalar>(w: &Array2<T>, x: &[T], y: &mut [T]) {
    let cols = w.ncols();
    let data = w.as_slice().expect("standard layout");
    for (yi, row) in y.iter_mut().zip(data.chunks_exact(cols)) {
        *yi = dot(row, x);
    }
}

/// `y += Wᵀ x` for a row-major `W` of shape `x.len() × y.len()`.
pub fn gemv_t_acc<T: Scalar>(w: &Array2<T>, x: &[T], y: &mut [T]) {
    let cols = w.ncols();
    let data = w.as_slice().expect("standard layout");
    for (xi, row) in x.iter().zip(data.chunks_exact(cols)) {
        if *xi != T::zero() {
            axpy(*xi, row, y);
        }
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// In-place softmax; returns the log of the normalizer.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
    max + sum.ln()
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// `a += b` for matrices of equal shape.
pub fn add_assign<T: Scalar>(a: &mut Array2<T>, b: ArrayView2<T>) {
    a.zip_mut_with(&b, |x, y| *x += *y);
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..21).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn gemv_pair() {
        let w = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        let mut y = [0.0; 2];
        gemv(&w, &[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, [-2.0, -2.0]);
        let mut z = [1.0; 3];
        gemv_t_acc(&w, &[1.0, -1.0], &mut z);
        assert_eq!(z, [-2.0, -2.0, -2.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut r = [1000.0f32, 1001.0, 999.0];
        let lse = softmax_in_place(&mut r);
        assert!((r.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(lse.is_finite());
        assert_eq!(argmax(&r), 1);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}
