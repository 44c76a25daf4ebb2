use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::ops::{gemv, gemv_t_acc, sigmoid};
use super::Scalar;

/// Single-layer GRU. Gate blocks are laid out `[reset | update | candidate]`.
///
/// ```text
/// r = σ(x W_x[r] + b_x[r] + W_h[r] h + b_h[r])
/// z = σ(x W_x[z] + b_x[z] + W_h[z] h + b_h[z])
/// n = tanh(x W_x[n] + b_x[n] + r ⊙ (W_h[n] h + b_h[n]))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams<T> {
    /// `input × 3H`
    pub w_x: Array2<T>,
    /// `3H × H`
    pub w_h: Array2<T>,
    pub b_x: Array1<T>,
    pub b_h: Array1<T>,
}

/// Activations kept for the backward pass.
pub(crate) struct GruTrace<T> {
    pub x: Array2<T>,
    pub h0: Array1<T>,
    pub r: Array2<T>,
    pub z: Array2<T>,
    pub n: Array2<T>,
    /// `W_h[n] h + b_h[n]` before the reset gate is applied.
    pub hn: Array2<T>,
    pub out: Array2<T>,
}

impl<T: Scalar> GruParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_x: Array2::zeros((input, 3 * hidden)),
            w_h: Array2::zeros((3 * hidden, hidden)),
            b_x: Array1::zeros(3 * hidden),
            b_h: Array1::zeros(3 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input(&self) -> usize {
        self.w_x.nrows()
    }

    /// One recurrence step given the precomputed input projection `gx`
    /// (`x W_x + b_x`). Writes the new state into `h_out`.
    fn cell(&self, gx: &[T], h: &[T], gh: &mut [T], h_out: &mut [T], cache: Option<CellCache<'_, T>>) {
        let hs = self.hidden();
        gemv(&self.w_h, h, gh);
        let bh = self.b_h.as_slice().expect("contiguous");
        for (g, b) in gh.iter_mut().zip(bh) {
            *g += *b;
        }
        let mut cache = cache;
        for j in 0..hs {
            let r = sigmoid(gx[j] + gh[j]);
            let z = sigmoid(gx[hs + j] + gh[hs + j]);
            let hn = gh[2 * hs + j];
            let n = (gx[2 * hs + j] + r * hn).tanh();
            h_out[j] = (T::one() - z) * n + z * h[j];
            if let Some(c) = cache.as_mut() {
                c.r[j] = r;
                c.z[j] = z;
                c.n[j] = n;
                c.hn[j] = hn;
            }
        }
    }

    /// Input projection for a single input vector.
    pub fn project_input(&self, x: &[T]) -> Vec<T> {
        let mut gx = self.b_x.to_vec();
        gemv_t_acc(&self.w_x, x, &mut gx);
        gx
    }

    /// Advances the state by one input vector.
    pub fn step(&self, x: &[T], h: &[T]) -> Vec<T> {
        let gx = self.project_input(x);
        let mut gh = vec![T::zero(); 3 * self.hidden()];
        let mut out = vec![T::zero(); self.hidden()];
        self.cell(&gx, h, &mut gh, &mut out, None);
        out
    }

    /// Runs the sequence `x` (rows are time steps) from `h0`.
    pub(crate) fn forward(&self, x: Array2<T>, h0: ArrayView1<T>) -> GruTrace<T> {
        let len = x.nrows();
        let hs = self.hidden();
        let gx = x.dot(&self.w_x) + &self.b_x;
        let mut tr = GruTrace {
            h0: h0.to_owned(),
            r: Array2::zeros((len, hs)),
            z: Array2::zeros((len, hs)),
            n: Array2::zeros((len, hs)),
            hn: Array2::zeros((len, hs)),
            out: Array2::zeros((len, hs)),
            x,
        };
        let mut gh = vec![T::zero(); 3 * hs];
        let mut h = h0.to_vec();
        for t in 0..len {
            let gx_t = gx.row(t);
            let gx_t = gx_t.as_slice().expect("contiguous");
            let mut next = vec![T::zero(); hs];
            {
                let cache = CellCache {
                    r: tr.r.row_mut(t).into_slice().expect("contiguous"),
                    z: tr.z.row_mut(t).into_slice().expect("contiguous"),
                    n: tr.n.row_mut(t).into_slice().expect("contiguous"),
                    hn: tr.hn.row_mut(t).into_slice().expect("contiguous"),
                };
                self.cell(gx_t, &h, &mut gh, &mut next, Some(cache));
            }
            tr.out.row_mut(t).assign(&ArrayView1::from(&next[..]));
            h = next;
        }
        tr
    }

    /// Backpropagates `d_out` (gradient w.r.t. every output state) through
    /// the sequence. Accumulates parameter gradients into `grads` and
    /// returns the gradients w.r.t. the inputs and the initial state.
    pub(crate) fn backward(&self, tr: &GruTrace<T>, d_out: ArrayView2<T>, grads: &mut GruParams<T>) -> (Array2<T>, Array1<T>) {
        let len = tr.out.nrows();
        let hs = self.hidden();
        let mut d_gx = Array2::<T>::zeros((len, 3 * hs));
        let mut d_gh = Array2::<T>::zeros((len, 3 * hs));
        let mut dh = vec![T::zero(); hs];
        for t in (0..len).rev() {
            let h_prev = if t == 0 { tr.h0.view() } else { tr.out.row(t - 1) };
            let (r, z, n, hn) = (tr.r.row(t), tr.z.row(t), tr.n.row(t), tr.hn.row(t));
            let d_o = d_out.row(t);
            let mut gxr = d_gx.row_mut(t);
            let gxr = gxr.as_slice_mut().expect("contiguous");
            let mut ghr = d_gh.row_mut(t);
            let ghr = ghr.as_slice_mut().expect("contiguous");
            let mut dh_prev = vec![T::zero(); hs];
            for j in 0..hs {
                let g = dh[j] + d_o[j];
                let dn = g * (T::one() - z[j]);
                let dz = g * (h_prev[j] - n[j]);
                dh_prev[j] = g * z[j];
                let dn_pre = dn * (T::one() - n[j] * n[j]);
                let dr = dn_pre * hn[j];
                let dr_pre = dr * r[j] * (T::one() - r[j]);
                let dz_pre = dz * z[j] * (T::one() - z[j]);
                gxr[j] = dr_pre;
                gxr[hs + j] = dz_pre;
                gxr[2 * hs + j] = dn_pre;
                ghr[j] = dr_pre;
                ghr[hs + j] = dz_pre;
                ghr[2 * hs + j] = dn_pre * r[j];
            }
            gemv_t_acc(&self.w_h, ghr, &mut dh_prev);
            dh = dh_prev;
        }
        // Previous states as a matrix: [h0; out[0..len-1]].
        let mut h_prev = Array2::<T>::zeros((len, hs));
        if len > 0 {
            h_prev.row_mut(0).assign(&tr.h0);
            h_prev.slice_mut(s![1.., ..]).assign(&tr.out.slice(s![..len - 1, ..]));
        }
        grads.w_x += &tr.x.t().dot(&d_gx);
        grads.b_x += &d_gx.sum_axis(Axis(0));
        grads.w_h += &d_gh.t().dot(&h_prev);
        grads.b_h += &d_gh.sum_axis(Axis(0));
        let dx = d_gx.dot(&self.w_x.t());
        (dx, Array1::from(dh))
    }
}

struct CellCache<'a, T> {
    r: &'a mut [T],
    z: &'a mut [T],
    n: &'a mut [T],
    hn: &'a mut [T],
}

/// Reference cell used by tests: straightforward per-element evaluation.
#[cfg(test)]
pub(crate) fn naive_step<T: Scalar>(p: &GruParams<T>, x: &[T], h: &[T]) -> Vec<T> {
    use super::ops::dot;
    let hs = p.hidden();
    let col = |w: &Array2<T>, j: usize| w.column(j).to_vec();
    let row = |w: &Array2<T>, j: usize| w.row(j).to_vec();
    (0..hs)
        .map(|j| {
            let a = |g: usize| dot(x, &col(&p.w_x, g * hs + j)) + p.b_x[g * hs + j];
            let b = |g: usize| dot(h, &row(&p.w_h, g * hs + j)) + p.b_h[g * hs + j];
            let r = sigmoid(a(0) + b(0));
            let z = sigmoid(a(1) + b(1));
            let n = (a(2) + r * b(2)).tanh();
            (T::one() - z) * n + z * h[j]
        })
        .collect()
}
