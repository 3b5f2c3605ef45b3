//! Small hand-differentiated networks over flat parameter vectors.
//!
//! Two architectures share one convolutional encoder (two 3x3 stride-2
//! convolutions with padding 1 and ReLU):
//!
//! * [`RecurrentQNet`] - encoder, report concatenation, GRU cell, linear
//!   action-value head. One instance per agent at acting time; training
//!   runs truncated BPTT over padded subsequences.
//! * [`JointQNet`] - encoder over the stacked team history, one ReLU
//!   hidden layer, and a head over the product action space.
//!
//! Activations in the encoder use a `(channel, sample, row, col)` layout
//! so both convolutions can be lowered to a single GEMM per batch.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::Rng;

pub trait Scalar: Float + Default + core::fmt::Debug + core::iter::Sum + 'static {
    /// `C = alpha * A * B + beta * C` over strided row/column views.
    ///
    /// # Safety
    /// The pointers and strides must describe valid, non-overlapping views
    /// (C must not alias A or B).
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn lit(x: f64) -> Self;

    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn lit(x: f64) -> f32 {
        x as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn lit(x: f64) -> f64 {
        x
    }

    fn to_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tr {
    /// Stored as the logical shape.
    N,
    /// Stored transposed.
    T,
}

/// `C[m x n] = op(A)[m x k] * op(B)[k x n] + beta * C`, all row-major.
#[allow(clippy::too_many_arguments)]
pub fn gemm<T: Scalar>(ta: Tr, tb: Tr, m: usize, n: usize, k: usize, a: &[T], b: &[T], beta: T, c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too short");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|x| *x = *x * beta);
        return;
    }
    let (rsa, csa) = match ta {
        Tr::N => (k as isize, 1),
        Tr::T => (1, m as isize),
    };
    let (rsb, csb) = match tb {
        Tr::N => (n as isize, 1),
        Tr::T => (1, k as isize),
    };
    // SAFETY: lengths checked above; `c` is a distinct &mut borrow.
    unsafe {
        T::gemm_raw(
            m, k, n, T::one(), a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(),
            n as isize, 1,
        )
    }
}

fn add_row_bias<T: Scalar>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_exact_mut(bias.len()) {
        row.iter_mut().zip(bias).for_each(|(o, &b)| *o = *o + b);
    }
}

fn add_col_sums<T: Scalar>(grad_bias: &mut [T], d: &[T]) {
    for row in d.chunks_exact(grad_bias.len()) {
        grad_bias.iter_mut().zip(row).for_each(|(g, &v)| *g = *g + v);
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Named tensors laid out back to back in one flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Fan-in used for uniform initialisation bounds.
    pub fan_in: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl ParamLayout {
    fn new() -> Self {
        Self { tensors: Vec::new() }
    }

    fn push(&mut self, name: &str, shape: &[usize], fan_in: usize) -> usize {
        let offset = self.total();
        self.tensors.push(TensorSpec { name: name.into(), shape: shape.to_vec(), offset, fan_in });
        self.tensors.len() - 1
    }

    pub fn total(&self) -> usize {
        self.tensors.last().map_or(0, |t| t.offset + t.len())
    }

    fn range(&self, id: usize) -> core::ops::Range<usize> {
        self.tensors[id].range()
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation.
    pub fn init<T: Scalar>(&self, rng: &mut Rng) -> Vec<T> {
        let mut params = vec![T::zero(); self.total()];
        for t in &self.tensors {
            let bound = 1.0 / (t.fan_in.max(1) as f64).sqrt();
            for p in &mut params[t.range()] {
                *p = T::lit(rng.random_range(-bound..bound));
            }
        }
        params
    }
}

pub const KERNEL: usize = 3;
const KK: usize = KERNEL * KERNEL;

fn conv_out(n: usize) -> usize {
    (n - 1) / 2 + 1
}

/// Two-stage convolutional encoder over `channels x rows x cols` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderSpec {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub maps1: usize,
    pub maps2: usize,
}

impl EncoderSpec {
    pub fn input_len(&self) -> usize {
        self.channels * self.rows * self.cols
    }

    fn hw1(&self) -> (usize, usize) {
        (conv_out(self.rows), conv_out(self.cols))
    }

    fn hw2(&self) -> (usize, usize) {
        let (r, c) = self.hw1();
        (conv_out(r), conv_out(c))
    }

    /// Flattened embedding width.
    pub fn embed_dim(&self) -> usize {
        let (r, c) = self.hw2();
        self.maps2 * r * c
    }
}

#[derive(Debug, Clone, Copy)]
struct EncoderIds {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

fn push_encoder(layout: &mut ParamLayout, spec: &EncoderSpec) -> EncoderIds {
    let f1 = spec.channels * KK;
    let f2 = spec.maps1 * KK;
    EncoderIds {
        w1: layout.push("conv1.weight", &[spec.maps1, spec.channels, KERNEL, KERNEL], f1),
        b1: layout.push("conv1.bias", &[spec.maps1], f1),
        w2: layout.push("conv2.weight", &[spec.maps2, spec.maps1, KERNEL, KERNEL], f2),
        b2: layout.push("conv2.bias", &[spec.maps2], f2),
    }
}

/// `(C, N, H, W)` input to a `(C*9) x (N*Ho*Wo)` patch matrix.
fn im2col<T: Scalar>(input: &[T], c: usize, n: usize, h: usize, w: usize, col: &mut [T]) {
    let (ho, wo) = (conv_out(h), conv_out(w));
    let ncols = n * ho * wo;
    for ch in 0..c {
        for kr in 0..KERNEL {
            for kc in 0..KERNEL {
                let row = &mut col[((ch * KK) + kr * KERNEL + kc) * ncols..][..ncols];
                for s in 0..n {
                    let plane = &input[(ch * n + s) * h * w..][..h * w];
                    for oy in 0..ho {
                        let iy = (oy * 2 + kr) as isize - 1;
                        for ox in 0..wo {
                            let ix = (ox * 2 + kc) as isize - 1;
                            row[(s * ho + oy) * wo + ox] =
                                if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                                    plane[iy as usize * w + ix as usize]
                                } else {
                                    T::zero()
                                };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im<T: Scalar>(dcol: &[T], c: usize, n: usize, h: usize, w: usize, dinput: &mut [T]) {
    let (ho, wo) = (conv_out(h), conv_out(w));
    let ncols = n * ho * wo;
    dinput.iter_mut().for_each(|x| *x = T::zero());
    for ch in 0..c {
        for kr in 0..KERNEL {
            for kc in 0..KERNEL {
                let row = &dcol[((ch * KK) + kr * KERNEL + kc) * ncols..][..ncols];
                for s in 0..n {
                    let plane = &mut dinput[(ch * n + s) * h * w..][..h * w];
                    for oy in 0..ho {
                        let iy = (oy * 2 + kr) as isize - 1;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for ox in 0..wo {
                            let ix = (ox * 2 + kc) as isize - 1;
                            if ix >= 0 && (ix as usize) < w {
                                let v = row[(s * ho + oy) * wo + ox];
                                let cell = &mut plane[iy as usize * w + ix as usize];
                                *cell = *cell + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

struct EncoderCache<T> {
    n: usize,
    col1: Vec<T>,
    a1: Vec<T>,
    col2: Vec<T>,
    a2: Vec<T>,
}

/// Reorders `n` samples of `(C, H, W)` into `(C, N, H, W)`.
fn to_cnhw<T: Scalar>(x: &[T], n: usize, c: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * c * hw];
    for s in 0..n {
        for ch in 0..c {
            out[(ch * n + s) * hw..][..hw].copy_from_slice(&x[(s * c + ch) * hw..][..hw]);
        }
    }
    out
}

fn encoder_forward<T: Scalar>(
    spec: &EncoderSpec,
    ids: &EncoderIds,
    layout: &ParamLayout,
    params: &[T],
    inputs: &[T],
    n: usize,
) -> (Vec<T>, EncoderCache<T>) {
    let (h, w) = (spec.rows, spec.cols);
    let (h1, w1) = spec.hw1();
    let (h2, w2) = spec.hw2();
    let x = to_cnhw(inputs, n, spec.channels, h * w);

    let cols1 = n * h1 * w1;
    let mut col1 = vec![T::zero(); spec.channels * KK * cols1];
    im2col(&x, spec.channels, n, h, w, &mut col1);
    let mut a1 = vec![T::zero(); spec.maps1 * cols1];
    conv_apply(&params[layout.range(ids.w1)], &params[layout.range(ids.b1)], &col1, spec.channels * KK, cols1, &mut a1);

    let cols2 = n * h2 * w2;
    let mut col2 = vec![T::zero(); spec.maps1 * KK * cols2];
    im2col(&a1, spec.maps1, n, h1, w1, &mut col2);
    let mut a2 = vec![T::zero(); spec.maps2 * cols2];
    conv_apply(&params[layout.range(ids.w2)], &params[layout.range(ids.b2)], &col2, spec.maps1 * KK, cols2, &mut a2);

    // (F2, N, HW2) -> (N, F2*HW2)
    let hw2 = h2 * w2;
    let d = spec.embed_dim();
    let mut emb = vec![T::zero(); n * d];
    for f in 0..spec.maps2 {
        for s in 0..n {
            emb[s * d + f * hw2..][..hw2].copy_from_slice(&a2[(f * n + s) * hw2..][..hw2]);
        }
    }
    (emb, EncoderCache { n, col1, a1, col2, a2 })
}

fn conv_apply<T: Scalar>(weight: &[T], bias: &[T], col: &[T], k: usize, ncols: usize, out: &mut [T]) {
    let maps = bias.len();
    gemm(Tr::N, Tr::N, maps, ncols, k, weight, col, T::zero(), out);
    for (f, row) in out.chunks_exact_mut(ncols).enumerate() {
        for v in row {
            *v = (*v + bias[f]).max(T::zero());
        }
    }
}

/// Backprop through a ReLU convolution: fills weight/bias grads and returns
/// the patch-matrix gradient if requested.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    weight: &[T],
    out: &[T],
    dout: &mut [T],
    col: &[T],
    k: usize,
    ncols: usize,
    grad_w: &mut [T],
    grad_b: &mut [T],
    want_dcol: bool,
) -> Option<Vec<T>> {
    let maps = grad_b.len();
    for (d, &o) in dout.iter_mut().zip(out) {
        if o <= T::zero() {
            *d = T::zero();
        }
    }
    gemm(Tr::N, Tr::T, maps, k, ncols, dout, col, T::one(), grad_w);
    for (f, row) in dout.chunks_exact(ncols).enumerate() {
        grad_b[f] = grad_b[f] + row.iter().copied().sum::<T>();
    }
    want_dcol.then(|| {
        let mut dcol = vec![T::zero(); k * ncols];
        gemm(Tr::T, Tr::N, k, ncols, maps, weight, dout, T::zero(), &mut dcol);
        dcol
    })
}

#[allow(clippy::too_many_arguments)]
fn encoder_backward<T: Scalar>(
    spec: &EncoderSpec,
    ids: &EncoderIds,
    layout: &ParamLayout,
    params: &[T],
    cache: &EncoderCache<T>,
    demb: &[T],
    grads: &mut [T],
) {
    let n = cache.n;
    let (h1, w1) = spec.hw1();
    let (h2, w2) = spec.hw2();
    let hw2 = h2 * w2;
    let d = spec.embed_dim();
    let mut da2 = vec![T::zero(); spec.maps2 * n * hw2];
    for f in 0..spec.maps2 {
        for s in 0..n {
            da2[(f * n + s) * hw2..][..hw2].copy_from_slice(&demb[s * d + f * hw2..][..hw2]);
        }
    }
    let cols2 = n * hw2;
    let (gw2, gb2) = two_ranges(grads, layout.range(ids.w2), layout.range(ids.b2));
    let dcol2 = conv_backward(
        &params[layout.range(ids.w2)], &cache.a2, &mut da2, &cache.col2, spec.maps1 * KK, cols2, gw2, gb2, true,
    )
    .expect("requested");
    let mut da1 = vec![T::zero(); spec.maps1 * n * h1 * w1];
    col2im(&dcol2, spec.maps1, n, h1, w1, &mut da1);
    let cols1 = n * h1 * w1;
    let (gw1, gb1) = two_ranges(grads, layout.range(ids.w1), layout.range(ids.b1));
    conv_backward(
        &params[layout.range(ids.w1)], &cache.a1, &mut da1, &cache.col1, spec.channels * KK, cols1, gw1, gb1, false,
    );
}

/// Two disjoint mutable windows into one buffer (`a` must precede `b`).
fn two_ranges<T>(
    buf: &mut [T],
    a: core::ops::Range<usize>,
    b: core::ops::Range<usize>,
) -> (&mut [T], &mut [T]) {
    assert!(a.end <= b.start);
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

/// Shape of the per-agent recurrent Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecurrentArch {
    pub encoder: EncoderSpec,
    pub report_width: usize,
    pub hidden: usize,
    pub actions: usize,
}

#[derive(Debug, Clone)]
pub struct RecurrentQNet {
    pub arch: RecurrentArch,
    pub layout: ParamLayout,
    enc: EncoderIds,
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
    w_out: usize,
    b_out: usize,
}

/// A padded batch of `batch` subsequences, `steps` long, time-major
/// (`index = t * batch + b`).
#[derive(Debug, Clone)]
pub struct SeqInput<T> {
    pub batch: usize,
    pub steps: usize,
    /// `steps * batch` dense observations.
    pub obs: Vec<T>,
    /// `steps * batch * report_width` report flags.
    pub reports: Vec<T>,
}

struct GruCache<T> {
    x: Vec<T>,
    /// Hidden states `h_0 .. h_T`, each `batch x hidden`.
    hs: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    nn: Vec<T>,
    ghn: Vec<T>,
}

impl RecurrentQNet {
    pub fn new(arch: RecurrentArch) -> Self {
        let mut layout = ParamLayout::new();
        let enc = push_encoder(&mut layout, &arch.encoder);
        let input = arch.encoder.embed_dim() + arch.report_width;
        let (h, a) = (arch.hidden, arch.actions);
        let w_ih = layout.push("gru.weight_ih", &[3 * h, input], h);
        let w_hh = layout.push("gru.weight_hh", &[3 * h, h], h);
        let b_ih = layout.push("gru.bias_ih", &[3 * h], h);
        let b_hh = layout.push("gru.bias_hh", &[3 * h], h);
        let w_out = layout.push("head.weight", &[a, h], h);
        let b_out = layout.push("head.bias", &[a], h);
        Self { arch, layout, enc, w_ih, w_hh, b_ih, b_hh, w_out, b_out }
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    fn input_width(&self) -> usize {
        self.arch.encoder.embed_dim() + self.arch.report_width
    }

    fn check<T>(&self, params: &[T], obs: usize, reports: usize, n: usize) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch("parameter vector length"));
        }
        if obs != n * self.arch.encoder.input_len() {
            return Err(Error::ShapeMismatch("observation tensor"));
        }
        if reports != n * self.arch.report_width {
            return Err(Error::ShapeMismatch("report vector width"));
        }
        Ok(())
    }

    /// Encoder output concatenated with the report flags, `n x input_width`.
    fn gru_inputs<T: Scalar>(&self, params: &[T], obs: &[T], reports: &[T], n: usize) -> (Vec<T>, EncoderCache<T>) {
        let (emb, cache) = encoder_forward(&self.arch.encoder, &self.enc, &self.layout, params, obs, n);
        let (d, r) = (self.arch.encoder.embed_dim(), self.arch.report_width);
        let mut x = vec![T::zero(); n * (d + r)];
        for s in 0..n {
            x[s * (d + r)..][..d].copy_from_slice(&emb[s * d..][..d]);
            x[s * (d + r) + d..][..r].copy_from_slice(&reports[s * r..][..r]);
        }
        (x, cache)
    }

    /// One GRU step over a batch. `gi` is the precomputed input projection.
    #[allow(clippy::too_many_arguments)]
    fn gru_cell<T: Scalar>(
        &self,
        params: &[T],
        gi: &[T],
        h_prev: &[T],
        b: usize,
        h_next: &mut [T],
        r_out: &mut [T],
        z_out: &mut [T],
        n_out: &mut [T],
        ghn_out: &mut [T],
    ) {
        let h = self.arch.hidden;
        let mut gh = vec![T::zero(); b * 3 * h];
        gemm(Tr::N, Tr::T, b, 3 * h, h, h_prev, &params[self.layout.range(self.w_hh)], T::zero(), &mut gh);
        add_row_bias(&mut gh, &params[self.layout.range(self.b_hh)]);
        for s in 0..b {
            let gi_s = &gi[s * 3 * h..][..3 * h];
            let gh_s = &gh[s * 3 * h..][..3 * h];
            for j in 0..h {
                let r = sigmoid(gi_s[j] + gh_s[j]);
                let z = sigmoid(gi_s[h + j] + gh_s[h + j]);
                let ghn = gh_s[2 * h + j];
                let nv = (gi_s[2 * h + j] + r * ghn).tanh();
                let hp = h_prev[s * h + j];
                let k = s * h + j;
                h_next[k] = (T::one() - z) * nv + z * hp;
                r_out[k] = r;
                z_out[k] = z;
                n_out[k] = nv;
                ghn_out[k] = ghn;
            }
        }
    }

    fn head<T: Scalar>(&self, params: &[T], hs: &[T], n: usize) -> Vec<T> {
        let a = self.arch.actions;
        let mut q = vec![T::zero(); n * a];
        gemm(Tr::N, Tr::T, n, a, self.arch.hidden, hs, &params[self.layout.range(self.w_out)], T::zero(), &mut q);
        add_row_bias(&mut q, &params[self.layout.range(self.b_out)]);
        q
    }

    /// One acting step for `n` agents: `(q: n x actions, hidden': n x hidden)`.
    pub fn step<T: Scalar>(
        &self,
        params: &[T],
        obs: &[T],
        reports: &[T],
        hidden: &[T],
        n: usize,
    ) -> Result<(Vec<T>, Vec<T>)> {
        self.check::<T>(params, obs.len(), reports.len(), n)?;
        let h = self.arch.hidden;
        if hidden.len() != n * h {
            return Err(Error::ShapeMismatch("hidden state"));
        }
        let (x, _) = self.gru_inputs(params, obs, reports, n);
        let gi = self.input_projection(params, &x, n);
        let mut next = vec![T::zero(); n * h];
        let mut scratch = vec![T::zero(); 4 * n * h];
        let (r, rest) = scratch.split_at_mut(n * h);
        let (z, rest) = rest.split_at_mut(n * h);
        let (nv, ghn) = rest.split_at_mut(n * h);
        self.gru_cell(params, &gi, hidden, n, &mut next, r, z, nv, ghn);
        Ok((self.head(params, &next, n), next))
    }

    fn input_projection<T: Scalar>(&self, params: &[T], x: &[T], n: usize) -> Vec<T> {
        let h3 = 3 * self.arch.hidden;
        let mut gi = vec![T::zero(); n * h3];
        gemm(Tr::N, Tr::T, n, h3, self.input_width(), x, &params[self.layout.range(self.w_ih)], T::zero(), &mut gi);
        add_row_bias(&mut gi, &params[self.layout.range(self.b_ih)]);
        gi
    }

    fn unroll<T: Scalar>(&self, params: &[T], input: &SeqInput<T>) -> Result<(Vec<T>, EncoderCache<T>, GruCache<T>)> {
        let (b, steps) = (input.batch, input.steps);
        let n = b * steps;
        self.check::<T>(params, input.obs.len(), input.reports.len(), n)?;
        let h = self.arch.hidden;
        let (x, enc) = self.gru_inputs(params, &input.obs, &input.reports, n);
        let gi = self.input_projection(params, &x, n);
        let mut hs = vec![T::zero(); (steps + 1) * b * h];
        let mut r = vec![T::zero(); n * h];
        let mut z = vec![T::zero(); n * h];
        let mut nv = vec![T::zero(); n * h];
        let mut ghn = vec![T::zero(); n * h];
        for t in 0..steps {
            let (prev, next) = hs.split_at_mut((t + 1) * b * h);
            let span = t * b * h..(t + 1) * b * h;
            self.gru_cell(
                params,
                &gi[t * b * 3 * h..][..b * 3 * h],
                &prev[t * b * h..],
                b,
                &mut next[..b * h],
                &mut r[span.clone()],
                &mut z[span.clone()],
                &mut nv[span.clone()],
                &mut ghn[span],
            );
        }
        let q = self.head(params, &hs[b * h..], n);
        Ok((q, enc, GruCache { x, hs, r, z, nn: nv, ghn }))
    }

    /// Q-values for every step of every subsequence, hidden state starting
    /// at zero: `steps * batch x actions`.
    pub fn sequence_q<T: Scalar>(&self, params: &[T], input: &SeqInput<T>) -> Result<Vec<T>> {
        Ok(self.unroll(params, input)?.0)
    }

    /// Forward pass plus the gradient of `sum(dq * q)` w.r.t. the parameters.
    /// `dq` has the shape of [`Self::sequence_q`]'s output.
    pub fn sequence_backward<T: Scalar>(
        &self,
        params: &[T],
        input: &SeqInput<T>,
        dq_fn: impl FnOnce(&[T]) -> Vec<T>,
    ) -> Result<(Vec<T>, Vec<T>)> {
        let (q, enc, cache) = self.unroll(params, input)?;
        let dq = dq_fn(&q);
        let (b, steps) = (input.batch, input.steps);
        let n = b * steps;
        let (h, a) = (self.arch.hidden, self.arch.actions);
        let iw = self.input_width();
        let mut grads = vec![T::zero(); self.param_count()];
        let hs_out = &cache.hs[b * h..];

        gemm(Tr::T, Tr::N, a, h, n, &dq, hs_out, T::one(), &mut grads[self.layout.range(self.w_out)]);
        add_col_sums(&mut grads[self.layout.range(self.b_out)], &dq);
        let mut dh_all = vec![T::zero(); n * h];
        gemm(Tr::N, Tr::N, n, h, a, &dq, &params[self.layout.range(self.w_out)], T::zero(), &mut dh_all);

        let mut dgi = vec![T::zero(); n * 3 * h];
        let mut dh_next = vec![T::zero(); b * h];
        let mut dgh = vec![T::zero(); b * 3 * h];
        for t in (0..steps).rev() {
            let base = t * b * h;
            let h_prev = &cache.hs[t * b * h..][..b * h];
            for s in 0..b {
                for j in 0..h {
                    let k = base + s * h + j;
                    let dh = dh_all[k] + dh_next[s * h + j];
                    let (r, z, nv, ghn) = (cache.r[k], cache.z[k], cache.nn[k], cache.ghn[k]);
                    let hp = h_prev[s * h + j];
                    let dn = dh * (T::one() - z);
                    let dz = dh * (hp - nv);
                    let dn_pre = dn * (T::one() - nv * nv);
                    let dr = dn_pre * ghn;
                    let dr_pre = dr * r * (T::one() - r);
                    let dz_pre = dz * z * (T::one() - z);
                    let gi_row = (t * b + s) * 3 * h;
                    dgi[gi_row + j] = dr_pre;
                    dgi[gi_row + h + j] = dz_pre;
                    dgi[gi_row + 2 * h + j] = dn_pre;
                    dgh[s * 3 * h + j] = dr_pre;
                    dgh[s * 3 * h + h + j] = dz_pre;
                    dgh[s * 3 * h + 2 * h + j] = dn_pre * r;
                    dh_next[s * h + j] = dh * z;
                }
            }
            gemm(Tr::T, Tr::N, 3 * h, h, b, &dgh, h_prev, T::one(), &mut grads[self.layout.range(self.w_hh)]);
            add_col_sums(&mut grads[self.layout.range(self.b_hh)], &dgh);
            gemm(Tr::N, Tr::N, b, h, 3 * h, &dgh, &params[self.layout.range(self.w_hh)], T::one(), &mut dh_next);
        }

        gemm(Tr::T, Tr::N, 3 * h, iw, n, &dgi, &cache.x, T::one(), &mut grads[self.layout.range(self.w_ih)]);
        add_col_sums(&mut grads[self.layout.range(self.b_ih)], &dgi);
        let mut dx = vec![T::zero(); n * iw];
        gemm(Tr::N, Tr::N, n, iw, 3 * h, &dgi, &params[self.layout.range(self.w_ih)], T::zero(), &mut dx);
        let d = self.arch.encoder.embed_dim();
        let mut demb = vec![T::zero(); n * d];
        for s in 0..n {
            demb[s * d..][..d].copy_from_slice(&dx[s * iw..][..d]);
        }
        encoder_backward(&self.arch.encoder, &self.enc, &self.layout, params, &enc, &demb, &mut grads);
        Ok((q, grads))
    }
}

/// Shape of the joint-action Q-network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointArch {
    pub encoder: EncoderSpec,
    pub hidden: usize,
    pub n_agents: usize,
    pub actions_per_agent: usize,
}

impl JointArch {
    pub fn outputs(&self) -> usize {
        self.actions_per_agent.pow(self.n_agents as u32)
    }
}

#[derive(Debug, Clone)]
pub struct JointQNet {
    pub arch: JointArch,
    pub layout: ParamLayout,
    enc: EncoderIds,
    w_fc: usize,
    b_fc: usize,
    w_out: usize,
    b_out: usize,
}

impl JointQNet {
    pub fn new(arch: JointArch) -> Self {
        let mut layout = ParamLayout::new();
        let enc = push_encoder(&mut layout, &arch.encoder);
        let d = arch.encoder.embed_dim();
        let (h, k) = (arch.hidden, arch.outputs());
        let w_fc = layout.push("fc.weight", &[h, d], d);
        let b_fc = layout.push("fc.bias", &[h], d);
        let w_out = layout.push("head.weight", &[k, h], h);
        let b_out = layout.push("head.bias", &[k], h);
        Self { arch, layout, enc, w_fc, b_fc, w_out, b_out }
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    fn check<T>(&self, params: &[T], inputs: &[T], n: usize) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch("parameter vector length"));
        }
        if inputs.len() != n * self.arch.encoder.input_len() {
            return Err(Error::ShapeMismatch("stacked history tensor"));
        }
        Ok(())
    }

    fn forward_cached<T: Scalar>(&self, params: &[T], inputs: &[T], n: usize) -> (Vec<T>, Vec<T>, EncoderCache<T>) {
        let (emb, enc) = encoder_forward(&self.arch.encoder, &self.enc, &self.layout, params, inputs, n);
        let (d, h, k) = (self.arch.encoder.embed_dim(), self.arch.hidden, self.arch.outputs());
        let mut z = vec![T::zero(); n * h];
        gemm(Tr::N, Tr::T, n, h, d, &emb, &params[self.layout.range(self.w_fc)], T::zero(), &mut z);
        add_row_bias(&mut z, &params[self.layout.range(self.b_fc)]);
        z.iter_mut().for_each(|v| *v = v.max(T::zero()));
        let mut q = vec![T::zero(); n * k];
        gemm(Tr::N, Tr::T, n, k, h, &z, &params[self.layout.range(self.w_out)], T::zero(), &mut q);
        add_row_bias(&mut q, &params[self.layout.range(self.b_out)]);
        let mut packed = emb;
        packed.extend_from_slice(&z);
        (q, packed, enc)
    }

    /// Joint action values, `n x actions^agents`.
    pub fn forward<T: Scalar>(&self, params: &[T], inputs: &[T], n: usize) -> Result<Vec<T>> {
        self.check(params, inputs, n)?;
        Ok(self.forward_cached(params, inputs, n).0)
    }

    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        inputs: &[T],
        n: usize,
        dq_fn: impl FnOnce(&[T]) -> Vec<T>,
    ) -> Result<(Vec<T>, Vec<T>)> {
        self.check(params, inputs, n)?;
        let (q, packed, enc) = self.forward_cached(params, inputs, n);
        let dq = dq_fn(&q);
        let (d, h, k) = (self.arch.encoder.embed_dim(), self.arch.hidden, self.arch.outputs());
        let (emb, z) = packed.split_at(n * d);
        let mut grads = vec![T::zero(); self.param_count()];
        gemm(Tr::T, Tr::N, k, h, n, &dq, z, T::one(), &mut grads[self.layout.range(self.w_out)]);
        add_col_sums(&mut grads[self.layout.range(self.b_out)], &dq);
        let mut dz = vec![T::zero(); n * h];
        gemm(Tr::N, Tr::N, n, h, k, &dq, &params[self.layout.range(self.w_out)], T::zero(), &mut dz);
        for (g, &v) in dz.iter_mut().zip(z) {
            if v <= T::zero() {
                *g = T::zero();
            }
        }
        gemm(Tr::T, Tr::N, h, d, n, &dz, emb, T::one(), &mut grads[self.layout.range(self.w_fc)]);
        add_col_sums(&mut grads[self.layout.range(self.b_fc)], &dz);
        let mut demb = vec![T::zero(); n * d];
        gemm(Tr::N, Tr::N, n, d, h, &dz, &params[self.layout.range(self.w_fc)], T::zero(), &mut demb);
        encoder_backward(&self.arch.encoder, &self.enc, &self.layout, params, &enc, &demb, &mut grads);
        Ok((q, grads))
    }
}

/// Mixed-radix joint action index, agent 0 most significant.
pub fn encode_joint(actions: &[usize], radix: usize) -> usize {
    actions.iter().fold(0, |acc, &a| acc * radix + a)
}

pub fn decode_joint(mut index: usize, radix: usize, n_agents: usize) -> Vec<usize> {
    let mut out = vec![0; n_agents];
    for slot in out.iter_mut().rev() {
        *slot = index % radix;
        index /= radix;
    }
    out
}
