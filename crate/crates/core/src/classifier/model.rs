//! Shallow CNN head: three stride-2 conv+ReLU blocks, global average pooling,
//! and a single-logit linear layer. Activations are computed in `f64`;
//! parameters are stored as `f32`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::FeatureStack;
use crate::error::{Error, Result};

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const DEFAULT_WIDTHS: [usize; 3] = [8, 16, 32];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub in_channels: usize,
    pub widths: Vec<usize>,
}

impl Architecture {
    pub fn new(in_channels: usize) -> Self {
        Self {
            in_channels,
            widths: DEFAULT_WIDTHS.to_vec(),
        }
    }

    /// `(c_in, c_out)` per conv block.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.in_channels)
            .chain(self.widths.iter().copied())
            .zip(self.widths.iter().copied())
    }

    pub fn fc_inputs(&self) -> usize {
        *self.widths.last().expect("at least one conv block")
    }

    /// Parameter group names and sizes, in storage order.
    pub fn layout(&self) -> Vec<(String, usize)> {
        let mut out = Vec::new();
        for (i, (cin, cout)) in self.blocks().enumerate() {
            out.push((format!("conv{}.weight", i + 1), cout * cin * KERNEL * KERNEL));
            out.push((format!("conv{}.bias", i + 1), cout));
        }
        out.push(("fc.weight".into(), self.fc_inputs()));
        out.push(("fc.bias".into(), 1));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(|(_, n)| n).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    /// Alternating conv weight/bias groups, then `fc.weight`, `fc.bias`.
    pub groups: Vec<ParamGroup>,
}

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Self {
        let groups = arch
            .layout()
            .into_iter()
            .map(|(name, n)| ParamGroup {
                name,
                values: vec![0.0; n],
            })
            .collect();
        Self { arch, groups }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng>(arch: Architecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        let area = KERNEL * KERNEL;
        let blocks: Vec<_> = p.arch.blocks().collect();
        for (i, (cin, cout)) in blocks.into_iter().enumerate() {
            fill_uniform(&mut p.groups[2 * i].values, cin * area, cout * area, rng);
        }
        let fc = p.groups.len() - 2;
        let fan_in = p.arch.fc_inputs();
        fill_uniform(&mut p.groups[fc].values, fan_in, 1, rng);
        p
    }

    pub fn from_groups(arch: Architecture, groups: Vec<ParamGroup>) -> Result<Self> {
        let layout = arch.layout();
        if layout.len() != groups.len()
            || layout
                .iter()
                .zip(&groups)
                .any(|((name, n), g)| *name != g.name || *n != g.values.len())
        {
            return Err(Error::Contract(
                "parameter groups do not match the architecture".into(),
            ));
        }
        Ok(Self { arch, groups })
    }

    pub fn conv_weight(&self, block: usize) -> &[f32] {
        &self.groups[2 * block].values
    }

    pub fn conv_bias(&self, block: usize) -> &[f32] {
        &self.groups[2 * block + 1].values
    }

    pub fn fc_weight(&self) -> &[f32] {
        &self.groups[self.groups.len() - 2].values
    }

    pub fn fc_bias(&self) -> f32 {
        self.groups[self.groups.len() - 1].values[0]
    }

    pub fn all_finite(&self) -> bool {
        self.groups.iter().all(|g| g.values.iter().all(|v| v.is_finite()))
    }

    /// FNV-1a over the parameter bit patterns; ties a cache to the exact weights it saw.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for g in &self.groups {
            for v in &g.values {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }
}

fn fill_uniform<R: Rng>(values: &mut [f32], fan_in: usize, fan_out: usize, rng: &mut R) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in values {
        *v = rng.gen_range(-bound..bound) as f32;
    }
}

/// Row-major `c×h×w` activation volume in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Volume {
    fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }
}

fn out_dim(n: usize) -> usize {
    (n + 2 - KERNEL) / STRIDE + 1
}

/// Unrolled receptive fields of a zero-padded (pad 1), stride-2, 3×3 conv:
/// row `(i·3 + ky)·3 + kx`, column `oy·wo + ox`.
#[derive(Debug, Clone)]
struct Columns {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Output indices whose tap `k` lands inside `0..len`: `0 ≤ 2·o + k − 1 < len`.
fn valid_outputs(k: usize, len: usize, out: usize) -> std::ops::Range<usize> {
    let lo = usize::from(k == 0);
    let hi = ((len + 1 - k).div_ceil(STRIDE)).min(out);
    lo..hi.max(lo)
}

fn im2col(x: &Volume) -> Columns {
    let (ho, wo) = (out_dim(x.h), out_dim(x.w));
    let rows = x.c * KERNEL * KERNEL;
    let cols = ho * wo;
    let mut data = vec![0.0; rows * cols];
    for i in 0..x.c {
        let src = &x.data[i * x.h * x.w..(i + 1) * x.h * x.w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let r = (i * KERNEL + ky) * KERNEL + kx;
                let dst = &mut data[r * cols..(r + 1) * cols];
                let xs = valid_outputs(kx, x.w, wo);
                for oy in valid_outputs(ky, x.h, ho) {
                    let iy = oy * STRIDE + ky - 1;
                    let row = &src[iy * x.w..(iy + 1) * x.w];
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    for ox in xs.clone() {
                        drow[ox] = row[ox * STRIDE + kx - 1];
                    }
                }
            }
        }
    }
    Columns { rows, cols, data }
}

/// Scatter-adds column gradients back onto an input-shaped volume.
fn col2im(dcols: &[f64], c: usize, h: usize, w: usize) -> Volume {
    let (ho, wo) = (out_dim(h), out_dim(w));
    let cols = ho * wo;
    let mut out = Volume::zeros(c, h, w);
    for i in 0..c {
        let dst = &mut out.data[i * h * w..(i + 1) * h * w];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let r = (i * KERNEL + ky) * KERNEL + kx;
                let src = &dcols[r * cols..(r + 1) * cols];
                let xs = valid_outputs(kx, w, wo);
                for oy in valid_outputs(ky, h, ho) {
                    let iy = oy * STRIDE + ky - 1;
                    let drow = &mut dst[iy * w..(iy + 1) * w];
                    let srow = &src[oy * wo..(oy + 1) * wo];
                    for ox in xs.clone() {
                        drow[ox * STRIDE + kx - 1] += srow[ox];
                    }
                }
            }
        }
    }
    out
}

/// `out += a · b` with row-major `a: m×k`, `b: k×p`, `out: m×p`.
fn gemm_nn(out: &mut [f64], a: &[f64], b: &[f64], m: usize, k: usize, p: usize) {
    assert!(out.len() == m * p && a.len() == m * k && b.len() == k * p);
    // SAFETY: the three buffers were just checked against the strides below.
    unsafe {
        matrixmultiply::dgemm(
            m, k, p, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), p as isize, 1,
            1.0,
            out.as_mut_ptr(), p as isize, 1,
        );
    }
}

/// `out += a · bᵀ` with row-major `a: m×p`, `b: n×p`, `out: m×n`.
fn gemm_nt(out: &mut [f64], a: &[f64], b: &[f64], m: usize, n: usize, p: usize) {
    assert!(out.len() == m * n && a.len() == m * p && b.len() == n * p);
    // SAFETY: as above; `b` is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            m, p, n, 1.0,
            a.as_ptr(), p as isize, 1,
            b.as_ptr(), 1, p as isize,
            1.0,
            out.as_mut_ptr(), n as isize, 1,
        );
    }
}

fn conv_forward(cols: &Columns, weight: &[f32], bias: &[f32], cout: usize, ho: usize, wo: usize) -> Volume {
    let mut out = Volume::zeros(cout, ho, wo);
    let p = cols.cols;
    for (o, plane) in out.data.chunks_exact_mut(p).enumerate() {
        plane.fill(bias[o] as f64);
    }
    let w: Vec<f64> = weight.iter().map(|&v| v as f64).collect();
    gemm_nn(&mut out.data, &w, &cols.data, cout, cols.rows, p);
    out
}

/// Accumulates weight/bias gradients; returns the gradient w.r.t. the columns if requested.
fn conv_backward(
    cols: &Columns,
    weight: &[f32],
    dz: &Volume,
    dweight: &mut [f64],
    dbias: &mut [f64],
    need_input_grad: bool,
) -> Option<Vec<f64>> {
    let p = cols.cols;
    let cout = dz.c;
    for (o, g) in dz.data.chunks_exact(p).enumerate() {
        dbias[o] += g.iter().sum::<f64>();
    }
    gemm_nt(dweight, &dz.data, &cols.data, cout, cols.rows, p);
    need_input_grad.then(|| {
        let mut wt = vec![0.0; cols.rows * cout];
        for o in 0..cout {
            for r in 0..cols.rows {
                wt[r * cout + o] = weight[o * cols.rows + r] as f64;
            }
        }
        let mut dcols = vec![0.0; cols.rows * p];
        gemm_nn(&mut dcols, &wt, &dz.data, cols.rows, cout, p);
        dcols
    })
}

/// Intermediates retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    /// Input shape `(c, h, w)` of each block.
    shapes: Vec<(usize, usize, usize)>,
    /// Unrolled input of each block.
    columns: Vec<Columns>,
    /// Post-ReLU output of each block.
    activations: Vec<Volume>,
    pub pooled: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
}

impl ForwardCache {
    /// Hash of which ReLU units are active. Two parameter settings with equal
    /// signatures lie in the same linear region of the network.
    pub fn activation_signature(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (i, v) in self.activations.iter().flat_map(|a| &a.data).enumerate() {
            if *v > 0.0 {
                h ^= i as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Spatial mean per channel.
pub fn global_average_pool(v: &Volume) -> Vec<f64> {
    let area = (v.h * v.w) as f64;
    v.data
        .chunks(v.h * v.w)
        .map(|plane| plane.iter().sum::<f64>() / area)
        .collect()
}

pub fn forward(params: &ModelParams, x: &FeatureStack) -> Result<(f64, ForwardCache)> {
    let t = x.tensor();
    if t.channels() != params.arch.in_channels {
        return Err(Error::Dimension(format!(
            "feature stack has {} channels, model expects {}",
            t.channels(),
            params.arch.in_channels
        )));
    }
    let input = Volume {
        c: t.channels(),
        h: t.height(),
        w: t.width(),
        data: t.data().iter().map(|&v| v as f64).collect(),
    };
    let n_blocks = params.arch.widths.len();
    let mut activations: Vec<Volume> = Vec::with_capacity(n_blocks);
    let mut columns = Vec::with_capacity(n_blocks);
    let mut shapes = Vec::with_capacity(n_blocks);
    for (b, (_, cout)) in params.arch.blocks().enumerate() {
        let prev = activations.last().unwrap_or(&input);
        let cols = im2col(prev);
        shapes.push((prev.c, prev.h, prev.w));
        let (ho, wo) = (out_dim(prev.h), out_dim(prev.w));
        let mut z = conv_forward(&cols, params.conv_weight(b), params.conv_bias(b), cout, ho, wo);
        z.data.iter_mut().for_each(|v| *v = v.max(0.0));
        columns.push(cols);
        activations.push(z);
    }
    let pooled = global_average_pool(activations.last().expect("non-empty"));
    let logit = params
        .fc_weight()
        .iter()
        .zip(&pooled)
        .map(|(&w, &p)| w as f64 * p)
        .sum::<f64>()
        + params.fc_bias() as f64;
    let probability = sigmoid(logit);
    Ok((
        probability,
        ForwardCache {
            fingerprint: params.fingerprint(),
            shapes,
            columns,
            activations,
            pooled,
            logit,
            probability,
        },
    ))
}

pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy with the probability clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(p: f64, y: bool) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Per-parameter gradients in `f64`, laid out like [`ModelParams::groups`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub groups: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            groups: params.groups.iter().map(|g| vec![0.0; g.values.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.groups.iter_mut().zip(&other.groups) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.groups
            .iter_mut()
            .flat_map(|g| g.iter_mut())
            .for_each(|v| *v *= s);
    }
}

/// Reverse-mode gradient of `bce_loss(forward(params, x), y)`.
pub fn backward(params: &ModelParams, cache: &ForwardCache, y: bool) -> Result<Gradients> {
    if cache.fingerprint != params.fingerprint()
        || cache.activations.len() != params.arch.widths.len()
        || cache.shapes.first().map(|s| s.0) != Some(params.arch.in_channels)
    {
        return Err(Error::Contract(
            "forward cache was produced by different parameters".into(),
        ));
    }
    let mut grads = Gradients::zeros_like(params);
    let n_groups = grads.groups.len();
    let dlogit = cache.probability - if y { 1.0 } else { 0.0 };

    grads.groups[n_groups - 1][0] = dlogit;
    for (g, &p) in grads.groups[n_groups - 2].iter_mut().zip(&cache.pooled) {
        *g = dlogit * p;
    }

    let last = cache.activations.last().expect("non-empty");
    let area = (last.h * last.w) as f64;
    let mut delta = Volume::zeros(last.c, last.h, last.w);
    for (c, &w) in params.fc_weight().iter().enumerate() {
        let d = dlogit * w as f64 / area;
        delta.data[c * last.h * last.w..(c + 1) * last.h * last.w]
            .iter_mut()
            .for_each(|v| *v = d);
    }

    for b in (0..cache.activations.len()).rev() {
        // ReLU gate: the stored activation is positive exactly where the pre-activation was.
        for (d, &a) in delta.data.iter_mut().zip(&cache.activations[b].data) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        let (wg, rest) = grads.groups[2 * b..].split_at_mut(1);
        let dcols = conv_backward(
            &cache.columns[b],
            params.conv_weight(b),
            &delta,
            &mut wg[0],
            &mut rest[0],
            b > 0,
        );
        if let Some(dcols) = dcols {
            let (c, h, w) = cache.shapes[b];
            delta = col2im(&dcols, c, h, w);
        }
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocked_products_match_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (m, k, p) in [(1, 1, 1), (4, 3, 8), (5, 7, 13), (9, 2, 17), (8, 54, 64)] {
            let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut out = vec![0.5; m * p];
            gemm_nn(&mut out, &a, &b, m, k, p);
            for i in 0..m {
                for j in 0..p {
                    let want = 0.5 + (0..k).map(|t| a[i * k + t] * b[t * p + j]).sum::<f64>();
                    assert!((out[i * p + j] - want).abs() < 1e-12);
                }
            }
            // a: m×p rows, b: k×p rows.
            let a: Vec<f64> = (0..m * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut out = vec![0.0; m * k];
            gemm_nt(&mut out, &a, &b, m, k, p);
            for i in 0..m {
                for j in 0..k {
                    let want: f64 = (0..p).map(|t| a[i * p + t] * b[j * p + t]).sum();
                    assert!((out[i * k + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn valid_output_ranges_match_bounds() {
        for len in 1..12 {
            let out = out_dim(len);
            for k in 0..KERNEL {
                let want: Vec<usize> = (0..out)
                    .filter(|&o| (0..len as isize).contains(&((o * STRIDE + k) as isize - 1)))
                    .collect();
                assert_eq!(valid_outputs(k, len, out).collect::<Vec<_>>(), want, "len {len} k {k}");
            }
        }
    }
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn stack(c: usize, h: usize, w: usize, seed: u64) -> FeatureStack {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureStack::new(Tensor::from_fn(c, h, w, |_, _, _| rng.gen_range(-1.0f32..1.0)).unwrap())
    }

    fn model(cin: usize, seed: u64) -> ModelParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ModelParams::glorot(Architecture::new(cin), &mut rng);
        // Nonzero biases so every bias path is exercised.
        for g in p.groups.iter_mut().filter(|g| g.name.ends_with("bias")) {
            g.values.iter_mut().for_each(|v| *v = rng.gen_range(-0.1..0.1));
        }
        p
    }

    /// Direct scalar re-evaluation of the network with explicit index arithmetic.
    fn scalar_forward(p: &ModelParams, x: &FeatureStack) -> f64 {
        let t = x.tensor();
        let (mut c, mut h, mut w) = t.shape();
        let mut cur: Vec<f64> = t.data().iter().map(|&v| v as f64).collect();
        for (b, (_, cout)) in p.arch.blocks().enumerate() {
            let ho = (h - 1) / 2 + 1;
            let wo = (w - 1) / 2 + 1;
            let mut next = vec![0.0; cout * ho * wo];
            for o in 0..cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut s = p.conv_bias(b)[o] as f64;
                        for i in 0..c {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = 2 * oy as i64 + ky as i64 - 1;
                                    let ix = 2 * ox as i64 + kx as i64 - 1;
                                    if iy < 0 || ix < 0 || iy >= h as i64 || ix >= w as i64 {
                                        continue;
                                    }
                                    let wv = p.conv_weight(b)[o * c * 9 + i * 9 + ky * 3 + kx] as f64;
                                    s += wv * cur[(i * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                        next[(o * ho + oy) * wo + ox] = if s > 0.0 { s } else { 0.0 };
                    }
                }
            }
            cur = next;
            c = cout;
            h = ho;
            w = wo;
        }
        let mut z = p.fc_bias() as f64;
        for o in 0..c {
            let mean: f64 = cur[o * h * w..(o + 1) * h * w].iter().sum::<f64>() / (h * w) as f64;
            z += p.fc_weight()[o] as f64 * mean;
        }
        1.0 / (1.0 + (-z).exp())
    }

    #[test]
    fn zero_network_outputs_half() {
        let p = ModelParams::zeros(Architecture::new(4));
        let (prob, cache) = forward(&p, &stack(4, 9, 9, 1)).unwrap();
        assert_eq!(cache.logit, 0.0);
        assert_eq!(prob, 0.5);
    }

    #[test]
    fn gap_of_constant_planes() {
        let v = Volume {
            c: 3,
            h: 2,
            w: 5,
            data: (0..3).flat_map(|c| vec![c as f64 * 0.25 + 1.0; 10]).collect(),
        };
        assert_eq!(global_average_pool(&v), vec![1.0, 1.25, 1.5]);
    }

    #[test]
    fn gap_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f64> = (0..2 * 16).map(|_| rng.gen()).collect();
        let v = Volume { c: 2, h: 4, w: 4, data };
        let mut perm = v.clone();
        for plane in perm.data.chunks_mut(16) {
            plane.reverse();
            plane.swap(3, 9);
        }
        let a = global_average_pool(&v);
        let b = global_average_pool(&perm);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn forward_matches_scalar_oracle() {
        for seed in 0..5 {
            let p = model(6, seed);
            let x = stack(6, 13, 10, seed + 100);
            let (prob, _) = forward(&p, &x).unwrap();
            assert!(prob > 0.0 && prob < 1.0);
            assert!((prob - scalar_forward(&p, &x)).abs() <= 1e-5);
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let p = model(6, 0);
        assert!(matches!(forward(&p, &stack(2, 8, 8, 0)), Err(Error::Dimension(_))));
    }

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, true) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, false) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(1.0 - 1e-12, true) < 1e-6);
        assert!((bce_loss(0.9, false) - 2.302585).abs() < 1e-5);
        assert!(bce_loss(0.0, true).is_finite());
        assert!(bce_loss(1.0, false).is_finite());
    }

    #[test]
    fn logit_gradient_at_zero() {
        let p = ModelParams::zeros(Architecture::new(2));
        let (_, cache) = forward(&p, &stack(2, 6, 6, 0)).unwrap();
        let g = backward(&p, &cache, true).unwrap();
        assert_eq!(*g.groups.last().unwrap(), vec![-0.5]);
    }

    #[test]
    fn zero_input_gives_zero_first_conv_weight_grads() {
        let p = model(3, 8);
        let x = FeatureStack::new(Tensor::zeros(3, 8, 8).unwrap());
        let (_, cache) = forward(&p, &x).unwrap();
        let g = backward(&p, &cache, true).unwrap();
        assert!(g.groups[0].iter().all(|&v| v == 0.0));
        // The FC bias still carries p − y.
        assert!(g.groups.last().unwrap()[0] != 0.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut p = model(2, 1);
        let (_, cache) = forward(&p, &stack(2, 8, 8, 2)).unwrap();
        p.groups[0].values[0] += 0.5;
        assert!(matches!(backward(&p, &cache, true), Err(Error::Contract(_))));
    }

    #[test]
    fn gradients_match_central_differences() {
        let p = model(6, 42);
        let x = stack(6, 16, 16, 43);
        for y in [true, false] {
            let (_, cache) = forward(&p, &x).unwrap();
            let base = cache.activation_signature();
            let g = backward(&p, &cache, y).unwrap();
            let h = 1e-3f32;
            let mut kinks = 0;
            for (gi, group) in p.groups.iter().enumerate() {
                let (mut num, mut den_a, mut den_b) = (0.0, 0.0, 0.0);
                for j in 0..group.values.len() {
                    let mut plus = p.clone();
                    plus.groups[gi].values[j] += h;
                    let mut minus = p.clone();
                    minus.groups[gi].values[j] -= h;
                    let (pp, cp) = forward(&plus, &x).unwrap();
                    let (pm, cm) = forward(&minus, &x).unwrap();
                    // The stencil straddles a ReLU kink; the difference quotient is not a derivative there.
                    if cp.activation_signature() != base || cm.activation_signature() != base {
                        kinks += 1;
                        continue;
                    }
                    let step = (plus.groups[gi].values[j] - minus.groups[gi].values[j]) as f64;
                    let fd = (bce_loss(pp, y) - bce_loss(pm, y)) / step;
                    let an = g.groups[gi][j];
                    num += (fd - an) * (fd - an);
                    den_a += an * an;
                    den_b += fd * fd;
                }
                let rel = num.sqrt() / den_a.sqrt().max(den_b.sqrt()).max(1e-12);
                assert!(rel < 1e-3, "{}: relative error {rel}", group.name);
            }
            assert!(kinks * 50 < p.arch.parameter_count(), "{kinks} kink crossings");
        }
    }

    #[test]
    fn layout_counts() {
        let a = Architecture::new(6);
        let names: Vec<_> = a.layout().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "conv3.weight", "conv3.bias", "fc.weight", "fc.bias"]
        );
        assert_eq!(a.parameter_count(), 8 * 54 + 8 + 16 * 72 + 16 + 32 * 144 + 32 + 32 + 1);
    }
}

