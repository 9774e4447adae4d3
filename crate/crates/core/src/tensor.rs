//! Dense `C×H×W` tensors and the sliding-window correlation engine.

use crate::error::{Error, Result};

/// A `channels × height × width` grid of `f32`, stored row-major per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "tensor dims must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "data length {} does not match {channels}x{height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![value; channels * height * width],
        )
    }

    /// Builds a tensor by evaluating `f(c, y, x)` at every position.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.index(c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> Tensor {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn mean_abs(&self) -> f64 {
        self.data.iter().map(|&v| (v as f64).abs()).sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Mirrors every channel left to right.
    pub fn flip_horizontal(&self) -> Tensor {
        Tensor::from_fn(self.channels, self.height, self.width, |c, y, x| {
            self.get(c, y, self.width - 1 - x)
        })
        .expect("shape preserved")
    }

    /// Channel-wise concatenation; spatial dims must match.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        if self.height != other.height || self.width != other.width {
            return Err(Error::Dimension(format!(
                "cannot concat {:?} with {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor::new(self.channels + other.channels, self.height, self.width, data)
    }
}

/// Boundary rule used when a window extends past the image edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum PaddingMode {
    /// Mirror about the edge pixel without repeating it (`-1 → 1`).
    #[default]
    Reflect,
    Zero,
    Replicate,
}

impl PaddingMode {
    pub const ALL: [PaddingMode; 3] = [PaddingMode::Reflect, PaddingMode::Zero, PaddingMode::Replicate];

    /// Maps a possibly out-of-range coordinate into `[0, len)`, or `None` for zero padding.
    #[inline]
    pub fn resolve(self, i: isize, len: usize) -> Option<usize> {
        let n = len as isize;
        if (0..n).contains(&i) {
            return Some(i as usize);
        }
        match self {
            PaddingMode::Zero => None,
            PaddingMode::Replicate => Some(i.clamp(0, n - 1) as usize),
            PaddingMode::Reflect => {
                if n == 1 {
                    return Some(0);
                }
                let period = 2 * (n - 1);
                let mut j = i.rem_euclid(period);
                if j >= n {
                    j = period - j;
                }
                Some(j as usize)
            }
        }
    }
}

impl std::str::FromStr for PaddingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "reflect" => Ok(PaddingMode::Reflect),
            "zero" => Ok(PaddingMode::Zero),
            "replicate" => Ok(PaddingMode::Replicate),
            other => Err(Error::Config(format!("unknown padding mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for PaddingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PaddingMode::Reflect => "reflect",
            PaddingMode::Zero => "zero",
            PaddingMode::Replicate => "replicate",
        };
        f.write_str(s)
    }
}

/// Small 2-D weight grid with odd side lengths, anchored at its center.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    kh: usize,
    kw: usize,
    weights: Vec<f32>,
}

impl Kernel2D {
    pub fn new(kh: usize, kw: usize, weights: Vec<f32>) -> Result<Self> {
        if kh == 0 || kw == 0 || kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Construction(format!(
                "kernel sides must be odd and positive, got {kh}x{kw}"
            )));
        }
        if weights.len() != kh * kw {
            return Err(Error::Construction(format!(
                "kernel {kh}x{kw} needs {} weights, got {}",
                kh * kw,
                weights.len()
            )));
        }
        Ok(Self { kh, kw, weights })
    }

    pub fn from_rows<const N: usize>(rows: [[f32; N]; N]) -> Result<Self> {
        Self::new(N, N, rows.iter().flatten().copied().collect())
    }

    pub fn identity() -> Self {
        Self::new(1, 1, vec![1.0]).expect("1x1 kernel")
    }

    pub fn kh(&self) -> usize {
        self.kh
    }

    pub fn kw(&self) -> usize {
        self.kw
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, dy: usize, dx: usize) -> f32 {
        self.weights[dy * self.kw + dx]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().map(|&w| w as f64).sum()
    }
}

/// Normalized Gaussian kernel with radius `⌈3σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel2D> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    gaussian_kernel_with_radius(sigma, (3.0 * sigma).ceil() as usize)
}

/// Normalized Gaussian kernel of side `2·radius + 1`.
pub fn gaussian_kernel_with_radius(sigma: f64, radius: usize) -> Result<Kernel2D> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let side = 2 * radius + 1;
    let r = radius as f64;
    let two_s2 = 2.0 * sigma * sigma;
    let raw: Vec<f64> = (0..side * side)
        .map(|i| {
            let y = (i / side) as f64 - r;
            let x = (i % side) as f64 - r;
            (-(x * x + y * y) / two_s2).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Kernel2D::new(side, side, raw.iter().map(|&w| (w / total) as f32).collect())
}

/// "Same"-size cross-correlation of every channel with `kernel` (no kernel flip).
pub fn correlate2d(input: &Tensor, kernel: &Kernel2D, padding: PaddingMode) -> Result<Tensor> {
    let (c, h, w) = input.shape();
    if kernel.kh > h || kernel.kw > w {
        return Err(Error::Dimension(format!(
            "kernel {}x{} larger than image {h}x{w}",
            kernel.kh, kernel.kw
        )));
    }
    let ry = kernel.kh / 2;
    let rx = kernel.kw / 2;
    let (ph, pw) = (h + 2 * ry, w + 2 * rx);

    // Source index for every padded coordinate; `None` reads as zero.
    let src_rows: Vec<Option<usize>> = (0..ph)
        .map(|py| padding.resolve(py as isize - ry as isize, h))
        .collect();
    let src_cols: Vec<Option<usize>> = (0..pw)
        .map(|px| padding.resolve(px as isize - rx as isize, w))
        .collect();

    let mut padded = vec![0f64; ph * pw];
    let mut acc = vec![0f64; w];
    let mut out = vec![0f32; c * h * w];
    for ch in 0..c {
        let plane = input.channel(ch);
        for (py, sy) in src_rows.iter().enumerate() {
            let dst = &mut padded[py * pw..(py + 1) * pw];
            match sy {
                Some(sy) => {
                    let src = &plane[sy * w..(sy + 1) * w];
                    for (d, sx) in dst.iter_mut().zip(&src_cols) {
                        *d = sx.map_or(0.0, |sx| src[sx] as f64);
                    }
                }
                None => dst.fill(0.0),
            }
        }
        // Terms are accumulated in (dy, dx) order for every output pixel.
        for y in 0..h {
            acc.fill(0.0);
            for dy in 0..kernel.kh {
                let prow = &padded[(y + dy) * pw..(y + dy + 1) * pw];
                let krow = &kernel.weights[dy * kernel.kw..(dy + 1) * kernel.kw];
                for (dx, &kw) in krow.iter().enumerate() {
                    let kw = kw as f64;
                    for (a, &v) in acc.iter_mut().zip(&prow[dx..dx + w]) {
                        *a += kw * v;
                    }
                }
            }
            for (o, &a) in out[(ch * h + y) * w..(ch * h + y + 1) * w].iter_mut().zip(&acc) {
                *o = a as f32;
            }
        }
    }
    Tensor::new(c, h, w, out)
}

/// Element-wise binary operation for [`zip_map`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZipOp {
    Add,
    Sub,
    /// `sqrt(a² + b² + ε)`
    HypotEps(f32),
}

pub fn zip_map(a: &Tensor, b: &Tensor, op: ZipOp) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| match op {
            ZipOp::Add => x + y,
            ZipOp::Sub => x - y,
            ZipOp::HypotEps(eps) => (x * x + y * y + eps).sqrt(),
        })
        .collect();
    Tensor::new(a.channels, a.height, a.width, data)
}
