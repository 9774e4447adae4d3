//! Post-processing perturbations for robustness sweeps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::image_io::jpeg_roundtrip;
use crate::error::{Error, Result};
use crate::tensor::{correlate2d, gaussian_kernel_with_radius, PaddingMode, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PerturbSpec {
    /// Gaussian blur with a `k×k` kernel and `σ = k/6`.
    GaussianBlur(usize),
    Resize(f64),
    Jpeg(u8),
}

impl PerturbSpec {
    pub fn defaults() -> Vec<PerturbSpec> {
        vec![
            PerturbSpec::GaussianBlur(7),
            PerturbSpec::GaussianBlur(9),
            PerturbSpec::Resize(0.5),
            PerturbSpec::Resize(1.5),
            PerturbSpec::Jpeg(75),
        ]
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PerturbSpec::GaussianBlur(_) => "blur",
            PerturbSpec::Resize(_) => "resize",
            PerturbSpec::Jpeg(_) => "jpeg",
        }
    }

    pub fn parameter(&self) -> String {
        match self {
            PerturbSpec::GaussianBlur(k) => k.to_string(),
            PerturbSpec::Resize(f) => f.to_string(),
            PerturbSpec::Jpeg(q) => q.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PerturbSpec::GaussianBlur(k) if k % 2 == 0 || k < 3 => {
                Err(Error::Domain(format!("blur kernel must be odd and at least 3, got {k}")))
            }
            PerturbSpec::Resize(f) if !(f > 0.0) || !f.is_finite() => {
                Err(Error::Domain(format!("resize factor must be positive, got {f}")))
            }
            PerturbSpec::Jpeg(q) if !(1..=100).contains(&q) => {
                Err(Error::Domain(format!("JPEG quality must be in 1..=100, got {q}")))
            }
            _ => Ok(()),
        }
    }

    /// Applies the perturbation; the result is clamped to `[0, 1]`.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.validate()?;
        match *self {
            PerturbSpec::GaussianBlur(k) => gaussian_blur(x, k),
            PerturbSpec::Resize(f) => resize(x, f).map(|t| t.clamp01()),
            PerturbSpec::Jpeg(q) => jpeg_roundtrip(x, q),
        }
    }
}

impl fmt::Display for PerturbSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.parameter())
    }
}

impl FromStr for PerturbSpec {
    type Err = Error;

    /// `blur:<k>`, `resize:<factor>` or `jpeg:<quality>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad perturbation `{s}`"));
        let (kind, arg) = s.trim().split_once(':').ok_or_else(bad)?;
        let spec = match kind.trim() {
            "blur" => PerturbSpec::GaussianBlur(arg.trim().parse().map_err(|_| bad())?),
            "resize" => PerturbSpec::Resize(arg.trim().parse().map_err(|_| bad())?),
            "jpeg" => PerturbSpec::Jpeg(arg.trim().parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// Normalized `k×k` Gaussian blur with `σ = k/6`, Reflect padding.
pub fn gaussian_blur(x: &Tensor, k: usize) -> Result<Tensor> {
    if k % 2 == 0 {
        return Err(Error::Domain(format!("blur kernel side must be odd, got {k}")));
    }
    if k > x.height().min(x.width()) {
        return Err(Error::Dimension(format!(
            "blur kernel {k} exceeds image {}x{}",
            x.height(),
            x.width()
        )));
    }
    let kernel = gaussian_kernel_with_radius(k as f64 / 6.0, k / 2)?;
    Ok(correlate2d(x, &kernel, PaddingMode::Reflect)?.clamp01())
}

/// Bilinear resampling with half-pixel centers; output side = `round(side · factor)`.
pub fn resize(x: &Tensor, factor: f64) -> Result<Tensor> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::Domain(format!("resize factor must be positive, got {factor}")));
    }
    let (c, h, w) = x.shape();
    let oh = (h as f64 * factor).round() as usize;
    let ow = (w as f64 * factor).round() as usize;
    if oh == 0 || ow == 0 {
        return Err(Error::Domain(format!(
            "resize by {factor} collapses {h}x{w} to {oh}x{ow}"
        )));
    }
    // Source coordinate and the two taps with their weights, per output index.
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|d| {
                let src = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = taps(oh, h);
    let xs = taps(ow, w);
    Tensor::from_fn(c, oh, ow, |ch, y, xx| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[xx];
        let p = |a, b| x.get(ch, a, b) as f64;
        let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
        let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
        (top * (1.0 - fy) + bottom * fy) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gaussian_kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(c, h, w, |_, _, _| rng.gen::<f32>()).unwrap()
    }

    #[test]
    fn blur_constant_is_unchanged() {
        let x = Tensor::filled(3, 12, 12, 0.3).unwrap();
        let y = gaussian_blur(&x, 7).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.3).abs() <= 1e-6));
    }

    #[test]
    fn blur_impulse_response_is_kernel() {
        let mut x = Tensor::zeros(1, 15, 15).unwrap();
        x.set(0, 7, 7, 1.0);
        let y = gaussian_blur(&x, 7).unwrap();
        let k = gaussian_kernel_with_radius(7.0 / 6.0, 3).unwrap();
        for dy in 0..7 {
            for dx in 0..7 {
                assert_eq!(y.get(0, 4 + dy, 4 + dx), k.at(dy, dx));
            }
        }
    }

    #[test]
    fn blur_twice_approximates_wider_blur() {
        let x = noise(1, 40, 40, 3);
        let twice = gaussian_blur(&gaussian_blur(&x, 7).unwrap(), 7).unwrap();
        let sigma = (2.0f64).sqrt() * 7.0 / 6.0;
        let once = correlate2d(&x, &gaussian_kernel(sigma).unwrap(), PaddingMode::Reflect).unwrap();
        for y in 10..30 {
            for xx in 10..30 {
                assert!((twice.get(0, y, xx) - once.get(0, y, xx)).abs() <= 2e-2);
            }
        }
    }

    #[test]
    fn blur_rejects_even_and_oversized_kernels() {
        let x = noise(1, 8, 8, 0);
        assert!(matches!(gaussian_blur(&x, 6), Err(Error::Domain(_))));
        assert!(matches!(gaussian_blur(&x, 9), Err(Error::Dimension(_))));
    }

    #[test]
    fn resize_identity_and_constant() {
        let x = noise(2, 9, 7, 1);
        assert_eq!(resize(&x, 1.0).unwrap(), x);
        let flat = Tensor::filled(1, 10, 10, 0.6).unwrap();
        for f in [0.5, 1.5, 0.33] {
            let y = resize(&flat, f).unwrap();
            let side = (10.0 * f as f64).round() as usize;
            assert_eq!(y.shape(), (1, side, side));
            assert!(y.data().iter().all(|&v| (v - 0.6).abs() < 1e-6));
        }
    }

    #[test]
    fn resize_ramp_by_half() {
        // Column ramp 0,1,2,3; half-pixel centers land on 0.5 and 2.5.
        let x = Tensor::from_fn(1, 4, 4, |_, _, j| j as f32).unwrap();
        let y = resize(&x, 0.5).unwrap();
        assert_eq!(y.shape(), (1, 2, 2));
        for r in 0..2 {
            assert_eq!(y.get(0, r, 0), 0.5);
            assert_eq!(y.get(0, r, 1), 2.5);
        }
        // Upscale: output 6 samples at src = (d + 0.5)·(4/6) − 0.5.
        let y = resize(&x, 1.5).unwrap();
        let want = [0.0, 0.5, 1.1666666, 1.8333334, 2.5, 3.0];
        for (d, w) in want.iter().enumerate() {
            assert!((y.get(0, 0, d) - w).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_degenerate() {
        let x = noise(1, 3, 3, 0);
        assert!(matches!(resize(&x, 0.1), Err(Error::Domain(_))));
        assert!(matches!(resize(&x, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn parse_specs() {
        assert_eq!("blur:7".parse::<PerturbSpec>().unwrap(), PerturbSpec::GaussianBlur(7));
        assert_eq!("resize:0.5".parse::<PerturbSpec>().unwrap(), PerturbSpec::Resize(0.5));
        assert_eq!("jpeg:75".parse::<PerturbSpec>().unwrap(), PerturbSpec::Jpeg(75));
        assert!("blur:8".parse::<PerturbSpec>().is_err());
        assert!("sharpen:1".parse::<PerturbSpec>().is_err());
        for p in PerturbSpec::defaults() {
            assert_eq!(p.to_string().parse::<PerturbSpec>().unwrap(), p);
        }
    }

    #[test]
    fn perturbations_stay_in_range() {
        let x = noise(3, 24, 24, 8);
        for p in PerturbSpec::defaults() {
            let y = p.apply(&x).unwrap();
            assert!(y.all_finite());
            assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
