//! Local gradient autocorrelation: the residual between a gradient-magnitude
//! map and its Gaussian-smoothed copy.
//!
//! Smoothing introduced by image generators suppresses high-frequency gradient
//! energy; subtracting the smoothed magnitude isolates that energy per pixel.

use crate::error::{Error, Result};
use crate::tensor::{correlate2d, gaussian_kernel, zip_map, Kernel2D, PaddingMode, Tensor, ZipOp};

/// First-order gradient filter pair used ahead of the magnitude stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum GradientOperator {
    #[default]
    Sobel,
    /// 2×2 diagonal differences, zero-extended to 3×3 with the 2×2 block in
    /// the top-left corner.
    Roberts,
}

impl GradientOperator {
    /// Returns `(W_x, W_y)`.
    pub fn kernels(self) -> (Kernel2D, Kernel2D) {
        match self {
            GradientOperator::Sobel => (
                fixed([[1.0, 0.0, -1.0], [2.0, 0.0, -2.0], [1.0, 0.0, -1.0]]),
                fixed([[1.0, 2.0, 1.0], [0.0, 0.0, 0.0], [-1.0, -2.0, -1.0]]),
            ),
            GradientOperator::Roberts => (
                fixed([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 0.0]]),
                fixed([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            ),
        }
    }
}

fn fixed(rows: [[f32; 3]; 3]) -> Kernel2D {
    Kernel2D::from_rows(rows).expect("3x3 kernel")
}

impl std::str::FromStr for GradientOperator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sobel" => Ok(GradientOperator::Sobel),
            "roberts" => Ok(GradientOperator::Roberts),
            other => Err(Error::Config(format!("unknown gradient operator `{other}`"))),
        }
    }
}

impl std::fmt::Display for GradientOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GradientOperator::Sobel => "sobel",
            GradientOperator::Roberts => "roberts",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LgaConfig {
    pub operator: GradientOperator,
    pub sigma: f64,
    pub epsilon: f32,
    pub padding: PaddingMode,
}

impl Default for LgaConfig {
    fn default() -> Self {
        Self {
            operator: GradientOperator::Sobel,
            sigma: 1.0,
            epsilon: 1e-6,
            padding: PaddingMode::Reflect,
        }
    }
}

impl LgaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Domain(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Domain(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// LGA map with the same `C×H×W` shape as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct LgaFeature {
    pub map: Tensor,
}

pub fn directional_gradients(
    x: &Tensor,
    op: GradientOperator,
    padding: PaddingMode,
) -> Result<(Tensor, Tensor)> {
    if x.height() < 3 || x.width() < 3 {
        return Err(Error::Dimension(format!(
            "gradient operator needs at least 3x3 pixels, got {}x{}",
            x.height(),
            x.width()
        )));
    }
    let (wx, wy) = op.kernels();
    Ok((correlate2d(x, &wx, padding)?, correlate2d(x, &wy, padding)?))
}

/// `sqrt(gx² + gy² + ε)`; every output is at least `√ε`.
pub fn gradient_magnitude(gx: &Tensor, gy: &Tensor, epsilon: f32) -> Result<Tensor> {
    zip_map(gx, gy, ZipOp::HypotEps(epsilon))
}

/// Gaussian-smoothed copy of the gradient magnitude.
pub fn autocorrelation(g: &Tensor, sigma: f64, padding: PaddingMode) -> Result<Tensor> {
    correlate2d(g, &gaussian_kernel(sigma)?, padding)
}

pub fn extract_lga(x: &Tensor, cfg: &LgaConfig) -> Result<LgaFeature> {
    cfg.validate()?;
    let (gx, gy) = directional_gradients(x, cfg.operator, cfg.padding)?;
    let g = gradient_magnitude(&gx, &gy, cfg.epsilon)?;
    let a = autocorrelation(&g, cfg.sigma, cfg.padding)?;
    Ok(LgaFeature {
        map: zip_map(&g, &a, ZipOp::Sub)?,
    })
}
