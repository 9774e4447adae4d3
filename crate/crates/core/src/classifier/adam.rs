use super::model::{Gradients, ModelParams};
use super::TrainConfig;
use crate::error::{Error, Result};

/// First/second moment accumulators, one per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f32>> = params.groups.iter().map(|g| vec![0.0; g.values.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<&TrainConfig> for AdamHyper {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }
}

/// One bias-corrected Adam update of a scalar at step `t` (1-based).
///
/// Returns the new `(param, m, v)`.
pub fn adam_scalar(param: f64, grad: f64, m: f64, v: f64, t: u64, h: &AdamHyper) -> (f64, f64, f64) {
    let m = h.beta1 * m + (1.0 - h.beta1) * grad;
    let v = h.beta2 * v + (1.0 - h.beta2) * grad * grad;
    let m_hat = m / (1.0 - h.beta1.powi(t as i32));
    let v_hat = v / (1.0 - h.beta2.powi(t as i32));
    (param - h.lr * m_hat / (v_hat.sqrt() + h.eps), m, v)
}

pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let shapes_agree = grads.groups.len() == params.groups.len()
        && state.m.len() == params.groups.len()
        && params.groups.iter().enumerate().all(|(i, g)| {
            let n = g.values.len();
            grads.groups[i].len() == n && state.m[i].len() == n && state.v[i].len() == n
        });
    if !shapes_agree {
        return Err(Error::Dimension(
            "gradient/optimizer state shapes do not match parameters".into(),
        ));
    }
    let hyper = AdamHyper::from(cfg);
    state.step += 1;
    let t = state.step;
    for (gi, group) in params.groups.iter_mut().enumerate() {
        for (j, p) in group.values.iter_mut().enumerate() {
            let (np, nm, nv) = adam_scalar(
                *p as f64,
                grads.groups[gi][j],
                state.m[gi][j] as f64,
                state.v[gi][j] as f64,
                t,
                &hyper,
            );
            *p = np as f32;
            state.m[gi][j] = nm as f32;
            state.v[gi][j] = nv as f32;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::model::Architecture;

    fn hyper(lr: f64) -> AdamHyper {
        AdamHyper {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = ModelParams::zeros(Architecture::new(2));
        let mut g = Gradients::zeros_like(&p);
        g.groups.iter_mut().flatten().for_each(|v| *v = 1.0);
        let mut s = AdamState::new(&p);
        let cfg = TrainConfig::default();
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        assert_eq!(s.step, 1);
        for v in p.groups.iter().flat_map(|g| &g.values) {
            assert!((*v as f64 + cfg.learning_rate).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = ModelParams::zeros(Architecture::new(2));
        p.groups[0].values[0] = 0.3;
        let before = p.clone();
        let mut s = AdamState::new(&p);
        s.m[0][0] = 0.5;
        s.v[0][0] = 0.25;
        s.step = 3;
        // A zero gradient with nonzero moments still moves the parameter, so
        // the unchanged-parameter case starts from fresh moments.
        let mut fresh = AdamState::new(&p);
        let g = Gradients::zeros_like(&p);
        let cfg = TrainConfig::default();
        adam_step(&mut p, &g, &mut fresh, &cfg).unwrap();
        assert_eq!(p, before);
        adam_step(&mut p, &g, &mut s, &cfg).unwrap();
        assert!((s.m[0][0] - 0.45).abs() < 1e-7);
        assert!((s.v[0][0] - 0.24975).abs() < 1e-7);
    }

    #[test]
    fn scripted_scalar_steps_match_hand_recursion() {
        let h = hyper(0.01);
        let grads = [0.5, -1.5, 2.0];
        // Hand-unrolled recursion.
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8f64, 0.01f64);
        let m1 = 0.1 * 0.5;
        let v1 = 0.001 * 0.25;
        let p1 = 1.0 - lr * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + 0.1 * -1.5;
        let v2 = b2 * v1 + 0.001 * 2.25;
        let p2 = p1 - lr * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);
        let m3 = b1 * m2 + 0.1 * 2.0;
        let v3 = b2 * v2 + 0.001 * 4.0;
        let p3 = p2 - lr * (m3 / (1.0 - b1 * b1 * b1)) / ((v3 / (1.0 - b2 * b2 * b2)).sqrt() + eps);
        let expected = [p1, p2, p3];

        let (mut p, mut m, mut v) = (1.0, 0.0, 0.0);
        for (t, &g) in grads.iter().enumerate() {
            (p, m, v) = adam_scalar(p, g, m, v, t as u64 + 1, &h);
            assert!((p - expected[t]).abs() <= 1e-8);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = ModelParams::zeros(Architecture::new(2));
        let other = ModelParams::zeros(Architecture::new(3));
        let g = Gradients::zeros_like(&other);
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut s, &TrainConfig::default()).is_err());
    }
}
