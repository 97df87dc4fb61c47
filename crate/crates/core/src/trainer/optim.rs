use crate::model::ParamSet;
use crate::tensor::Real;
use crate::{Error, Result};

/// AdamW coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn zeros_like(params: &ParamSet<T>) -> Self {
        let z: Vec<Vec<T>> = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        Self { m: z.clone(), v: z }
    }

    pub fn congruent_with(&self, params: &ParamSet<T>) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| m.len() == p.value.len() && v.len() == p.value.len())
    }
}

/// Fails with the first parameter whose gradient holds a NaN or infinity.
pub fn check_finite<T: Real>(params: &ParamSet<T>, grads: &[Vec<T>]) -> Result<()> {
    for (p, g) in params.iter().zip(grads) {
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteGradient(format!("{}[{i}] = {}", p.name, g[i])));
        }
    }
    Ok(())
}

/// One AdamW update with bias correction at 1-based step `t`. Decay
/// `p ← p·(1 − lr·wd)` is decoupled from the moments and only touches
/// linear and convolution weights.
pub fn adamw_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &[Vec<T>],
    state: &mut AdamState<T>,
    hyper: AdamHyper,
    t: u64,
    lr: f64,
    wd: f64,
) -> Result<()> {
    if grads.len() != params.len() || !state.congruent_with(params) {
        return Err(Error::shape("adamw_step", params.len(), grads.len()));
    }
    check_finite(params, grads)?;
    let (b1, b2) = (T::c(hyper.beta1), T::c(hyper.beta2));
    let c1 = T::c(1.0 - hyper.beta1.powf(t as f64));
    let c2 = T::c(1.0 - hyper.beta2.powf(t as f64));
    let eps = T::c(hyper.eps);
    let lr_t = T::c(lr);
    for (i, p) in params.iter_mut().enumerate() {
        let g = &grads[i];
        if g.len() != p.value.len() {
            return Err(Error::shape("adamw_step", p.value.len(), g.len()));
        }
        let shrink = if p.kind.decays() { T::c(1.0 - lr * wd) } else { T::one() };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.value.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (T::one() - b1) * g[j];
            v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
            let update = (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            *w = *w * shrink - lr_t * update;
        }
    }
    Ok(())
}

/// θ̄ ← m·θ̄ + (1 − m)·θ for every tensor.
pub fn ema_update<T: Real>(ema: &mut ParamSet<T>, student: &ParamSet<T>, momentum: f64) {
    // evaluated at 64-bit so the stored value is one rounding from exact
    let r = 1.0 - momentum;
    for (e, s) in ema.iter_mut().zip(student.iter()) {
        for (a, &b) in e.value.data_mut().iter_mut().zip(s.value.data()) {
            *a = T::c(momentum * a.f64() + r * b.f64());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ParamKind;
    use crate::tensor::Tensor;

    const H: AdamHyper = AdamHyper {
        beta1: 0.9,
        beta2: 0.99,
        eps: 1e-6,
    };

    fn single(kind: ParamKind, x: f64) -> ParamSet<f64> {
        let mut s = ParamSet::new();
        s.push("w", kind, Tensor::from_f64([1], &[x]).unwrap());
        s
    }

    #[test]
    fn zero_gradient_is_a_fixed_point_without_decay() {
        let mut p = single(ParamKind::Linear, 0.7);
        let mut st = AdamState::zeros_like(&p);
        adamw_step(&mut p, &[vec![0.0]], &mut st, H, 1, 1e-3, 0.0).unwrap();
        assert_eq!(p.get(0).value.data()[0], 0.7);
    }

    #[test]
    fn decay_is_multiplicative_and_grouped() {
        for (kind, expect) in [(ParamKind::Linear, 0.7 * (1.0 - 1e-3 * 0.1)), (ParamKind::Norm, 0.7)] {
            let mut p = single(kind, 0.7);
            let mut st = AdamState::zeros_like(&p);
            adamw_step(&mut p, &[vec![0.0]], &mut st, H, 1, 1e-3, 0.1).unwrap();
            assert_eq!(p.get(0).value.data()[0], expect);
        }
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = single(ParamKind::Linear, 0.7);
        let mut st = AdamState::zeros_like(&p);
        let err = adamw_step(&mut p, &[vec![f64::NAN]], &mut st, H, 1, 1e-3, 0.0).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(_)));
        assert_eq!(p.get(0).value.data()[0], 0.7);
    }

    #[test]
    fn ema_extremes() {
        let s = single(ParamKind::Linear, 2.0);
        let mut e = single(ParamKind::Linear, 1.0);
        ema_update(&mut e, &s, 1.0);
        assert_eq!(e.get(0).value.data()[0], 1.0);
        ema_update(&mut e, &s, 0.0);
        assert_eq!(e.get(0).value.data()[0], 2.0);
    }
}
