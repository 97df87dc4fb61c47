use std::collections::HashMap;

use crate::tensor::{Graph, Real, Tensor, Var};

/// Role of a parameter tensor; weight decay applies to linear and
/// convolution weights only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    Linear,
    Conv,
    Norm,
    Token,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Linear | ParamKind::Conv)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<T>,
}

/// Ordered, named parameter tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor<T>) -> usize {
        self.params.push(Param {
            name: name.into(),
            kind,
            value,
        });
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, i: usize) -> &Param<T> {
        &self.params[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param<T> {
        &mut self.params[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }

    /// Inserts every tensor as a graph leaf, in order.
    pub fn bind(&self, g: &mut Graph<T>, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| g.leaf(p.value.clone(), requires_grad))
            .collect()
    }

    /// Collects leaf gradients for bound variables; missing gradients are zeros.
    pub fn grads(&self, g: &mut Graph<T>, vars: &[Var]) -> Vec<Vec<T>> {
        self.params
            .iter()
            .zip(vars)
            .map(|(p, &v)| g.take_grad(v).unwrap_or_else(|| vec![T::zero(); p.value.len()]))
            .collect()
    }

    /// Copies values from `other` wherever names and shapes match; returns
    /// names that could not be filled.
    pub fn load_from(&mut self, other: &[(String, Tensor<T>)]) -> Vec<String> {
        let by_name: HashMap<&str, &Tensor<T>> = other.iter().map(|(n, t)| (n.as_str(), t)).collect();
        let mut missing = Vec::new();
        for p in &mut self.params {
            match by_name.get(p.name.as_str()) {
                Some(t) if t.shape() == p.value.shape() => p.value = (*t).clone(),
                _ => missing.push(p.name.clone()),
            }
        }
        missing
    }

    pub fn named_tensors(&self, prefix: &str) -> Vec<(String, Tensor<T>)> {
        self.params
            .iter()
            .map(|p| (format!("{prefix}{}", p.name), p.value.clone()))
            .collect()
    }
}

/// Student encoder θ and predictor φ.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub encoder: ParamSet<T>,
    pub predictor: ParamSet<T>,
}

/// Exponential-moving-average copy θ̄ of the encoder. It is only ever bound
/// into graphs without gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaEncoder<T>(pub ParamSet<T>);

impl<T: Real> EmaEncoder<T> {
    pub fn from_encoder(encoder: &ParamSet<T>) -> Self {
        Self(encoder.clone())
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.0
    }

    /// Structural congruence with the student encoder.
    pub fn congruent_with(&self, encoder: &ParamSet<T>) -> bool {
        self.0.len() == encoder.len()
            && self
                .0
                .iter()
                .zip(encoder.iter())
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }
}
