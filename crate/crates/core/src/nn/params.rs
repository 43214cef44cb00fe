use std::collections::HashSet;

use crate::error::{config_err, Result};
use crate::nn::{Real, Tensor};

/// Index of a parameter inside its [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named parameters with gradient accumulators and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct ParamSet<T = f32> {
    names: Vec<String>,
    params: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Real> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            params: Vec::new(),
            grads: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
        }
    }

    /// Registers a parameter. Names must be unique within the set.
    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        let zeros = Tensor::zeros(value.shape());
        self.names.push(name);
        self.grads.push(zeros.clone());
        self.first_moment.push(zeros.clone());
        self.second_moment.push(zeros);
        self.params.push(value);
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.grads[id.0]
    }

    /// Parameter value alongside its mutable gradient accumulator.
    pub fn value_and_grad(&mut self, id: ParamId) -> (&Tensor<T>, &mut Tensor<T>) {
        (&self.params[id.0], &mut self.grads[id.0])
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    pub fn grads_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = T::from_f64(max_norm / (norm + 1e-6));
            for g in &mut self.grads {
                for v in g.data_mut() {
                    *v = *v * scale;
                }
            }
        }
        norm
    }

    pub(crate) fn moments_mut(
        &mut self,
        id: ParamId,
    ) -> (&mut Tensor<T>, &Tensor<T>, &mut Tensor<T>, &mut Tensor<T>) {
        (
            &mut self.params[id.0],
            &self.grads[id.0],
            &mut self.first_moment[id.0],
            &mut self.second_moment[id.0],
        )
    }

    pub(crate) fn bump_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    pub fn first_moment(&self, id: ParamId) -> &Tensor<T> {
        &self.first_moment[id.0]
    }

    pub fn second_moment(&self, id: ParamId) -> &Tensor<T> {
        &self.second_moment[id.0]
    }

    /// Restores optimizer state, e.g. from a checkpoint.
    pub fn set_optimizer_state(
        &mut self,
        id: ParamId,
        first: Tensor<T>,
        second: Tensor<T>,
    ) -> Result<()> {
        let shape = self.params[id.0].shape();
        if first.shape() != shape || second.shape() != shape {
            return Err(config_err(format!(
                "moment shape mismatch for {}",
                self.names[id.0]
            )));
        }
        self.first_moment[id.0] = first;
        self.second_moment[id.0] = second;
        Ok(())
    }

    pub fn set_step_count(&mut self, step: u64) {
        self.step = step;
    }

    /// Copy of this set in another precision, with gradients and moments reset.
    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for (name, p) in self.names.iter().zip(&self.params) {
            out.add(name.clone(), p.cast());
        }
        out
    }

    /// Replaces parameter values by name, checking shapes. Every parameter must be covered.
    pub fn load_values<'a>(
        &mut self,
        values: impl IntoIterator<Item = (&'a str, Tensor<T>)>,
    ) -> Result<()> {
        let mut seen = HashSet::new();
        for (name, value) in values {
            let id = self
                .id(name)
                .ok_or_else(|| config_err(format!("unknown parameter {name}")))?;
            if value.shape() != self.params[id.0].shape() {
                return Err(config_err(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    value.shape(),
                    self.params[id.0].shape()
                )));
            }
            self.params[id.0] = value;
            seen.insert(id.0);
        }
        if seen.len() != self.params.len() {
            let missing: Vec<_> = (0..self.params.len())
                .filter(|i| !seen.contains(i))
                .map(|i| self.names[i].clone())
                .collect();
            return Err(config_err(format!("missing parameters: {missing:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_scales_to_max_norm() {
        let mut ps = ParamSet::<f64>::new();
        let id = ps.add("w", Tensor::zeros(&[4]));
        ps.grad_mut(id).data_mut().copy_from_slice(&[1.0, 1.0, 1.0, 1.0]);
        let pre = ps.clip_grad_norm(0.5);
        assert!((pre - 2.0).abs() < 1e-12);
        for &g in ps.grad(id).data() {
            assert!((g - 0.25).abs() < 1e-6);
        }
        assert!(ps.grad_norm() <= 0.5 + 1e-6);
    }

    #[test]
    fn load_values_requires_full_coverage() {
        let mut ps = ParamSet::<f32>::new();
        ps.add("a", Tensor::zeros(&[2]));
        ps.add("b", Tensor::zeros(&[1]));
        let err = ps.load_values([("a", Tensor::zeros(&[2]))]).unwrap_err();
        assert!(err.to_string().contains("b"));
        assert!(ps.load_values([("a", Tensor::zeros(&[3]))]).is_err());
    }
}
