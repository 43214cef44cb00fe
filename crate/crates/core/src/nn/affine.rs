use rand::Rng;

use crate::error::{config_err, Result};
use crate::nn::{gemm, init, ParamId, ParamSet, Real, Tensor};

/// Fully connected layer `y = x W^T + b` over a batch of row vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Affine {
    /// Orthogonal weights scaled by `gain`, zero bias.
    pub fn new<T: Real, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        input: usize,
        output: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let weight = ps.add(
            format!("{name}.weight"),
            init::orthogonal_tensor(&[output, input], gain, rng),
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[output]));
        Self {
            weight,
            bias,
            input,
            output,
        }
    }

    pub fn param_count(input: usize, output: usize) -> usize {
        input * output + output
    }

    pub fn forward<T: Real>(&self, ps: &ParamSet<T>, x: &[T], batch: usize) -> Vec<T> {
        debug_assert_eq!(x.len(), batch * self.input);
        let b = ps.get(self.bias).data();
        let mut y = Vec::with_capacity(batch * self.output);
        for _ in 0..batch {
            y.extend_from_slice(b);
        }
        gemm(
            false,
            true,
            batch,
            self.output,
            self.input,
            x,
            ps.get(self.weight).data(),
            T::one(),
            &mut y,
        );
        y
    }

    /// Accumulates weight and bias gradients; returns `dL/dx` when requested.
    pub fn backward<T: Real>(
        &self,
        ps: &mut ParamSet<T>,
        x: &[T],
        dy: &[T],
        batch: usize,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        debug_assert_eq!(dy.len(), batch * self.output);
        {
            let (_, gw) = ps.value_and_grad(self.weight);
            gemm(true, false, self.output, self.input, batch, dy, x, T::one(), gw.data_mut());
        }
        {
            let gb = ps.grad_mut(self.bias).data_mut();
            for row in dy.chunks_exact(self.output) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
        }
        want_dx.then(|| {
            let mut dx = vec![T::zero(); batch * self.input];
            gemm(
                false,
                false,
                batch,
                self.input,
                self.output,
                dy,
                ps.get(self.weight).data(),
                T::zero(),
                &mut dx,
            );
            dx
        })
    }
}

/// `W x + b` for a single input vector.
pub fn affine_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (out, inp) = match w.shape() {
        [o, i] => (*o, *i),
        s => return Err(config_err(format!("affine weight must be 2-d, got {s:?}"))),
    };
    if x.len() != inp || b.len() != out {
        return Err(config_err(format!(
            "affine shape mismatch: x {:?}, W {:?}, b {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let mut y = b.data().to_vec();
    gemm(false, true, 1, out, inp, x.data(), w.data(), T::one(), &mut y);
    Tensor::from_vec(&[out], y)
}
