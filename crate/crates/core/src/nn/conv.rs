use rand::Rng;

use crate::error::{config_err, Result};
use crate::nn::{gemm, init, ParamId, ParamSet, Real, Tensor};

/// Valid (unpadded) 2-D convolution over `[batch, channels, height, width]` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// im2col buffer kept from the forward pass.
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    cols: Vec<T>,
    height: usize,
    width: usize,
}

/// Output side length of a valid convolution, or an error if the kernel does not fit.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(config_err("kernel and stride must be positive"));
    }
    if kernel > input {
        return Err(config_err(format!(
            "kernel {kernel} larger than input extent {input}"
        )));
    }
    Ok((input - kernel) / stride + 1)
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Real, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let weight = ps.add(
            format!("{name}.weight"),
            init::orthogonal_tensor(&[out_channels, in_channels, kernel, kernel], gain, rng),
        );
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            stride,
        }
    }

    pub fn param_count(in_channels: usize, out_channels: usize, kernel: usize) -> usize {
        out_channels * in_channels * kernel * kernel + out_channels
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn output_hw(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        Ok((
            conv_out_dim(height, self.kernel, self.stride)?,
            conv_out_dim(width, self.kernel, self.stride)?,
        ))
    }

    fn im2col<T: Real>(&self, x: &[T], batch: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
        let k = self.kernel;
        let s = self.stride;
        let spatial = oh * ow;
        let ncols = batch * spatial;
        let mut cols = vec![T::zero(); self.patch_len() * ncols];
        for c in 0..self.in_channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for b in 0..batch {
                        let plane = &x[(b * self.in_channels + c) * h * w..][..h * w];
                        for oy in 0..oh {
                            let src = &plane[(oy * s + ki) * w + kj..];
                            let out = &mut dst[b * spatial + oy * ow..][..ow];
                            for (ox, o) in out.iter_mut().enumerate() {
                                *o = src[ox * s];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    /// Returns the pre-activation output `[batch, out_channels, oh, ow]`.
    pub fn forward<T: Real>(
        &self,
        ps: &ParamSet<T>,
        x: &[T],
        batch: usize,
        height: usize,
        width: usize,
    ) -> Result<(Vec<T>, ConvCache<T>)> {
        if x.len() != batch * self.in_channels * height * width {
            return Err(config_err(format!(
                "conv input has {} values, expected {batch}x{}x{height}x{width}",
                x.len(),
                self.in_channels
            )));
        }
        let (oh, ow) = self.output_hw(height, width)?;
        let spatial = oh * ow;
        let ncols = batch * spatial;
        let cols = self.im2col(x, batch, height, width, oh, ow);
        let mut channel_major = vec![T::zero(); self.out_channels * ncols];
        gemm(
            false,
            false,
            self.out_channels,
            ncols,
            self.patch_len(),
            ps.get(self.weight).data(),
            &cols,
            T::zero(),
            &mut channel_major,
        );
        let bias = ps.get(self.bias).data();
        let mut out = vec![T::zero(); batch * self.out_channels * spatial];
        for (o, &bo) in bias.iter().enumerate() {
            let src = &channel_major[o * ncols..(o + 1) * ncols];
            for b in 0..batch {
                let dst = &mut out[(b * self.out_channels + o) * spatial..][..spatial];
                for (d, &v) in dst.iter_mut().zip(&src[b * spatial..(b + 1) * spatial]) {
                    *d = v + bo;
                }
            }
        }
        Ok((
            out,
            ConvCache {
                cols,
                height,
                width,
            },
        ))
    }

    /// Accumulates parameter gradients from `dout` (`[batch, out_channels, oh, ow]`).
    pub fn backward<T: Real>(
        &self,
        ps: &mut ParamSet<T>,
        cache: &ConvCache<T>,
        dout: &[T],
        batch: usize,
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let (h, w) = (cache.height, cache.width);
        let (oh, ow) = self.output_hw(h, w).expect("validated in forward");
        let spatial = oh * ow;
        let ncols = batch * spatial;
        let mut dcm = vec![T::zero(); self.out_channels * ncols];
        for o in 0..self.out_channels {
            for b in 0..batch {
                dcm[o * ncols + b * spatial..][..spatial]
                    .copy_from_slice(&dout[(b * self.out_channels + o) * spatial..][..spatial]);
            }
        }
        {
            let (_, gw) = ps.value_and_grad(self.weight);
            gemm(
                false,
                true,
                self.out_channels,
                self.patch_len(),
                ncols,
                &dcm,
                &cache.cols,
                T::one(),
                gw.data_mut(),
            );
        }
        {
            let gb = ps.grad_mut(self.bias).data_mut();
            for (o, g) in gb.iter_mut().enumerate() {
                *g = *g + dcm[o * ncols..(o + 1) * ncols].iter().copied().sum();
            }
        }
        if !want_dx {
            return None;
        }
        let mut dcols = vec![T::zero(); self.patch_len() * ncols];
        gemm(
            true,
            false,
            self.patch_len(),
            ncols,
            self.out_channels,
            ps.get(self.weight).data(),
            &dcm,
            T::zero(),
            &mut dcols,
        );
        let k = self.kernel;
        let s = self.stride;
        let mut dx = vec![T::zero(); batch * self.in_channels * h * w];
        for c in 0..self.in_channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &dcols[row * ncols..(row + 1) * ncols];
                    for b in 0..batch {
                        let plane = &mut dx[(b * self.in_channels + c) * h * w..][..h * w];
                        for oy in 0..oh {
                            let base = (oy * s + ki) * w + kj;
                            for ox in 0..ow {
                                let idx = base + ox * s;
                                plane[idx] = plane[idx] + src[b * spatial + oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        Some(dx)
    }
}

/// Single-sample convolution with explicit kernels `[C', C, k, k]` and bias `[C']`.
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let [c, h, w] = match x.shape() {
        [c, h, w] => [*c, *h, *w],
        s => return Err(config_err(format!("conv input must be CxHxW, got {s:?}"))),
    };
    let [co, ci, kh, kw] = match kernels.shape() {
        [a, b, c, d] => [*a, *b, *c, *d],
        s => return Err(config_err(format!("kernels must be C'xCxkxk, got {s:?}"))),
    };
    if ci != c || kh != kw || bias.len() != co {
        return Err(config_err(format!(
            "conv shape mismatch: input {:?}, kernels {:?}, bias {:?}",
            x.shape(),
            kernels.shape(),
            bias.shape()
        )));
    }
    let mut ps = ParamSet::new();
    let weight = ps.add("w", kernels.clone());
    let b = ps.add("b", bias.clone());
    let layer = Conv2d {
        weight,
        bias: b,
        in_channels: c,
        out_channels: co,
        kernel: kh,
        stride,
    };
    let (oh, ow) = layer.output_hw(h, w)?;
    let (out, _) = layer.forward(&ps, x.data(), 1, h, w)?;
    Tensor::from_vec(&[co, oh, ow], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_difference, max_rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    #[test]
    fn all_ones_sum() {
        let x = Tensor::from_vec(&[1, 3, 3], vec![1.0f64; 9]).unwrap();
        let k = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn strided_mean_kernel_gives_block_means() {
        let data: Vec<f64> = (0..16).map(f64::from).collect();
        let x = Tensor::from_vec(&[1, 4, 4], data).unwrap();
        let k = Tensor::from_vec(&[1, 1, 2, 2], vec![0.25; 4]).unwrap();
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2]);
        assert_eq!(y.data(), &[2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn kernel_larger_than_input_is_rejected() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![0.0f64; 4]).unwrap();
        let k = Tensor::from_vec(&[1, 1, 3, 3], vec![1.0; 9]).unwrap();
        assert!(matches!(
            conv2d_forward(&x, &k, &Tensor::zeros(&[1]), 1),
            Err(crate::GbacError::Config(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ps = ParamSet::<f64>::new();
        let layer = Conv2d::new(&mut ps, "conv", 2, 3, 3, 2, 1.0, &mut rng);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        ps.get_mut(layer.bias).data_mut().iter_mut().for_each(|b| *b = u.sample(&mut rng));
        let batch = 2;
        let x: Vec<f64> = (0..batch * 2 * 8 * 8).map(|_| u.sample(&mut rng)).collect();
        let (y, cache) = layer.forward(&ps, &x, batch, 8, 8).unwrap();
        let probe: Vec<f64> = (0..y.len()).map(|_| u.sample(&mut rng)).collect();
        let loss = |ps: &ParamSet<f64>, x: &[f64]| -> f64 {
            let (y, _) = layer.forward(ps, x, batch, 8, 8).unwrap();
            y.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        ps.zero_grad();
        let dx = layer.backward(&mut ps, &cache, &probe, batch, true).unwrap();
        let num_dx = central_difference(&x, 1e-3, |xp| loss(&ps, xp));
        assert!(max_rel_error(&dx, &num_dx) < 1e-3);
        for id in [layer.weight, layer.bias] {
            let base = ps.get(id).data().to_vec();
            let num = central_difference(&base, 1e-3, |w| {
                let mut p = ps.clone();
                p.get_mut(id).data_mut().copy_from_slice(w);
                loss(&p, &x)
            });
            assert!(max_rel_error(ps.grad(id).data(), &num) < 1e-3);
        }
    }
}
