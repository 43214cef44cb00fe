use rand::Rng;

use crate::error::{config_err, Result};
use crate::nn::real::sigmoid;
use crate::nn::{gemm, init, ParamId, ParamSet, Real, Tensor};

/// LSTM cell with gate rows laid out as `[input, forget, candidate, output]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Activations retained for backpropagation through time.
#[derive(Debug, Clone)]
pub struct LstmCache<T> {
    steps: usize,
    batch: usize,
    xs: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    gates: Vec<T>,
    tanh_c: Vec<T>,
    resets: Vec<bool>,
}

/// Output of an unrolled sequence.
#[derive(Debug, Clone)]
pub struct LstmSeq<T> {
    /// Hidden state after every step, `[steps * batch, hidden]`.
    pub hs: Vec<T>,
    pub h_last: Vec<T>,
    pub c_last: Vec<T>,
    pub cache: LstmCache<T>,
}

impl Lstm {
    /// Small uniform weights, zero bias except the forget gate at +1.
    pub fn new<T: Real, R: Rng + ?Sized>(
        ps: &mut ParamSet<T>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = ps.add(
            format!("{name}.w_ih"),
            init::uniform_tensor(&[4 * hidden, input], bound, rng),
        );
        let w_hh = ps.add(
            format!("{name}.w_hh"),
            init::uniform_tensor(&[4 * hidden, hidden], bound, rng),
        );
        let mut b = Tensor::zeros(&[4 * hidden]);
        b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|v| *v = T::one());
        let bias = ps.add(format!("{name}.bias"), b);
        Self {
            w_ih,
            w_hh,
            bias,
            input,
            hidden,
        }
    }

    pub fn param_count(input: usize, hidden: usize) -> usize {
        4 * hidden * (input + hidden) + 4 * hidden
    }

    /// Unrolls `steps` steps over `batch` independent sequences.
    ///
    /// Row `t * batch + b` of `xs` is the input of sequence `b` at step `t`.
    /// Where `resets[t * batch + b]` is set, the incoming state of that row is
    /// zeroed before the step.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_seq<T: Real>(
        &self,
        ps: &ParamSet<T>,
        xs: &[T],
        h0: &[T],
        c0: &[T],
        resets: &[bool],
        steps: usize,
        batch: usize,
    ) -> LstmSeq<T> {
        let hd = self.hidden;
        let g4 = 4 * hd;
        let rows = steps * batch;
        assert_eq!(xs.len(), rows * self.input);
        assert_eq!(h0.len(), batch * hd);
        assert_eq!(c0.len(), batch * hd);
        assert_eq!(resets.len(), rows);

        // input projection for every step at once
        let bias = ps.get(self.bias).data();
        let mut pre = Vec::with_capacity(rows * g4);
        for _ in 0..rows {
            pre.extend_from_slice(bias);
        }
        gemm(false, true, rows, g4, self.input, xs, ps.get(self.w_ih).data(), T::one(), &mut pre);

        let w_hh = ps.get(self.w_hh).data();
        let mut h_prev = vec![T::zero(); rows * hd];
        let mut c_prev = vec![T::zero(); rows * hd];
        let mut tanh_c = vec![T::zero(); rows * hd];
        let mut hs = vec![T::zero(); rows * hd];
        let mut h = h0.to_vec();
        let mut c = c0.to_vec();
        for t in 0..steps {
            for b in 0..batch {
                if resets[t * batch + b] {
                    h[b * hd..(b + 1) * hd].iter_mut().for_each(|v| *v = T::zero());
                    c[b * hd..(b + 1) * hd].iter_mut().for_each(|v| *v = T::zero());
                }
            }
            let r0 = t * batch;
            h_prev[r0 * hd..(r0 + batch) * hd].copy_from_slice(&h);
            c_prev[r0 * hd..(r0 + batch) * hd].copy_from_slice(&c);
            let z = &mut pre[r0 * g4..(r0 + batch) * g4];
            gemm(false, true, batch, g4, hd, &h, w_hh, T::one(), z);
            for b in 0..batch {
                let zr = &mut z[b * g4..(b + 1) * g4];
                for j in 0..hd {
                    let i_g = sigmoid(zr[j]);
                    let f_g = sigmoid(zr[hd + j]);
                    let g_g = zr[2 * hd + j].tanh();
                    let o_g = sigmoid(zr[3 * hd + j]);
                    zr[j] = i_g;
                    zr[hd + j] = f_g;
                    zr[2 * hd + j] = g_g;
                    zr[3 * hd + j] = o_g;
                    let cn = f_g * c[b * hd + j] + i_g * g_g;
                    let tc = cn.tanh();
                    c[b * hd + j] = cn;
                    h[b * hd + j] = o_g * tc;
                    tanh_c[(r0 + b) * hd + j] = tc;
                }
            }
            hs[r0 * hd..(r0 + batch) * hd].copy_from_slice(&h);
        }
        LstmSeq {
            hs,
            h_last: h,
            c_last: c,
            cache: LstmCache {
                steps,
                batch,
                xs: xs.to_vec(),
                h_prev,
                c_prev,
                gates: pre,
                tanh_c,
                resets: resets.to_vec(),
            },
        }
    }

    /// Backpropagation through time from `dhs` (gradient w.r.t. every output
    /// hidden state). Gradients into the initial state are dropped.
    pub fn backward_seq<T: Real>(
        &self,
        ps: &mut ParamSet<T>,
        cache: &LstmCache<T>,
        dhs: &[T],
        want_dx: bool,
    ) -> Option<Vec<T>> {
        let hd = self.hidden;
        let g4 = 4 * hd;
        let (steps, batch) = (cache.steps, cache.batch);
        let rows = steps * batch;
        assert_eq!(dhs.len(), rows * hd);
        let mut dz = vec![T::zero(); rows * g4];
        let mut dh_next = vec![T::zero(); batch * hd];
        let mut dc_next = vec![T::zero(); batch * hd];
        let mut dh_rec = vec![T::zero(); batch * hd];
        let one = T::one();
        for t in (0..steps).rev() {
            let r0 = t * batch;
            for b in 0..batch {
                let r = r0 + b;
                let gates = &cache.gates[r * g4..(r + 1) * g4];
                let dzr = &mut dz[r * g4..(r + 1) * g4];
                for j in 0..hd {
                    let (i_g, f_g, g_g, o_g) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
                    let tc = cache.tanh_c[r * hd + j];
                    let dh = dhs[r * hd + j] + dh_next[b * hd + j];
                    let dc = dc_next[b * hd + j] + dh * o_g * (one - tc * tc);
                    dzr[j] = dc * g_g * i_g * (one - i_g);
                    dzr[hd + j] = dc * cache.c_prev[r * hd + j] * f_g * (one - f_g);
                    dzr[2 * hd + j] = dc * i_g * (one - g_g * g_g);
                    dzr[3 * hd + j] = dh * tc * o_g * (one - o_g);
                    dc_next[b * hd + j] = dc * f_g;
                }
            }
            if t > 0 {
                gemm(
                    false,
                    false,
                    batch,
                    hd,
                    g4,
                    &dz[r0 * g4..(r0 + batch) * g4],
                    ps.get(self.w_hh).data(),
                    T::zero(),
                    &mut dh_rec,
                );
                dh_next.copy_from_slice(&dh_rec);
            }
            for b in 0..batch {
                if cache.resets[r0 + b] {
                    dh_next[b * hd..(b + 1) * hd].iter_mut().for_each(|v| *v = T::zero());
                    dc_next[b * hd..(b + 1) * hd].iter_mut().for_each(|v| *v = T::zero());
                }
            }
        }
        {
            let (_, g) = ps.value_and_grad(self.w_ih);
            gemm(true, false, g4, self.input, rows, &dz, &cache.xs, T::one(), g.data_mut());
        }
        {
            let (_, g) = ps.value_and_grad(self.w_hh);
            gemm(true, false, g4, hd, rows, &dz, &cache.h_prev, T::one(), g.data_mut());
        }
        {
            let gb = ps.grad_mut(self.bias).data_mut();
            for row in dz.chunks_exact(g4) {
                for (g, &d) in gb.iter_mut().zip(row) {
                    *g = *g + d;
                }
            }
        }
        want_dx.then(|| {
            let mut dx = vec![T::zero(); rows * self.input];
            gemm(false, false, rows, self.input, g4, &dz, ps.get(self.w_ih).data(), T::zero(), &mut dx);
            dx
        })
    }
}

/// One LSTM step on a single vector: returns `(h', c')`.
pub fn lstm_step<T: Real>(
    cell: &Lstm,
    ps: &ParamSet<T>,
    x: &Tensor<T>,
    h: &Tensor<T>,
    c: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if x.len() != cell.input || h.len() != cell.hidden || c.len() != cell.hidden {
        return Err(config_err(format!(
            "lstm shape mismatch: x {:?}, h {:?}, c {:?} for cell {}->{}",
            x.shape(),
            h.shape(),
            c.shape(),
            cell.input,
            cell.hidden
        )));
    }
    let out = cell.forward_seq(ps, x.data(), h.data(), c.data(), &[false], 1, 1);
    Ok((
        Tensor::from_vec(&[cell.hidden], out.h_last)?,
        Tensor::from_vec(&[cell.hidden], out.c_last)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_difference, max_rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    fn zero_cell(input: usize, hidden: usize) -> (Lstm, ParamSet<f64>) {
        let mut ps = ParamSet::new();
        let cell = Lstm {
            w_ih: ps.add("w_ih", Tensor::zeros(&[4 * hidden, input])),
            w_hh: ps.add("w_hh", Tensor::zeros(&[4 * hidden, hidden])),
            bias: ps.add("b", Tensor::zeros(&[4 * hidden])),
            input,
            hidden,
        };
        (cell, ps)
    }

    #[test]
    fn zero_everything_gives_zero_hidden() {
        let (cell, ps) = zero_cell(3, 4);
        let (h, c) = lstm_step(&cell, &ps, &Tensor::zeros(&[3]), &Tensor::zeros(&[4]), &Tensor::zeros(&[4])).unwrap();
        assert!(h.data().iter().all(|&v| v == 0.0));
        assert!(c.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_and_closed_input_keep_cell() {
        let (cell, mut ps) = zero_cell(2, 3);
        {
            let b = ps.get_mut(cell.bias).data_mut();
            b[0..3].iter_mut().for_each(|v| *v = -100.0); // input gate -> 0
            b[3..6].iter_mut().for_each(|v| *v = 100.0); // forget gate -> 1
        }
        let c = Tensor::from_vec(&[3], vec![0.3, -0.8, 1.5]).unwrap();
        let h = Tensor::from_vec(&[3], vec![0.1, 0.2, -0.4]).unwrap();
        let x = Tensor::from_vec(&[2], vec![0.7, -0.2]).unwrap();
        let (_, c2) = lstm_step(&cell, &ps, &x, &h, &c).unwrap();
        for (a, b) in c2.data().iter().zip(c.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (cell, ps) = zero_cell(3, 4);
        assert!(lstm_step(&cell, &ps, &Tensor::zeros(&[2]), &Tensor::zeros(&[4]), &Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn unrolled_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut ps = ParamSet::<f64>::new();
        let cell = Lstm::new(&mut ps, "lstm", 3, 4, &mut rng);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let (steps, batch) = (3, 2);
        let xs: Vec<f64> = (0..steps * batch * 3).map(|_| u.sample(&mut rng)).collect();
        let h0: Vec<f64> = (0..batch * 4).map(|_| u.sample(&mut rng)).collect();
        let c0: Vec<f64> = (0..batch * 4).map(|_| u.sample(&mut rng)).collect();
        // sequence 1 resets before its last step
        let resets = vec![false, false, false, false, false, true];
        let probe: Vec<f64> = (0..steps * batch * 4).map(|_| u.sample(&mut rng)).collect();
        let loss = |ps: &ParamSet<f64>, xs: &[f64]| -> f64 {
            let out = cell.forward_seq(ps, xs, &h0, &c0, &resets, steps, batch);
            out.hs.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let out = cell.forward_seq(&ps, &xs, &h0, &c0, &resets, steps, batch);
        ps.zero_grad();
        let dx = cell.backward_seq(&mut ps, &out.cache, &probe, true).unwrap();
        let num_dx = central_difference(&xs, 1e-3, |x| loss(&ps, x));
        assert!(max_rel_error(&dx, &num_dx) < 1e-3);
        for id in [cell.w_ih, cell.w_hh, cell.bias] {
            let base = ps.get(id).data().to_vec();
            let num = central_difference(&base, 1e-3, |w| {
                let mut p = ps.clone();
                p.get_mut(id).data_mut().copy_from_slice(w);
                loss(&p, &xs)
            });
            assert!(max_rel_error(ps.grad(id).data(), &num) < 1e-3, "{}", ps.name(id));
        }
    }
}
