use rand::Rng;

use crate::agent::arch::ArchConfig;
use crate::error::{config_err, Result};
use crate::glimpse::GlimpseConfig;
use crate::nn::activation::{relu_backward, relu_inplace, tanh_backward, tanh_inplace};
use crate::nn::{Affine, Conv2d, ConvCache, Lstm, LstmCache, ParamSet, Real};

const RELU_GAIN: f64 = std::f64::consts::SQRT_2;

/// The three GBAC networks. Parameters live in two groups so each can have its
/// own optimizer: `trunk` holds the glimpse and action networks, `location`
/// holds the location network.
#[derive(Debug, Clone)]
pub struct GbacNet<T: Real = f32> {
    pub arch: ArchConfig,
    pub glimpse: GlimpseConfig,
    pub trunk: ParamSet<T>,
    pub location: ParamSet<T>,
    convs: Vec<Conv2d>,
    conv_shapes: Vec<(usize, usize, usize)>,
    glimpse_fc: Affine,
    action_lstm: Lstm,
    actor: Affine,
    critic: Affine,
    loc_fc: Affine,
    merge: Affine,
    loc_lstm: Lstm,
    locator_hidden: Affine,
    locator_out: Affine,
}

/// A `steps x batch` block of inputs. Row `t * batch + b` is sequence `b` at step `t`.
#[derive(Debug, Clone, Copy)]
pub struct SeqInput<'a, T> {
    pub steps: usize,
    pub batch: usize,
    /// `[rows, num_patches, patch_size, patch_size]`
    pub glimpses: &'a [T],
    /// Location each glimpse was taken at, `[rows, 2]` as `(x, y)`.
    pub prev_locs: &'a [T],
    /// Zero the incoming recurrent state of this row.
    pub resets: &'a [bool],
    pub action_h0: &'a [T],
    pub action_c0: &'a [T],
    pub loc_h0: &'a [T],
    pub loc_c0: &'a [T],
}

#[derive(Debug, Clone)]
pub struct SeqOutput<T> {
    /// `[rows, actions]`
    pub logits: Vec<T>,
    pub values: Vec<T>,
    /// Locator means `[rows, 2]`, each component in `(-1, 1)`.
    pub means: Vec<T>,
    pub action_h: Vec<T>,
    pub action_c: Vec<T>,
    pub loc_h: Vec<T>,
    pub loc_c: Vec<T>,
}

/// Activations kept for [`GbacNet::backward`].
#[derive(Debug, Clone)]
pub struct NetCache<T> {
    rows: usize,
    conv_caches: Vec<ConvCache<T>>,
    conv_outs: Vec<Vec<T>>,
    k: Vec<T>,
    action_seq: LstmCache<T>,
    hs_a: Vec<T>,
    prev_locs: Vec<T>,
    loc_feat: Vec<T>,
    merged_in: Vec<T>,
    g: Vec<T>,
    loc_seq: LstmCache<T>,
    hs_l: Vec<T>,
    u: Vec<T>,
    means: Vec<T>,
}

impl<T: Real> GbacNet<T> {
    pub fn new<R: Rng + ?Sized>(arch: &ArchConfig, glimpse: &GlimpseConfig, rng: &mut R) -> Result<Self> {
        arch.validate(glimpse)?;
        let conv_shapes = arch.conv_shapes(glimpse)?;
        let mut trunk = ParamSet::new();
        let mut location = ParamSet::new();
        let convs = arch
            .conv_stack(glimpse)
            .iter()
            .zip(&conv_shapes)
            .enumerate()
            .map(|(i, (l, &(cin, _, _)))| {
                Conv2d::new(&mut trunk, &format!("glimpse.conv{i}"), cin, l.filters, l.kernel, l.stride, RELU_GAIN, rng)
            })
            .collect();
        let &(c, h, w) = conv_shapes.last().expect("non-empty");
        let (f, l, hd) = (arch.glimpse_fc, arch.loc_fc, arch.lstm);
        let glimpse_fc = Affine::new(&mut trunk, "glimpse.fc", c * h * w, f, RELU_GAIN, rng);
        let action_lstm = Lstm::new(&mut trunk, "action.lstm", f, hd, rng);
        let actor = Affine::new(&mut trunk, "action.actor", hd, arch.actions, 0.01, rng);
        let critic = Affine::new(&mut trunk, "action.critic", hd, 1, 1.0, rng);
        let loc_fc = Affine::new(&mut location, "location.fc", 2, l, RELU_GAIN, rng);
        let merge = Affine::new(&mut location, "location.merge", f + l, arch.merge_width(), RELU_GAIN, rng);
        let loc_lstm = Lstm::new(&mut location, "location.lstm", arch.merge_width(), hd, rng);
        let locator_hidden = Affine::new(&mut location, "location.locator_hidden", hd, l, RELU_GAIN, rng);
        let locator_out = Affine::new(&mut location, "location.locator_out", l, 2, 0.01, rng);
        Ok(Self {
            arch: arch.clone(),
            glimpse: *glimpse,
            trunk,
            location,
            convs,
            conv_shapes,
            glimpse_fc,
            action_lstm,
            actor,
            critic,
            loc_fc,
            merge,
            loc_lstm,
            locator_hidden,
            locator_out,
        })
    }

    pub fn cast<U: Real>(&self) -> GbacNet<U> {
        GbacNet {
            arch: self.arch.clone(),
            glimpse: self.glimpse,
            trunk: self.trunk.cast(),
            location: self.location.cast(),
            convs: self.convs.clone(),
            conv_shapes: self.conv_shapes.clone(),
            glimpse_fc: self.glimpse_fc,
            action_lstm: self.action_lstm,
            actor: self.actor,
            critic: self.critic,
            loc_fc: self.loc_fc,
            merge: self.merge,
            loc_lstm: self.loc_lstm,
            locator_hidden: self.locator_hidden,
            locator_out: self.locator_out,
        }
    }

    pub fn param_count(&self) -> usize {
        self.trunk.scalar_count() + self.location.scalar_count()
    }

    pub fn hidden(&self) -> usize {
        self.arch.lstm
    }

    pub fn zero_grad(&mut self) {
        self.trunk.zero_grad();
        self.location.zero_grad();
    }

    /// Conv stack, glimpse FC and ReLU for `rows` glimpses, returning `k`.
    fn glimpse_forward(&self, glimpses: &[T], rows: usize) -> Result<(Vec<T>, Vec<ConvCache<T>>, Vec<Vec<T>>)> {
        let (c0, h0, w0) = self.conv_shapes[0];
        if glimpses.len() != rows * c0 * h0 * w0 {
            return Err(config_err(format!(
                "glimpse batch has {} values, expected {rows}x{c0}x{h0}x{w0}",
                glimpses.len()
            )));
        }
        let mut caches = Vec::with_capacity(self.convs.len());
        let mut outs: Vec<Vec<T>> = Vec::with_capacity(self.convs.len());
        for (i, conv) in self.convs.iter().enumerate() {
            let (_, h, w) = self.conv_shapes[i];
            let input = if i == 0 { glimpses } else { &outs[i - 1] };
            let (mut y, cache) = conv.forward(&self.trunk, input, rows, h, w)?;
            relu_inplace(&mut y);
            caches.push(cache);
            outs.push(y);
        }
        let mut k = self.glimpse_fc.forward(&self.trunk, outs.last().expect("non-empty"), rows);
        relu_inplace(&mut k);
        Ok((k, caches, outs))
    }

    pub fn forward(&self, input: &SeqInput<'_, T>) -> Result<(SeqOutput<T>, NetCache<T>)> {
        let (steps, batch) = (input.steps, input.batch);
        let rows = steps * batch;
        let hd = self.arch.lstm;
        let state_len = batch * hd;
        if input.prev_locs.len() != rows * 2 || input.resets.len() != rows {
            return Err(config_err("sequence input arrays disagree on row count"));
        }
        for s in [input.action_h0, input.action_c0, input.loc_h0, input.loc_c0] {
            if s.len() != state_len {
                return Err(config_err(format!(
                    "recurrent state has {} values, expected {batch}x{hd}",
                    s.len()
                )));
            }
        }
        let (k, conv_caches, conv_outs) = self.glimpse_forward(input.glimpses, rows)?;

        let a = self.action_lstm.forward_seq(
            &self.trunk,
            &k,
            input.action_h0,
            input.action_c0,
            input.resets,
            steps,
            batch,
        );
        let logits = self.actor.forward(&self.trunk, &a.hs, rows);
        let values = self.critic.forward(&self.trunk, &a.hs, rows);

        let mut loc_feat = self.loc_fc.forward(&self.location, input.prev_locs, rows);
        relu_inplace(&mut loc_feat);
        let (f, l) = (self.arch.glimpse_fc, self.arch.loc_fc);
        let mut merged_in = Vec::with_capacity(rows * (f + l));
        for r in 0..rows {
            merged_in.extend_from_slice(&k[r * f..(r + 1) * f]);
            merged_in.extend_from_slice(&loc_feat[r * l..(r + 1) * l]);
        }
        let mut g = self.merge.forward(&self.location, &merged_in, rows);
        relu_inplace(&mut g);
        let ls = self.loc_lstm.forward_seq(
            &self.location,
            &g,
            input.loc_h0,
            input.loc_c0,
            input.resets,
            steps,
            batch,
        );
        let mut u = self.locator_hidden.forward(&self.location, &ls.hs, rows);
        relu_inplace(&mut u);
        let mut means = self.locator_out.forward(&self.location, &u, rows);
        tanh_inplace(&mut means);

        let out = SeqOutput {
            logits,
            values,
            means: means.clone(),
            action_h: a.h_last,
            action_c: a.c_last,
            loc_h: ls.h_last,
            loc_c: ls.c_last,
        };
        let cache = NetCache {
            rows,
            conv_caches,
            conv_outs,
            k,
            action_seq: a.cache,
            hs_a: a.hs,
            prev_locs: input.prev_locs.to_vec(),
            loc_feat,
            merged_in,
            g,
            loc_seq: ls.cache,
            hs_l: ls.hs,
            u,
            means,
        };
        Ok((out, cache))
    }

    /// Accumulates gradients of a scalar loss given its gradients w.r.t. the
    /// logits, values and locator means of a forward pass. The location
    /// branch also backpropagates into the glimpse network through `k`.
    pub fn backward(&mut self, cache: &NetCache<T>, d_logits: &[T], d_values: &[T], d_means: &[T]) {
        let rows = cache.rows;
        assert_eq!(d_logits.len(), rows * self.arch.actions);
        assert_eq!(d_values.len(), rows);
        assert_eq!(d_means.len(), rows * 2);
        let (f, l) = (self.arch.glimpse_fc, self.arch.loc_fc);

        // location branch
        let mut dm = d_means.to_vec();
        tanh_backward(&cache.means, &mut dm);
        let mut du = self
            .locator_out
            .backward(&mut self.location, &cache.u, &dm, rows, true)
            .expect("dx requested");
        relu_backward(&cache.u, &mut du);
        let dhs_l = self
            .locator_hidden
            .backward(&mut self.location, &cache.hs_l, &du, rows, true)
            .expect("dx requested");
        let mut dg = self
            .loc_lstm
            .backward_seq(&mut self.location, &cache.loc_seq, &dhs_l, true)
            .expect("dx requested");
        relu_backward(&cache.g, &mut dg);
        let dmerged = self
            .merge
            .backward(&mut self.location, &cache.merged_in, &dg, rows, true)
            .expect("dx requested");
        let mut dk = Vec::with_capacity(rows * f);
        let mut dlf = Vec::with_capacity(rows * l);
        for row in dmerged.chunks_exact(f + l) {
            dk.extend_from_slice(&row[..f]);
            dlf.extend_from_slice(&row[f..]);
        }
        relu_backward(&cache.loc_feat, &mut dlf);
        self.loc_fc.backward(&mut self.location, &cache.prev_locs, &dlf, rows, false);

        // action branch
        let mut dhs_a = self
            .actor
            .backward(&mut self.trunk, &cache.hs_a, d_logits, rows, true)
            .expect("dx requested");
        let dv = self
            .critic
            .backward(&mut self.trunk, &cache.hs_a, d_values, rows, true)
            .expect("dx requested");
        for (a, b) in dhs_a.iter_mut().zip(&dv) {
            *a = *a + *b;
        }
        let dk_a = self
            .action_lstm
            .backward_seq(&mut self.trunk, &cache.action_seq, &dhs_a, true)
            .expect("dx requested");
        for (a, b) in dk.iter_mut().zip(&dk_a) {
            *a = *a + *b;
        }

        // glimpse network
        relu_backward(&cache.k, &mut dk);
        let last = cache.conv_outs.last().expect("non-empty");
        let mut dy = self
            .glimpse_fc
            .backward(&mut self.trunk, last, &dk, rows, true)
            .expect("dx requested");
        for i in (0..self.convs.len()).rev() {
            relu_backward(&cache.conv_outs[i], &mut dy);
            match self.convs[i].backward(&mut self.trunk, &cache.conv_caches[i], &dy, rows, i > 0) {
                Some(dx) => dy = dx,
                None => break,
            }
        }
    }

    /// Glimpse network on a single glimpse `[num_patches, patch_size, patch_size]`.
    pub fn glimpse_net(&self, glimpse: &[T]) -> Result<Vec<T>> {
        Ok(self.glimpse_forward(glimpse, 1)?.0)
    }

    /// One step of the action network: `(logits, value, h', c')`.
    pub fn action_net(&self, k: &[T], h: &[T], c: &[T]) -> Result<(Vec<T>, T, Vec<T>, Vec<T>)> {
        self.check_step(k, h, c, self.arch.glimpse_fc)?;
        let s = self.action_lstm.forward_seq(&self.trunk, k, h, c, &[false], 1, 1);
        let logits = self.actor.forward(&self.trunk, &s.hs, 1);
        let value = self.critic.forward(&self.trunk, &s.hs, 1)[0];
        Ok((logits, value, s.h_last, s.c_last))
    }

    /// One step of the location network: `(mean, h', c')` with `mean = [x, y]`.
    pub fn location_net(&self, k: &[T], l_prev: [T; 2], h: &[T], c: &[T]) -> Result<([T; 2], Vec<T>, Vec<T>)> {
        self.check_step(k, h, c, self.arch.glimpse_fc)?;
        let mut lf = self.loc_fc.forward(&self.location, &l_prev, 1);
        relu_inplace(&mut lf);
        let mut cat = k.to_vec();
        cat.extend_from_slice(&lf);
        let mut g = self.merge.forward(&self.location, &cat, 1);
        relu_inplace(&mut g);
        let s = self.loc_lstm.forward_seq(&self.location, &g, h, c, &[false], 1, 1);
        let mut u = self.locator_hidden.forward(&self.location, &s.hs, 1);
        relu_inplace(&mut u);
        let mut m = self.locator_out.forward(&self.location, &u, 1);
        tanh_inplace(&mut m);
        Ok(([m[0], m[1]], s.h_last, s.c_last))
    }

    fn check_step(&self, k: &[T], h: &[T], c: &[T], width: usize) -> Result<()> {
        let hd = self.arch.lstm;
        if k.len() != width || h.len() != hd || c.len() != hd {
            return Err(config_err(format!(
                "expected feature width {width} and state width {hd}, got {}, {}, {}",
                k.len(),
                h.len(),
                c.len()
            )));
        }
        Ok(())
    }
}
