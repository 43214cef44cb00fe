//! Dual clipped-PPO objective with analytic gradients w.r.t. the network outputs.

use serde::Serialize;

use crate::agent::truncnorm::{dlogpdf_dmu_axis, logpdf_axis};
use crate::error::{GbacError, Result};
use crate::nn::categorical::{entropy, log_softmax};

/// Mean of `-min(r A, clip(r, 1-eps, 1+eps) A)`.
pub fn clipped_policy_loss(logp_new: &[f64], logp_old: &[f64], adv: &[f64], eps: f64) -> f64 {
    let n = logp_new.len();
    assert!(logp_old.len() == n && adv.len() == n);
    logp_new
        .iter()
        .zip(logp_old)
        .zip(adv)
        .map(|((&new, &old), &a)| {
            let r = (new - old).exp();
            -(r * a).min(r.clamp(1.0 - eps, 1.0 + eps) * a)
        })
        .sum::<f64>()
        / n as f64
}

/// `0.5 * mean(max((v - R)^2, (v_old + clip(v - v_old, -eps, eps) - R)^2))`.
pub fn clipped_value_loss(v_new: &[f64], v_old: &[f64], returns: &[f64], eps: f64) -> f64 {
    let n = v_new.len();
    assert!(v_old.len() == n && returns.len() == n);
    let mut total = 0.0;
    for i in 0..n {
        let u = v_new[i] - returns[i];
        let c = v_old[i] + (v_new[i] - v_old[i]).clamp(-eps, eps) - returns[i];
        total += (u * u).max(c * c);
    }
    0.5 * total / n as f64
}

/// Standardizes `adv` with its unbiased standard deviation.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = if adv.len() > 1 {
        adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    adv.iter().map(|a| (a - mean) / (std + 1e-8)).collect()
}

/// Coefficients and switches that shape the objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveCoefs {
    pub clip_action: f64,
    pub clip_loc: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub norm_adv: bool,
    pub clip_vloss: bool,
    /// Drop the location-policy term (random-location training).
    pub skip_location: bool,
}

/// One minibatch, flattened to `n` samples.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInput<'a> {
    /// `[n, actions]`
    pub logits: &'a [f64],
    pub actions: &'a [usize],
    pub old_action_logp: &'a [f64],
    /// Locator means `[n, 2]`.
    pub means: &'a [f64],
    /// Sampled locations `[n, 2]`.
    pub locs: &'a [f64],
    pub old_loc_logp: &'a [f64],
    pub loc_std: f64,
    pub values: &'a [f64],
    pub old_values: &'a [f64],
    pub returns: &'a [f64],
    pub advantages: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossComponents {
    pub policy_loss_a: f64,
    pub policy_loss_g: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl_a: f64,
    pub approx_kl_g: f64,
    pub clip_frac_a: f64,
    pub clip_frac_g: f64,
}

#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    pub loss: f64,
    pub components: LossComponents,
    pub d_logits: Vec<f64>,
    pub d_values: Vec<f64>,
    pub d_means: Vec<f64>,
}

struct Surrogate {
    loss: f64,
    kl: f64,
    clip_frac: f64,
    /// `d loss / d logp_new` per sample.
    grad: Vec<f64>,
}

fn surrogate(logp_new: &[f64], logp_old: &[f64], adv: &[f64], eps: f64) -> Surrogate {
    let n = logp_new.len() as f64;
    let mut s = Surrogate {
        loss: 0.0,
        kl: 0.0,
        clip_frac: 0.0,
        grad: Vec::with_capacity(logp_new.len()),
    };
    for ((&new, &old), &a) in logp_new.iter().zip(logp_old).zip(adv) {
        let log_r = new - old;
        let r = log_r.exp();
        let unclipped = r * a;
        let clipped = r.clamp(1.0 - eps, 1.0 + eps) * a;
        s.loss -= unclipped.min(clipped) / n;
        s.grad.push(if unclipped <= clipped { -unclipped / n } else { 0.0 });
        s.kl += ((r - 1.0) - log_r) / n;
        if (r - 1.0).abs() > eps {
            s.clip_frac += 1.0 / n;
        }
    }
    s
}

/// Loss `L_a + L_g + vf_coef * L_v - ent_coef * H` and its gradients.
pub fn total_objective(input: &ObjectiveInput<'_>, coefs: &ObjectiveCoefs) -> Result<ObjectiveOutput> {
    let n = input.actions.len();
    let a_count = input.logits.len() / n.max(1);
    let nf = n as f64;
    let adv = if coefs.norm_adv {
        normalize_advantages(input.advantages)
    } else {
        input.advantages.to_vec()
    };

    // action policy and entropy
    let mut logp_a = Vec::with_capacity(n);
    let mut probs = Vec::with_capacity(n * a_count);
    let mut logps = Vec::with_capacity(n * a_count);
    let mut ent = Vec::with_capacity(n);
    for (i, &act) in input.actions.iter().enumerate() {
        let lp = log_softmax(&input.logits[i * a_count..(i + 1) * a_count]);
        logp_a.push(lp[act]);
        ent.push(entropy(&lp));
        probs.extend(lp.iter().map(|l| l.exp()));
        logps.extend(lp);
    }
    let sa = surrogate(&logp_a, input.old_action_logp, &adv, coefs.clip_action);
    let mean_entropy = ent.iter().sum::<f64>() / nf;
    let mut d_logits = vec![0.0; n * a_count];
    for i in 0..n {
        for j in 0..a_count {
            let k = i * a_count + j;
            let onehot = if j == input.actions[i] { 1.0 } else { 0.0 };
            d_logits[k] = sa.grad[i] * (onehot - probs[k]) + coefs.ent_coef * probs[k] * (logps[k] + ent[i]) / nf;
        }
    }

    // location policy
    let mut d_means = vec![0.0; n * 2];
    let (mut loss_g, mut kl_g, mut clip_g) = (0.0, 0.0, 0.0);
    if !coefs.skip_location {
        let logp_g: Vec<f64> = (0..n)
            .map(|i| {
                (0..2)
                    .map(|ax| logpdf_axis(input.locs[2 * i + ax], input.means[2 * i + ax], input.loc_std))
                    .sum()
            })
            .collect();
        let sg = surrogate(&logp_g, input.old_loc_logp, &adv, coefs.clip_loc);
        for i in 0..n {
            for ax in 0..2 {
                d_means[2 * i + ax] =
                    sg.grad[i] * dlogpdf_dmu_axis(input.locs[2 * i + ax], input.means[2 * i + ax], input.loc_std);
            }
        }
        loss_g = sg.loss;
        kl_g = sg.kl;
        clip_g = sg.clip_frac;
    }

    // value
    let mut d_values = vec![0.0; n];
    let mut value_loss = 0.0;
    for i in 0..n {
        let u = input.values[i] - input.returns[i];
        let (sq, grad) = if coefs.clip_vloss {
            let c = input.old_values[i] + (input.values[i] - input.old_values[i]).clamp(-coefs.clip_action, coefs.clip_action)
                - input.returns[i];
            if u * u >= c * c {
                (u * u, u)
            } else {
                (c * c, 0.0)
            }
        } else {
            (u * u, u)
        };
        value_loss += 0.5 * sq / nf;
        d_values[i] = coefs.vf_coef * grad / nf;
    }

    let components = LossComponents {
        policy_loss_a: sa.loss,
        policy_loss_g: loss_g,
        value_loss,
        entropy: mean_entropy,
        approx_kl_a: sa.kl,
        approx_kl_g: kl_g,
        clip_frac_a: sa.clip_frac,
        clip_frac_g: clip_g,
    };
    for (name, v) in [
        ("policy_loss_a", components.policy_loss_a),
        ("policy_loss_g", components.policy_loss_g),
        ("value_loss", components.value_loss),
        ("entropy", components.entropy),
    ] {
        if !v.is_finite() {
            return Err(GbacError::Numerical(format!("non-finite {name} ({v})")));
        }
    }
    let loss = sa.loss + loss_g + coefs.vf_coef * value_loss - coefs.ent_coef * mean_entropy;
    Ok(ObjectiveOutput {
        loss,
        components,
        d_logits,
        d_values,
        d_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_difference, max_rel_error};

    #[test]
    fn policy_clip_examples() {
        let l = |r: f64, a: f64| clipped_policy_loss(&[r.ln()], &[0.0], &[a], 0.2);
        assert!((l(1.3, 1.0) + 1.2).abs() < 1e-12);
        assert!((l(0.5, -1.0) - 0.8).abs() < 1e-12);
        assert!((l(1.0, 0.37) + 0.37).abs() < 1e-12);
    }

    #[test]
    fn value_clip_examples() {
        assert_eq!(clipped_value_loss(&[0.4], &[0.4], &[0.4], 0.2), 0.0);
        assert!((clipped_value_loss(&[1.0], &[0.0], &[0.0], 0.2) - 0.5).abs() < 1e-12);
        assert!((clipped_value_loss(&[0.1], &[0.0], &[1.0], 0.2) - 0.405).abs() < 1e-12);
    }

    #[test]
    fn clipped_branch_has_zero_gradient() {
        for &(r, a) in &[(1.3, 1.0), (0.5, -1.0)] {
            let g = central_difference(&[f64::ln(r)], 1e-6, |x| clipped_policy_loss(x, &[0.0], &[a], 0.2));
            assert!(g[0].abs() < 1e-9);
        }
        let g = central_difference(&[f64::ln(1.1)], 1e-6, |x| clipped_policy_loss(x, &[0.0], &[1.0], 0.2));
        assert!((g[0] + 1.1).abs() < 1e-6);
    }

    struct Batch {
        logits: Vec<f64>,
        actions: Vec<usize>,
        old_a: Vec<f64>,
        means: Vec<f64>,
        locs: Vec<f64>,
        old_g: Vec<f64>,
        values: Vec<f64>,
        old_values: Vec<f64>,
        returns: Vec<f64>,
        adv: Vec<f64>,
    }

    impl Batch {
        fn input(&self) -> ObjectiveInput<'_> {
            ObjectiveInput {
                logits: &self.logits,
                actions: &self.actions,
                old_action_logp: &self.old_a,
                means: &self.means,
                locs: &self.locs,
                old_loc_logp: &self.old_g,
                loc_std: 0.1,
                values: &self.values,
                old_values: &self.old_values,
                returns: &self.returns,
                advantages: &self.adv,
            }
        }
    }

    /// Uniform logits over 6 actions with every ratio at 1.
    fn ratio_one_batch(adv: Vec<f64>) -> Batch {
        let n = adv.len();
        let means = vec![0.1; 2 * n];
        let locs = vec![0.15; 2 * n];
        let lg = logpdf_axis(0.15, 0.1, 0.1) * 2.0;
        let returns: Vec<f64> = (0..n).map(|i| i as f64 * 0.3).collect();
        Batch {
            logits: vec![0.0; 6 * n],
            actions: (0..n).map(|i| i % 6).collect(),
            old_a: vec![-(6f64.ln()); n],
            means,
            locs,
            old_g: vec![lg; n],
            values: returns.clone(),
            old_values: returns.clone(),
            returns,
            adv,
        }
    }

    fn coefs() -> ObjectiveCoefs {
        ObjectiveCoefs {
            clip_action: 0.1,
            clip_loc: 0.2,
            vf_coef: 0.5,
            ent_coef: 0.01,
            norm_adv: true,
            clip_vloss: true,
            skip_location: false,
        }
    }

    #[test]
    fn normalized_uniform_case() {
        let b = ratio_one_batch(vec![0.5, -1.0, 2.0, 0.1]);
        let out = total_objective(&b.input(), &coefs()).unwrap();
        assert!((out.loss + 0.017918).abs() < 1e-6, "{}", out.loss);
    }

    #[test]
    fn both_policies_contribute_equally() {
        let adv = vec![0.5, -1.0, 2.0, 0.1];
        let b = ratio_one_batch(adv.clone());
        let c = ObjectiveCoefs {
            vf_coef: 0.0,
            ent_coef: 0.0,
            norm_adv: false,
            ..coefs()
        };
        let out = total_objective(&b.input(), &c).unwrap();
        let mean = adv.iter().sum::<f64>() / 4.0;
        assert!((out.loss + 2.0 * mean).abs() < 1e-6);
    }

    #[test]
    fn zero_advantage_collapses_to_entropy() {
        let b = ratio_one_batch(vec![0.0; 4]);
        let out = total_objective(&b.input(), &coefs()).unwrap();
        assert!((out.loss + 0.01 * 6f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let n = 5;
        let mut s = 1u64;
        let mut rnd = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let logits: Vec<f64> = (0..n * 3).map(|_| rnd()).collect();
        let means: Vec<f64> = (0..n * 2).map(|_| rnd() * 0.8).collect();
        let locs: Vec<f64> = means.iter().map(|m| (m + 0.1 * rnd()).clamp(-1.0, 1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rnd()).collect();
        let b = Batch {
            actions: (0..n).map(|i| i % 3).collect(),
            old_a: (0..n).map(|_| -1.1 + 0.3 * rnd()).collect(),
            old_g: (0..n).map(|_| 2.0 + rnd()).collect(),
            old_values: values.iter().map(|v| v + 0.3 * rnd()).collect(),
            returns: (0..n).map(|_| rnd()).collect(),
            adv: (0..n).map(|_| rnd()).collect(),
            logits,
            means,
            locs,
            values,
        };
        let c = coefs();
        let out = total_objective(&b.input(), &c).unwrap();
        let num_logits = central_difference(&b.logits, 1e-6, |x| {
            total_objective(&ObjectiveInput { logits: x, ..b.input() }, &c).unwrap().loss
        });
        let num_means = central_difference(&b.means, 1e-6, |x| {
            total_objective(&ObjectiveInput { means: x, ..b.input() }, &c).unwrap().loss
        });
        let num_values = central_difference(&b.values, 1e-6, |x| {
            total_objective(&ObjectiveInput { values: x, ..b.input() }, &c).unwrap().loss
        });
        assert!(max_rel_error(&out.d_logits, &num_logits) < 1e-4);
        assert!(max_rel_error(&out.d_means, &num_means) < 1e-4);
        assert!(max_rel_error(&out.d_values, &num_values) < 1e-4);
    }

    #[test]
    fn normalization_is_scale_invariant() {
        let adv = vec![0.3, -0.2, 1.5, -0.9];
        let scaled: Vec<f64> = adv.iter().map(|a| a * 7.5).collect();
        let (a, b) = (normalize_advantages(&adv), normalize_advantages(&scaled));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-7);
        }
        // the action minimizing the surrogate is the same either way
        let best = |adv: &[f64]| {
            (0..adv.len())
                .min_by(|&i, &j| {
                    let li = clipped_policy_loss(&[0.05], &[0.0], &adv[i..=i], 0.2);
                    let lj = clipped_policy_loss(&[0.05], &[0.0], &adv[j..=j], 0.2);
                    li.total_cmp(&lj)
                })
                .unwrap()
        };
        assert_eq!(best(&a), best(&b));
    }

    #[test]
    fn skip_location_zeroes_location_terms() {
        let b = ratio_one_batch(vec![0.5, -1.0, 2.0, 0.1]);
        let c = ObjectiveCoefs {
            skip_location: true,
            ..coefs()
        };
        let out = total_objective(&b.input(), &c).unwrap();
        assert_eq!(out.components.policy_loss_g, 0.0);
        assert!(out.d_means.iter().all(|&v| v == 0.0));
    }
}
