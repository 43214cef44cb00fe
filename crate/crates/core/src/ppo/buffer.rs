use crate::agent::AgentState;
use crate::ppo::gae::compute_gae;

/// Recurrent state of both LSTMs for a batch of sequences, `[batch, hidden]` each.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecurrentBatch {
    pub action_h: Vec<f32>,
    pub action_c: Vec<f32>,
    pub loc_h: Vec<f32>,
    pub loc_c: Vec<f32>,
}

impl RecurrentBatch {
    pub fn push(&mut self, s: &AgentState) {
        self.action_h.extend_from_slice(&s.action_h);
        self.action_c.extend_from_slice(&s.action_c);
        self.loc_h.extend_from_slice(&s.loc_h);
        self.loc_c.extend_from_slice(&s.loc_c);
    }

    fn extend_from(&mut self, other: &RecurrentBatch, idx: usize, hidden: usize) {
        let r = idx * hidden..(idx + 1) * hidden;
        self.action_h.extend_from_slice(&other.action_h[r.clone()]);
        self.action_c.extend_from_slice(&other.action_c[r.clone()]);
        self.loc_h.extend_from_slice(&other.loc_h[r.clone()]);
        self.loc_c.extend_from_slice(&other.loc_c[r]);
    }
}

/// One rollout of `num_steps` steps from `num_envs` environments.
/// Per-step arrays are indexed `t * num_envs + env`.
#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub num_steps: usize,
    pub num_envs: usize,
    pub segment_len: usize,
    pub pixels: usize,
    pub hidden: usize,
    pub glimpses: Vec<f32>,
    /// Location each glimpse was observed at, `(x, y)`.
    pub prev_locs: Vec<f32>,
    pub actions: Vec<usize>,
    pub action_logp: Vec<f64>,
    /// Sampled next location, `(x, y)`.
    pub locs: Vec<f32>,
    pub loc_logp: Vec<f64>,
    pub values: Vec<f32>,
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
    /// Recurrent state was zeroed right before this step.
    pub resets: Vec<bool>,
    /// State at the start of every segment, ordered `chunk * num_envs + env`.
    pub segment_states: RecurrentBatch,
    pub bootstrap: Vec<f32>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    len: usize,
}

/// Gathered rows of a set of segments, laid out `t * batch + b`.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub steps: usize,
    pub batch: usize,
    pub glimpses: Vec<f32>,
    pub prev_locs: Vec<f32>,
    pub resets: Vec<bool>,
    pub state: RecurrentBatch,
    pub actions: Vec<usize>,
    pub action_logp: Vec<f64>,
    pub locs: Vec<f64>,
    pub loc_logp: Vec<f64>,
    pub values: Vec<f64>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Buffer row of every minibatch row.
    pub rows: Vec<usize>,
}

impl RolloutBuffer {
    pub fn new(num_steps: usize, num_envs: usize, segment_len: usize, pixels: usize, hidden: usize) -> Self {
        assert!(segment_len > 0 && num_steps % segment_len == 0);
        let n = num_steps * num_envs;
        Self {
            num_steps,
            num_envs,
            segment_len,
            pixels,
            hidden,
            glimpses: Vec::with_capacity(n * pixels),
            prev_locs: Vec::with_capacity(n * 2),
            actions: Vec::with_capacity(n),
            action_logp: Vec::with_capacity(n),
            locs: Vec::with_capacity(n * 2),
            loc_logp: Vec::with_capacity(n),
            values: Vec::with_capacity(n),
            rewards: vec![0.0; n],
            dones: vec![false; n],
            resets: Vec::with_capacity(n),
            segment_states: RecurrentBatch::default(),
            bootstrap: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
            len: 0,
        }
    }

    pub fn clear(&mut self) {
        self.glimpses.clear();
        self.prev_locs.clear();
        self.actions.clear();
        self.action_logp.clear();
        self.locs.clear();
        self.loc_logp.clear();
        self.values.clear();
        self.rewards.iter_mut().for_each(|r| *r = 0.0);
        self.dones.iter_mut().for_each(|d| *d = false);
        self.resets.clear();
        self.segment_states = RecurrentBatch::default();
        self.bootstrap.clear();
        self.advantages.clear();
        self.returns.clear();
        self.len = 0;
    }

    pub fn capacity(&self) -> usize {
        self.num_steps * self.num_envs
    }

    /// Number of steps recorded so far (rows / num_envs).
    pub fn steps_filled(&self) -> usize {
        self.len / self.num_envs
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity()
    }

    pub fn num_segments(&self) -> usize {
        self.num_envs * (self.num_steps / self.segment_len)
    }

    /// Records the action-time half of a step for the next environment in order.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn push_action(
        &mut self,
        glimpse: &[f32],
        prev_loc: [f32; 2],
        action: usize,
        action_logp: f64,
        loc: [f32; 2],
        loc_logp: f64,
        value: f32,
        reset: bool,
    ) {
        assert!(self.len < self.capacity(), "rollout buffer full");
        self.glimpses.extend_from_slice(glimpse);
        self.prev_locs.extend_from_slice(&prev_loc);
        self.actions.push(action);
        self.action_logp.push(action_logp);
        self.locs.extend_from_slice(&loc);
        self.loc_logp.push(loc_logp);
        self.values.push(value);
        self.resets.push(reset);
        self.len += 1;
    }

    pub(crate) fn set_outcome(&mut self, row: usize, reward: f32, done: bool) {
        self.rewards[row] = reward;
        self.dones[row] = done;
    }

    /// GAE per environment from the stored values and `bootstrap[env]`.
    pub fn finish(&mut self, bootstrap: Vec<f32>, gamma: f64, lambda: f64) {
        assert!(self.is_full(), "finish called on a partial rollout");
        assert_eq!(bootstrap.len(), self.num_envs);
        let (t_max, n) = (self.num_steps, self.num_envs);
        self.advantages = vec![0.0; t_max * n];
        self.returns = vec![0.0; t_max * n];
        for e in 0..n {
            let col = |v: &[f32]| (0..t_max).map(|t| v[t * n + e] as f64).collect::<Vec<_>>();
            let dones: Vec<bool> = (0..t_max).map(|t| self.dones[t * n + e]).collect();
            let (adv, ret) = compute_gae(&col(&self.rewards), &col(&self.values), &dones, bootstrap[e] as f64, gamma, lambda);
            for t in 0..t_max {
                self.advantages[t * n + e] = adv[t];
                self.returns[t * n + e] = ret[t];
            }
        }
        self.bootstrap = bootstrap;
    }

    /// Rows of the given segments (segment id `chunk * num_envs + env`).
    pub fn gather(&self, segments: &[usize]) -> Minibatch {
        let (n, l, px, hd) = (self.num_envs, self.segment_len, self.pixels, self.hidden);
        let b = segments.len();
        let rows: Vec<usize> = (0..l)
            .flat_map(|t| {
                segments.iter().map(move |&s| {
                    let (chunk, env) = (s / n, s % n);
                    (chunk * l + t) * n + env
                })
            })
            .collect();
        let mut mb = Minibatch {
            steps: l,
            batch: b,
            glimpses: Vec::with_capacity(rows.len() * px),
            prev_locs: Vec::with_capacity(rows.len() * 2),
            resets: Vec::with_capacity(rows.len()),
            state: RecurrentBatch::default(),
            actions: Vec::with_capacity(rows.len()),
            action_logp: Vec::with_capacity(rows.len()),
            locs: Vec::with_capacity(rows.len() * 2),
            loc_logp: Vec::with_capacity(rows.len()),
            values: Vec::with_capacity(rows.len()),
            returns: Vec::with_capacity(rows.len()),
            advantages: Vec::with_capacity(rows.len()),
            rows: Vec::new(),
        };
        for &s in segments {
            mb.state.extend_from(&self.segment_states, s, hd);
        }
        for (i, &r) in rows.iter().enumerate() {
            mb.glimpses.extend_from_slice(&self.glimpses[r * px..(r + 1) * px]);
            mb.prev_locs.extend_from_slice(&self.prev_locs[2 * r..2 * r + 2]);
            // the stored segment state already reflects any reset at its first step
            mb.resets.push(i >= b && self.resets[r]);
            mb.actions.push(self.actions[r]);
            mb.action_logp.push(self.action_logp[r]);
            mb.locs.extend(self.locs[2 * r..2 * r + 2].iter().map(|&v| v as f64));
            mb.loc_logp.push(self.loc_logp[r]);
            mb.values.push(self.values[r] as f64);
            mb.returns.push(self.returns[r]);
            mb.advantages.push(self.advantages[r]);
        }
        mb.rows = rows;
        mb
    }
}
