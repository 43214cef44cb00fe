use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::{check_action, Env, EnvSpec, EnvStep, Tally};
use crate::error::{config_err, Result};
use crate::glimpse::Frame;

const SIZE: i32 = 96;
const TARGET: i32 = 4;
const CURSOR: i32 = 6;
const SPEED: i32 = 6;
const MAX_STEPS: u64 = 200;
const STEP_PENALTY: f32 = -0.01;
const TARGET_VALUE: f32 = 1.0;
const CURSOR_VALUE: f32 = 0.5;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;
pub const NOOP: usize = 4;

/// Move a cursor onto a small bright target placed at random each episode.
#[derive(Debug, Clone)]
pub struct SeekDot {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    /// Top-left `(row, col)` of the target and the cursor.
    target: (i32, i32),
    cursor: (i32, i32),
    steps: u64,
    tally: Tally,
    needs_reset: bool,
    /// Positions used by the next reset instead of random ones.
    forced: Option<((i32, i32), (i32, i32))>,
}

impl SeekDot {
    pub fn new(seed: u64) -> Self {
        let mut env = Self {
            spec: EnvSpec {
                id: "seekdot".into(),
                frame_h: SIZE as usize,
                frame_w: SIZE as usize,
                action_count: 5,
                max_episode_steps: MAX_STEPS,
                seed,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            target: (0, 0),
            cursor: (0, 0),
            steps: 0,
            tally: Tally::default(),
            needs_reset: true,
            forced: None,
        };
        env.start_episode();
        env
    }

    /// Fixes the target and cursor top-left corners for the next episode.
    pub fn place(&mut self, target: (i32, i32), cursor: (i32, i32)) -> Result<()> {
        let fits = |(r, c): (i32, i32), s: i32| r >= 0 && c >= 0 && r + s <= SIZE && c + s <= SIZE;
        if !fits(target, TARGET) || !fits(cursor, CURSOR) {
            return Err(config_err("seekdot placement outside the frame"));
        }
        self.forced = Some((target, cursor));
        Ok(())
    }

    pub fn target(&self) -> (i32, i32) {
        self.target
    }

    pub fn cursor(&self) -> (i32, i32) {
        self.cursor
    }

    pub fn overlapping(&self) -> bool {
        let (tr, tc) = self.target;
        let (cr, cc) = self.cursor;
        tr < cr + CURSOR && cr < tr + TARGET && tc < cc + CURSOR && cc < tc + TARGET
    }

    /// Action that moves the cursor toward the target along the longer axis.
    pub fn greedy_action(&self) -> usize {
        let dr = (self.target.0 + TARGET / 2) - (self.cursor.0 + CURSOR / 2);
        let dc = (self.target.1 + TARGET / 2) - (self.cursor.1 + CURSOR / 2);
        if dr == 0 && dc == 0 {
            NOOP
        } else if dr.abs() >= dc.abs() {
            if dr > 0 { DOWN } else { UP }
        } else if dc > 0 {
            RIGHT
        } else {
            LEFT
        }
    }

    fn start_episode(&mut self) {
        if let Some((t, c)) = self.forced.take() {
            self.target = t;
            self.cursor = c;
        } else {
            self.target = (
                self.rng.random_range(0..=SIZE - TARGET),
                self.rng.random_range(0..=SIZE - TARGET),
            );
            loop {
                self.cursor = (
                    self.rng.random_range(0..=SIZE - CURSOR),
                    self.rng.random_range(0..=SIZE - CURSOR),
                );
                if !self.overlapping() {
                    break;
                }
            }
        }
        self.steps = 0;
        self.tally.clear();
        self.needs_reset = false;
    }

    fn render(&self) -> Frame {
        let mut px = vec![0f32; (SIZE * SIZE) as usize];
        let mut rect = |(r0, c0): (i32, i32), s: i32, v: f32| {
            for r in r0..r0 + s {
                for c in c0..c0 + s {
                    px[(r * SIZE + c) as usize] = v;
                }
            }
        };
        rect(self.cursor, CURSOR, CURSOR_VALUE);
        rect(self.target, TARGET, TARGET_VALUE);
        Frame::new(SIZE as usize, SIZE as usize, px).expect("pixels in range")
    }
}

impl Env for SeekDot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: Option<u64>) -> Result<Frame> {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
            self.spec.seed = s;
        }
        self.start_episode();
        Ok(self.render())
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        check_action(&self.spec, action, self.steps)?;
        if self.needs_reset {
            self.start_episode();
        }
        if !self.overlapping() {
            let (dr, dc) = match action {
                UP => (-SPEED, 0),
                DOWN => (SPEED, 0),
                LEFT => (0, -SPEED),
                RIGHT => (0, SPEED),
                _ => (0, 0),
            };
            self.cursor = (
                (self.cursor.0 + dr).clamp(0, SIZE - CURSOR),
                (self.cursor.1 + dc).clamp(0, SIZE - CURSOR),
            );
        }
        self.steps += 1;
        let hit = self.overlapping();
        let reward = if hit { 1.0 } else { STEP_PENALTY };
        let done = hit || self.steps >= MAX_STEPS;
        self.needs_reset = done;
        Ok(EnvStep {
            frame: self.render(),
            reward,
            done,
            info: self.tally.record(reward, done),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn episode(env: &mut SeekDot, mut policy: impl FnMut(&SeekDot) -> usize) -> f64 {
        loop {
            let s = env.step(policy(env)).unwrap();
            if let Some(info) = s.info {
                return info.episode_return;
            }
        }
    }

    #[test]
    fn spawn_on_target_pays_immediately() {
        let mut env = SeekDot::new(0);
        env.place((40, 40), (39, 39)).unwrap();
        env.reset(None).unwrap();
        let s = env.step(NOOP).unwrap();
        assert_eq!(s.reward, 1.0);
        assert!(s.done);
    }

    #[test]
    fn greedy_beats_random() {
        let mut env = SeekDot::new(1);
        let greedy: f64 = (0..50).map(|_| episode(&mut env, SeekDot::greedy_action)).sum::<f64>() / 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut env = SeekDot::new(1);
        let random: f64 = (0..50).map(|_| episode(&mut env, |_| rng.random_range(0..5))).sum::<f64>() / 50.0;
        assert!(greedy >= 0.0, "{greedy}");
        assert!(random < greedy, "{random} vs {greedy}");
    }

    #[test]
    fn rewards_and_lengths_bounded() {
        let mut env = SeekDot::new(5);
        for t in 0..3000u64 {
            let s = env.step((t % 5) as usize).unwrap();
            assert!(s.reward == 1.0 || s.reward == STEP_PENALTY);
            if let Some(info) = s.info {
                assert!(info.length <= MAX_STEPS);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut env = SeekDot::new(11);
            (0..400).map(|t| env.step(t % 5).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
