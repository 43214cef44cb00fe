use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::envs::{check_action, Env, EnvSpec, EnvStep, Tally};
use crate::error::Result;
use crate::glimpse::Frame;

const SIZE: i32 = 64;
const PADDLE_H: i32 = 10;
const PADDLE_W: i32 = 2;
const BALL: i32 = 2;
const AGENT_X: i32 = 60;
const OPP_X: i32 = 2;
const AGENT_SPEED: i32 = 3;
const OPP_SPEED: i32 = 2;
/// The opponent only moves while the ball approaches inside this many columns.
const OPP_REACH: i32 = 16;
const BALL_VX: i32 = 2;
const POINTS: u32 = 5;
const MAX_STEPS: u64 = 1000;
const SERVE_X: i32 = 32;
const VY_CHOICES: [i32; 4] = [-2, -1, 1, 2];

pub const NOOP: usize = 0;
pub const UP: usize = 1;
pub const DOWN: usize = 2;

/// Small Pong on a 64x64 frame. The agent owns the right paddle, a scripted
/// opponent the left one. An episode is a match of five points.
#[derive(Debug, Clone)]
pub struct MiniPong {
    spec: EnvSpec,
    rng: ChaCha8Rng,
    agent_y: i32,
    opp_y: i32,
    bx: i32,
    by: i32,
    vx: i32,
    vy: i32,
    points: u32,
    steps: u64,
    tally: Tally,
    needs_reset: bool,
}

impl MiniPong {
    pub fn new(seed: u64) -> Self {
        let mut env = Self {
            spec: EnvSpec {
                id: "minipong".into(),
                frame_h: SIZE as usize,
                frame_w: SIZE as usize,
                action_count: 3,
                max_episode_steps: MAX_STEPS,
                seed,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            agent_y: 0,
            opp_y: 0,
            bx: 0,
            by: 0,
            vx: 0,
            vy: 0,
            points: 0,
            steps: 0,
            tally: Tally::default(),
            needs_reset: true,
        };
        env.start_episode();
        env
    }

    /// `(ball_row, agent_paddle_row)` of the top-left corners.
    pub fn positions(&self) -> (i32, i32) {
        (self.by, self.agent_y)
    }

    /// Action a paddle-tracking player would take now.
    pub fn tracking_action(&self) -> usize {
        let d = (self.by + BALL / 2) - (self.agent_y + PADDLE_H / 2);
        if d > 1 {
            DOWN
        } else if d < -1 {
            UP
        } else {
            NOOP
        }
    }

    fn start_episode(&mut self) {
        self.agent_y = (SIZE - PADDLE_H) / 2;
        self.opp_y = (SIZE - PADDLE_H) / 2;
        self.points = 0;
        self.steps = 0;
        self.tally.clear();
        self.serve();
        self.needs_reset = false;
    }

    fn serve(&mut self) {
        self.bx = SERVE_X;
        self.by = self.rng.random_range(8..=SIZE - 10);
        self.vx = BALL_VX;
        self.vy = VY_CHOICES[self.rng.random_range(0..VY_CHOICES.len())];
    }

    fn overlaps_paddle(&self, top: i32) -> bool {
        self.by + BALL > top && self.by < top + PADDLE_H
    }

    fn render(&self) -> Frame {
        let mut px = vec![0f32; (SIZE * SIZE) as usize];
        let mut rect = |r0: i32, c0: i32, h: i32, w: i32| {
            for r in r0..r0 + h {
                for c in c0..c0 + w {
                    px[(r * SIZE + c) as usize] = 1.0;
                }
            }
        };
        rect(self.agent_y, AGENT_X, PADDLE_H, PADDLE_W);
        rect(self.opp_y, OPP_X, PADDLE_H, PADDLE_W);
        rect(self.by, self.bx, BALL, BALL);
        Frame::new(SIZE as usize, SIZE as usize, px).expect("pixels in range")
    }
}

impl Env for MiniPong {
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
        match action {
            UP => self.agent_y = (self.agent_y - AGENT_SPEED).max(0),
            DOWN => self.agent_y = (self.agent_y + AGENT_SPEED).min(SIZE - PADDLE_H),
            _ => {}
        }
        if self.vx < 0 && self.bx < OPP_REACH {
            let d = (self.by + BALL / 2) - (self.opp_y + PADDLE_H / 2);
            self.opp_y = (self.opp_y + d.clamp(-OPP_SPEED, OPP_SPEED)).clamp(0, SIZE - PADDLE_H);
        }
        self.bx += self.vx;
        self.by += self.vy;
        if self.by < 0 {
            self.by = -self.by;
            self.vy = -self.vy;
        } else if self.by > SIZE - BALL {
            self.by = 2 * (SIZE - BALL) - self.by;
            self.vy = -self.vy;
        }

        let mut reward = 0.0;
        if self.vx > 0 && self.bx + BALL >= AGENT_X {
            if self.overlaps_paddle(self.agent_y) {
                // steeper return the further from the paddle centre
                let off = (self.by + BALL / 2) - (self.agent_y + PADDLE_H / 2);
                let v = (off / 2).clamp(-2, 2);
                self.vx = -BALL_VX;
                self.vy = if v != 0 { v } else if off >= 0 { 1 } else { -1 };
            } else {
                reward = -1.0;
                self.points += 1;
                self.serve();
            }
        } else if self.vx < 0 && self.bx <= OPP_X + PADDLE_W {
            if self.overlaps_paddle(self.opp_y) {
                self.vx = BALL_VX;
                self.vy = VY_CHOICES[self.rng.random_range(0..VY_CHOICES.len())];
            } else {
                reward = 1.0;
                self.points += 1;
                self.serve();
            }
        }
        self.steps += 1;
        let done = self.points >= POINTS || self.steps >= MAX_STEPS;
        self.needs_reset = done;
        Ok(EnvStep {
            frame: self.render(),
            reward,
            done,
            info: self.tally.record(reward, done),
        })
    }
}
