//! C ABI over the `gbac` crate.
//!
//! Every function returns a [`GbacStatus`]. On failure the message is kept in
//! thread-local storage and can be read with [`gbac_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gbac::agent::{param_count, ActMode, Agent, AgentState, ArchConfig};
use gbac::envs::{make_env, Env};
use gbac::glimpse::{extract_glimpse_into, pixel_budget, Frame, GlimpseConfig, Loc};
use gbac::run::{checkpoint, RunConfig};
use gbac::GbacError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Config = 10,
    Numerical = 11,
    Env = 12,
    Frame = 13,
    Protocol = 14,
    Connection = 15,
    Checkpoint = 16,
    DigestMismatch = 17,
    Io = 18,
    Panic = 99,
}

/// Sampling mode for [`gbac_agent_act`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GbacMode {
    Sample = 0,
    Greedy = 1,
    RandomLoc = 2,
}

impl From<GbacMode> for ActMode {
    fn from(m: GbacMode) -> Self {
        match m {
            GbacMode::Sample => ActMode::Sample,
            GbacMode::Greedy => ActMode::Greedy,
            GbacMode::RandomLoc => ActMode::RandomLoc,
        }
    }
}

/// One decision of an agent.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GbacStep {
    pub action: u32,
    /// Glimpse center chosen for the next frame.
    pub loc_x: f32,
    pub loc_y: f32,
    pub value: f32,
    pub action_logprob: f64,
    pub loc_logprob: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GbacEnvSpec {
    pub frame_h: usize,
    pub frame_w: usize,
    pub action_count: usize,
    pub max_episode_steps: u64,
}

/// Agent plus its recurrent state and sampling stream.
pub struct GbacAgent {
    agent: Agent,
    state: AgentState,
    rng: ChaCha8Rng,
}

/// A built-in environment instance.
pub struct GbacEnv {
    env: Box<dyn Env>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &GbacError) -> GbacStatus {
    match e {
        GbacError::Config(_) => GbacStatus::Config,
        GbacError::Numerical(_) | GbacError::NonFinite { .. } => GbacStatus::Numerical,
        GbacError::Env { .. } => GbacStatus::Env,
        GbacError::Frame(_) => GbacStatus::Frame,
        GbacError::Protocol(_) => GbacStatus::Protocol,
        GbacError::Connection(_) => GbacStatus::Connection,
        GbacError::Checkpoint(_) => GbacStatus::Checkpoint,
        GbacError::DigestMismatch { .. } => GbacStatus::DigestMismatch,
        GbacError::Io(_) | GbacError::Json(_) => GbacStatus::Io,
    }
}

struct Fail(GbacStatus, String);

impl From<GbacError> for Fail {
    fn from(e: GbacError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GbacStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GbacStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            GbacStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(GbacStatus::NullPointer, format!("{what} is NULL"))
}

/// # Safety
/// `p` must be NULL or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(GbacStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// # Safety
/// `p` must be NULL or point to `len` readable floats.
unsafe fn frame_arg(p: *const f32, h: usize, w: usize) -> Result<Frame, Fail> {
    if p.is_null() {
        return Err(null("frame"));
    }
    let n = h
        .checked_mul(w)
        .ok_or_else(|| Fail(GbacStatus::InvalidArgument, "frame size overflows".into()))?;
    let px = std::slice::from_raw_parts(p, n).to_vec();
    Ok(Frame::new(h, w, px)?)
}

fn out_slice<'a>(p: *mut f32, len: usize, need: usize, what: &str) -> Result<&'a mut [f32], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err(Fail(
            GbacStatus::BufferTooSmall,
            format!("{what} holds {len} floats, {need} needed"),
        ));
    }
    // SAFETY: the caller guarantees `p` points to `len >= need` writable floats.
    Ok(unsafe { std::slice::from_raw_parts_mut(p, need) })
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gbac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gbac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Number of glimpse pixels: `num_patches * patch_size^2`.
///
/// # Safety
/// `out` must be NULL or point to a writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn gbac_pixel_budget(num_patches: usize, patch_size: usize, out: *mut usize) -> GbacStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = GlimpseConfig::new(num_patches, patch_size);
        cfg.validate()?;
        *out = pixel_budget(&cfg);
        Ok(())
    })
}

/// Trainable scalar count of the network described by `arch_json`
/// (an `ArchConfig` object) for the given glimpse geometry.
///
/// # Safety
/// `arch_json` must be a NUL-terminated string; `out` a writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn gbac_param_count(
    arch_json: *const c_char,
    num_patches: usize,
    patch_size: usize,
    out: *mut usize,
) -> GbacStatus {
    guard(|| {
        let text = str_arg(arch_json, "arch_json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let arch: ArchConfig = serde_json::from_str(text)
            .map_err(|e| Fail(GbacStatus::Config, format!("arch_json: {e}")))?;
        *out = param_count(&arch, &GlimpseConfig::new(num_patches, patch_size))?;
        Ok(())
    })
}

/// Extracts the glimpse centered at `(loc_x, loc_y)` from an `h x w` frame of
/// values in `[0, 1]`. Patches are written focal first, each row-major.
/// `center_used`, if not NULL, receives the two coordinates actually observed.
///
/// # Safety
/// `frame` must hold `h * w` floats, `out` `out_len` floats, and
/// `center_used` two floats when not NULL.
#[no_mangle]
pub unsafe extern "C" fn gbac_extract_glimpse(
    frame: *const f32,
    h: usize,
    w: usize,
    loc_x: f32,
    loc_y: f32,
    num_patches: usize,
    patch_size: usize,
    out: *mut f32,
    out_len: usize,
    center_used: *mut f32,
) -> GbacStatus {
    guard(|| {
        let frame = frame_arg(frame, h, w)?;
        let cfg = GlimpseConfig::new(num_patches, patch_size);
        cfg.validate()?;
        let out = out_slice(out, out_len, pixel_budget(&cfg), "out")?;
        let used = extract_glimpse_into(&frame, Loc::new(loc_x, loc_y), &cfg, out)?;
        if !center_used.is_null() {
            *center_used = used.x;
            *center_used.add(1) = used.y;
        }
        Ok(())
    })
}

/// Creates a freshly initialised agent for the run config given as JSON text.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gbac_agent_new(config_json: *const c_char, seed: u64, out: *mut *mut GbacAgent) -> GbacStatus {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::from_json(text)?;
        cfg.validate()?;
        let agent = Agent::new(&cfg.arch, &cfg.glimpse, seed)?;
        *out = wrap_agent(agent, seed);
        Ok(())
    })
}

fn wrap_agent(agent: Agent, seed: u64) -> *mut GbacAgent {
    let state = agent.initial_state();
    Box::into_raw(Box::new(GbacAgent {
        agent,
        state,
        rng: ChaCha8Rng::seed_from_u64(seed),
    }))
}

/// Loads a checkpoint, refusing it if its digest does not match the run config file.
///
/// # Safety
/// Both paths must be NUL-terminated strings; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gbac_agent_load(
    config_path: *const c_char,
    checkpoint_path: *const c_char,
    seed: u64,
    out: *mut *mut GbacAgent,
) -> GbacStatus {
    guard(|| {
        let cfg_path = str_arg(config_path, "config_path")?;
        let ckpt_path = str_arg(checkpoint_path, "checkpoint_path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::load(Path::new(cfg_path))?;
        let loaded = checkpoint::load(Path::new(ckpt_path), &cfg)?;
        *out = wrap_agent(loaded.agent, seed);
        Ok(())
    })
}

/// Releases an agent. NULL is ignored.
///
/// # Safety
/// `agent` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gbac_agent_free(agent: *mut GbacAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// # Safety
/// `agent` must be a live handle; `out` a writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn gbac_agent_param_count(agent: *const GbacAgent, out: *mut usize) -> GbacStatus {
    guard(|| {
        let a = agent.as_ref().ok_or_else(|| null("agent"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = a.agent.param_count();
        Ok(())
    })
}

/// Clears the recurrent state and recenters the glimpse, as at an episode start.
///
/// # Safety
/// `agent` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gbac_agent_reset(agent: *mut GbacAgent) -> GbacStatus {
    guard(|| {
        let a = agent.as_mut().ok_or_else(|| null("agent"))?;
        a.state.reset();
        Ok(())
    })
}

/// Acts on one `h x w` frame and advances the agent's recurrent state.
///
/// # Safety
/// `agent` must be a live handle, `frame` hold `h * w` floats, `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn gbac_agent_act(
    agent: *mut GbacAgent,
    frame: *const f32,
    h: usize,
    w: usize,
    mode: GbacMode,
    out: *mut GbacStep,
) -> GbacStatus {
    guard(|| {
        let a = agent.as_mut().ok_or_else(|| null("agent"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let frame = frame_arg(frame, h, w)?;
        let s = a.agent.act(&frame, &a.state, mode.into(), &mut a.rng)?;
        *out = GbacStep {
            action: s.action as u32,
            loc_x: s.next_loc.x,
            loc_y: s.next_loc.y,
            value: s.value,
            action_logprob: s.action_logprob,
            loc_logprob: s.loc_logprob,
        };
        a.state = s.new_state;
        Ok(())
    })
}

/// Opens a built-in environment (`"minipong"` or `"seekdot"`).
///
/// # Safety
/// `id` must be a NUL-terminated string; `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn gbac_env_new(id: *const c_char, seed: u64, out: *mut *mut GbacEnv) -> GbacStatus {
    guard(|| {
        let id = str_arg(id, "id")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(GbacEnv {
            env: make_env(id, seed)?,
        }));
        Ok(())
    })
}

/// Releases an environment. NULL is ignored.
///
/// # Safety
/// `env` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gbac_env_free(env: *mut GbacEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gbac_env_spec(env: *const GbacEnv, out: *mut GbacEnvSpec) -> GbacStatus {
    guard(|| {
        let e = env.as_ref().ok_or_else(|| null("env"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let s = e.env.spec();
        *out = GbacEnvSpec {
            frame_h: s.frame_h,
            frame_w: s.frame_w,
            action_count: s.action_count,
            max_episode_steps: s.max_episode_steps,
        };
        Ok(())
    })
}

/// Starts an episode and writes its first frame. A negative `seed` keeps the current stream.
///
/// # Safety
/// `env` must be a live handle; `frame_out` must hold `frame_len` floats.
#[no_mangle]
pub unsafe extern "C" fn gbac_env_reset(env: *mut GbacEnv, seed: i64, frame_out: *mut f32, frame_len: usize) -> GbacStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        let need = e.env.spec().frame_h * e.env.spec().frame_w;
        let out = out_slice(frame_out, frame_len, need, "frame_out")?;
        let f = e.env.reset((seed >= 0).then_some(seed as u64))?;
        out.copy_from_slice(f.pixels());
        Ok(())
    })
}

/// Advances one step and writes the next frame, the reward and the done flag.
///
/// # Safety
/// `env` must be a live handle; `frame_out` must hold `frame_len` floats;
/// `reward` and `done` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gbac_env_step(
    env: *mut GbacEnv,
    action: usize,
    frame_out: *mut f32,
    frame_len: usize,
    reward: *mut f32,
    done: *mut bool,
) -> GbacStatus {
    guard(|| {
        let e = env.as_mut().ok_or_else(|| null("env"))?;
        if reward.is_null() || done.is_null() {
            return Err(null("reward/done"));
        }
        let need = e.env.spec().frame_h * e.env.spec().frame_w;
        let out = out_slice(frame_out, frame_len, need, "frame_out")?;
        let s = e.env.step(action)?;
        out.copy_from_slice(s.frame.pixels());
        *reward = s.reward;
        *done = s.done;
        Ok(())
    })
}
