use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use gbac::glimpse::{extract_glimpse, Frame, GlimpseConfig, Loc};
use gbac::run::RunConfig;
use gbac_ffi::*;

fn last_error() -> String {
    let p = gbac_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn pixel_budget_and_param_count() {
    let mut out = 0usize;
    assert_eq!(unsafe { gbac_pixel_budget(3, 40, &mut out) }, GbacStatus::Ok);
    assert_eq!(out, 4800);
    assert!(gbac_last_error().is_null());
    assert_eq!(unsafe { gbac_pixel_budget(2, 16, ptr::null_mut()) }, GbacStatus::NullPointer);
    assert!(last_error().contains("out"));

    let arch = CString::new(serde_json::to_string(&gbac::agent::ArchConfig::desk(5)).unwrap()).unwrap();
    assert_eq!(unsafe { gbac_param_count(arch.as_ptr(), 2, 16, &mut out) }, GbacStatus::Ok);
    assert_eq!(out, 142_616);
    let bad = CString::new("{\"glimpse_fc\": 1}").unwrap();
    assert_eq!(unsafe { gbac_param_count(bad.as_ptr(), 2, 16, &mut out) }, GbacStatus::Config);
}

#[test]
fn glimpse_matches_the_library() {
    let (h, w) = (40, 48);
    let px: Vec<f32> = (0..h * w).map(|i| (i % 251) as f32 / 250.0).collect();
    let frame = Frame::new(h, w, px.clone()).unwrap();
    let cfg = GlimpseConfig::new(2, 8);
    let want = extract_glimpse(&frame, Loc::new(0.7, -1.0), &cfg).unwrap();
    let mut out = vec![0f32; 128];
    let mut used = [0f32; 2];
    let s = unsafe {
        gbac_extract_glimpse(px.as_ptr(), h, w, 0.7, -1.0, 2, 8, out.as_mut_ptr(), out.len(), used.as_mut_ptr())
    };
    assert_eq!(s, GbacStatus::Ok);
    assert_eq!(out, want.patches.data());
    assert_eq!(used, [want.center_used.x, want.center_used.y]);

    let s = unsafe { gbac_extract_glimpse(px.as_ptr(), h, w, 0.0, 0.0, 2, 8, out.as_mut_ptr(), 10, ptr::null_mut()) };
    assert_eq!(s, GbacStatus::BufferTooSmall);
    let s = unsafe { gbac_extract_glimpse(px.as_ptr(), h, w, 1.5, 0.0, 2, 8, out.as_mut_ptr(), 128, ptr::null_mut()) };
    assert_eq!(s, GbacStatus::Config);
    assert!(last_error().contains("outside"));
}

#[test]
fn agent_plays_an_env_episode() {
    let cfg = RunConfig::preset("desk", "seekdot", None).unwrap();
    let json = CString::new(cfg.to_json()).unwrap();
    let id = CString::new("seekdot").unwrap();
    unsafe {
        let mut agent = ptr::null_mut();
        assert_eq!(gbac_agent_new(json.as_ptr(), 3, &mut agent), GbacStatus::Ok);
        let mut count = 0;
        assert_eq!(gbac_agent_param_count(agent, &mut count), GbacStatus::Ok);
        assert_eq!(count, 142_616);

        let mut env = ptr::null_mut();
        assert_eq!(gbac_env_new(id.as_ptr(), 3, &mut env), GbacStatus::Ok);
        let mut spec = GbacEnvSpec::default();
        assert_eq!(gbac_env_spec(env, &mut spec), GbacStatus::Ok);
        assert_eq!((spec.frame_h, spec.frame_w, spec.action_count), (96, 96, 5));
        let n = spec.frame_h * spec.frame_w;
        let mut frame = vec![0f32; n];
        assert_eq!(gbac_env_reset(env, 3, frame.as_mut_ptr(), n), GbacStatus::Ok);
        let (mut reward, mut done, mut steps) = (0f32, false, 0);
        while !done {
            let mut step = GbacStep::default();
            assert_eq!(
                gbac_agent_act(agent, frame.as_ptr(), spec.frame_h, spec.frame_w, GbacMode::Sample, &mut step),
                GbacStatus::Ok
            );
            assert!(step.action < 5);
            assert!(step.loc_x.abs() <= 1.0 && step.loc_y.abs() <= 1.0);
            assert!(step.action_logprob <= 0.0);
            assert_eq!(
                gbac_env_step(env, step.action as usize, frame.as_mut_ptr(), n, &mut reward, &mut done),
                GbacStatus::Ok
            );
            steps += 1;
        }
        assert!(steps <= spec.max_episode_steps);
        assert_eq!(gbac_agent_reset(agent), GbacStatus::Ok);
        gbac_agent_free(agent);
        gbac_env_free(env);
        gbac_agent_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported_not_raised() {
    unsafe {
        let mut env = ptr::null_mut();
        let id = CString::new("pacman").unwrap();
        assert_eq!(gbac_env_new(id.as_ptr(), 0, &mut env), GbacStatus::Config);
        assert!(env.is_null());
        assert!(last_error().contains("pacman"));

        let mut agent = ptr::null_mut();
        let bad = CString::new("{}").unwrap();
        assert_eq!(gbac_agent_new(bad.as_ptr(), 0, &mut agent), GbacStatus::Config);
        assert_eq!(gbac_agent_new(ptr::null(), 0, &mut agent), GbacStatus::NullPointer);
        assert_eq!(gbac_agent_reset(ptr::null_mut()), GbacStatus::NullPointer);

        let p = CString::new("/nonexistent/config.json").unwrap();
        assert_eq!(gbac_agent_load(p.as_ptr(), p.as_ptr(), 0, &mut agent), GbacStatus::Config);
    }
}

#[test]
fn loading_refuses_a_foreign_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::preset("desk", "seekdot", None).unwrap();
    cfg.output_dir = dir.path().join("run");
    let agent = gbac::agent::Agent::new(&cfg.arch, &cfg.glimpse, 1).unwrap();
    let ckpt = dir.path().join("w.json");
    gbac::nn::checkpoint::save(&ckpt, &cfg.digest(), &agent.named_tensors(), serde_json::Value::Null).unwrap();
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, cfg.to_json()).unwrap();
    let (c, k) = (
        CString::new(cfg_path.to_str().unwrap()).unwrap(),
        CString::new(ckpt.to_str().unwrap()).unwrap(),
    );
    unsafe {
        let mut handle = ptr::null_mut();
        assert_eq!(gbac_agent_load(c.as_ptr(), k.as_ptr(), 0, &mut handle), GbacStatus::Ok);
        gbac_agent_free(handle);
        cfg.seed += 1;
        std::fs::write(&cfg_path, cfg.to_json()).unwrap();
        assert_eq!(gbac_agent_load(c.as_ptr(), k.as_ptr(), 0, &mut handle), GbacStatus::DigestMismatch);
        assert!(last_error().contains(&cfg.digest()));
    }
}

fn target_dir() -> PathBuf {
    // target/<profile>/deps/ffi-<hash>
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf()
}

#[test]
fn c_smoke_program() {
    let lib = target_dir().join("libgbac_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping C smoke test: no C compiler or static library at {}", lib.display());
        return;
    }
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("gbac_smoke");
    let status = Command::new(&cc)
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let out = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.starts_with("ok 0.1.0 budget=4800"), "{stdout}");
}
