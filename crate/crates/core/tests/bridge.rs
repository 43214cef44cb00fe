use std::io::{self, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use gbac::bridge::{self, BridgeClient, RemoteEnv};
use gbac::envs::{make_env, Env, EnvSpec, EnvStep, EpisodeInfo};
use gbac::glimpse::Frame;
use gbac::{GbacError, Result};

/// Emits a constant gray frame; episodes last `len` steps.
struct ConstEnv {
    spec: EnvSpec,
    value: u8,
    t: u64,
}

impl ConstEnv {
    fn new(h: usize, w: usize, value: u8, len: u64) -> Self {
        Self {
            spec: EnvSpec {
                id: "const".into(),
                frame_h: h,
                frame_w: w,
                action_count: 3,
                max_episode_steps: len,
                seed: 0,
            },
            value,
            t: 0,
        }
    }

    fn frame(&self) -> Frame {
        let px = vec![self.value as f32 / 255.0; self.spec.frame_h * self.spec.frame_w];
        Frame::new(self.spec.frame_h, self.spec.frame_w, px).unwrap()
    }
}

impl Env for ConstEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _seed: Option<u64>) -> Result<Frame> {
        self.t = 0;
        Ok(self.frame())
    }

    fn step(&mut self, _action: usize) -> Result<EnvStep> {
        self.t += 1;
        let done = self.t >= self.spec.max_episode_steps;
        Ok(EnvStep {
            frame: self.frame(),
            reward: 1.0,
            done,
            info: done.then_some(EpisodeInfo {
                episode_return: self.t as f64,
                length: self.t,
            }),
        })
    }
}

/// Hands out at most `chunk` bytes per read and writes in `chunk`-byte pieces.
struct Trickle<T> {
    inner: T,
    chunk: usize,
}

impl<T: Read> Read for Trickle<T> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = buf.len().min(self.chunk);
        self.inner.read(&mut buf[..n])
    }
}

impl<T: Write> Write for Trickle<T> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = buf.len().min(self.chunk);
        self.inner.write(&buf[..n])
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

/// Client wired to an in-process server thread over OS pipes.
fn loopback(mut env: Box<dyn Env>, chunk: Option<usize>) -> BridgeClient {
    let (client_rx, mut server_tx) = io::pipe().unwrap();
    let (mut server_rx, client_tx) = io::pipe().unwrap();
    thread::spawn(move || {
        let _ = bridge::serve(env.as_mut(), &mut server_rx, &mut server_tx);
    });
    match chunk {
        Some(chunk) => BridgeClient::from_streams(
            Trickle { inner: client_rx, chunk },
            Trickle { inner: client_tx, chunk },
            bridge::DEFAULT_TIMEOUT,
        ),
        None => BridgeClient::from_streams(client_rx, client_tx, bridge::DEFAULT_TIMEOUT),
    }
}

#[test]
fn handshake_preserves_spec_fields() {
    let mut c = loopback(Box::new(ConstEnv::new(210, 160, 0, 7)), None);
    let spec = c.handshake(42).unwrap();
    assert_eq!(spec.id, "const");
    assert_eq!((spec.frame_h, spec.frame_w), (210, 160));
    assert_eq!(spec.action_count, 3);
    assert_eq!(spec.max_episode_steps, 7);
    assert_eq!(spec.seed, 42);
}

#[test]
fn constant_128_frame_arrives_as_its_fraction() {
    let mut env = RemoteEnv::new(loopback(Box::new(ConstEnv::new(4, 5, 128, 3)), None), 0).unwrap();
    let f = env.reset(Some(1)).unwrap();
    assert_eq!((f.height(), f.width()), (4, 5));
    for &p in f.pixels() {
        assert!((p - 0.501_960_8).abs() < 1e-6, "{p}");
    }
}

#[test]
fn step_after_done_is_a_protocol_error() {
    let mut env = RemoteEnv::new(loopback(Box::new(ConstEnv::new(2, 2, 9, 2)), None), 0).unwrap();
    assert!(matches!(env.step(0), Err(GbacError::Protocol(_))));
    env.reset(None).unwrap();
    assert!(!env.step(0).unwrap().done);
    let last = env.step(1).unwrap();
    assert!(last.done);
    assert_eq!(last.info.unwrap().length, 2);
    assert!(matches!(env.step(0), Err(GbacError::Protocol(_))));
    env.reset(None).unwrap();
    assert!(env.step(2).is_ok());
}

#[test]
fn server_rejects_step_without_reset() {
    let (mut rx, mut tx) = (io::Cursor::new(Vec::new()), Vec::new());
    for req in [r#"{"cmd":"step","action":0}"#, r#"{"cmd":"jump"}"#] {
        bridge::write_message(rx.get_mut(), req.as_bytes()).unwrap();
    }
    let mut env = ConstEnv::new(2, 2, 0, 3);
    assert_eq!(bridge::serve(&mut env, &mut rx, &mut tx).unwrap(), 2);
    let mut out = io::Cursor::new(tx);
    for _ in 0..2 {
        let reply: serde_json::Value = serde_json::from_slice(&bridge::read_message(&mut out).unwrap().unwrap()).unwrap();
        assert!(reply["error"].is_string(), "{reply}");
    }
}

#[test]
fn fragmented_transport_keeps_messages_whole() {
    for chunk in [1, 3, 17] {
        let mut env = RemoteEnv::new(loopback(Box::new(ConstEnv::new(21, 16, 200, 5)), Some(chunk)), 0).unwrap();
        env.reset(None).unwrap();
        for t in 1..=5 {
            let s = env.step(0).unwrap();
            assert_eq!(s.done, t == 5);
            assert_eq!(s.frame.to_u8(), vec![200u8; 21 * 16]);
        }
    }
}

#[test]
fn soak_1000_steps_has_no_desyncs() {
    let mut c = loopback(make_env("seekdot", 3).unwrap(), None);
    let r = bridge::soak(&mut c, 1000, 3).unwrap();
    assert_eq!(r.steps, 1000);
    assert_eq!(r.counted, 1000);
    assert_eq!(r.desyncs, 0);
    assert!(r.episodes >= 1);
    assert_eq!((r.frame_h, r.frame_w), (96, 96));
}

#[test]
fn remote_env_matches_local_env() {
    let mut local = make_env("minipong", 5).unwrap();
    let mut remote = RemoteEnv::new(loopback(make_env("minipong", 5).unwrap(), None), 5).unwrap();
    assert_eq!(local.reset(Some(8)).unwrap(), remote.reset(Some(8)).unwrap());
    for i in 0..300 {
        let a = i % 3;
        let (l, r) = (local.step(a).unwrap(), remote.step(a).unwrap());
        assert_eq!(l.frame, r.frame);
        assert_eq!(l.reward, r.reward);
        assert_eq!(l.done, r.done);
        if l.done {
            assert_eq!(l.info, r.info);
            local.reset(None).unwrap();
            remote.reset(None).unwrap();
        }
    }
}

#[test]
fn missing_reply_times_out_as_connection_error() {
    let (client_rx, server_tx) = io::pipe().unwrap();
    let (_server_rx, client_tx) = io::pipe().unwrap();
    let mut c = BridgeClient::from_streams(client_rx, client_tx, Duration::from_millis(200));
    let err = c.handshake(0).unwrap_err();
    assert!(matches!(err, GbacError::Connection(_)), "{err}");
    drop(server_tx);
}

#[test]
fn malformed_spec_reply_names_the_field() {
    let (client_rx, mut server_tx) = io::pipe().unwrap();
    let (mut server_rx, client_tx) = io::pipe().unwrap();
    thread::spawn(move || {
        let _ = bridge::read_message(&mut server_rx);
        let body = br#"{"version":"gbac-bridge/1","id":"x","h":4,"w":4,"max_steps":9}"#;
        bridge::write_message(&mut server_tx, body).unwrap();
    });
    let mut c = BridgeClient::from_streams(client_rx, client_tx, bridge::DEFAULT_TIMEOUT);
    let err = c.handshake(0).unwrap_err();
    assert!(matches!(err, GbacError::Protocol(_)));
    assert!(err.to_string().contains("actions"), "{err}");
}

#[test]
fn tcp_round_trip() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = thread::spawn(move || {
        bridge::serve_tcp(&listener, || Ok(Box::new(ConstEnv::new(3, 3, 64, 4)) as Box<dyn Env>), Some(1)).unwrap();
    });
    {
        let mut env = RemoteEnv::connect(&addr, 0).unwrap();
        env.reset(None).unwrap();
        assert_eq!(env.step(1).unwrap().frame.to_u8(), vec![64u8; 9]);
    }
    server.join().unwrap();
}

#[test]
fn exited_child_is_an_env_failure() {
    let mut c = BridgeClient::spawn("exit 3", Duration::from_secs(5)).unwrap();
    let err = c.handshake(0).unwrap_err();
    assert!(matches!(err, GbacError::Env { .. }), "{err}");
}

#[test]
fn spawned_reference_server_soaks_cleanly() {
    let cmd = format!("{} serve --env minipong --seed 2", env!("CARGO_BIN_EXE_gbac"));
    let r = bridge::soak_command(&cmd, 1000, 2, bridge::DEFAULT_TIMEOUT).unwrap();
    assert_eq!((r.steps, r.desyncs), (1000, 0));
    assert_eq!((r.frame_h, r.frame_w), (64, 64));
}
