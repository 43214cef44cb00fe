use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use crate::bridge::framing::{read_message, write_message};
use crate::bridge::protocol::{decode_frame, parse, ErrorReply, FrameReply, Request, SpecReply};
use crate::envs::EnvSpec;
use crate::error::{GbacError, Result};
use crate::glimpse::Frame;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// No spec exchanged yet.
    Connected,
    /// Spec known; the next request must be a reset.
    NeedsReset,
    Running,
}

/// Decoded reply to a reset or step.
#[derive(Debug, Clone, PartialEq)]
pub struct RemoteStep {
    pub frame: Frame,
    pub reward: f64,
    pub done: bool,
    /// Server-reported steps since reset, if sent.
    pub t: Option<u64>,
}

/// Synchronous request/response client for one remote environment.
pub struct BridgeClient {
    writer: Box<dyn Write + Send>,
    replies: Receiver<Result<Option<Vec<u8>>>>,
    timeout: Duration,
    child: Option<Child>,
    /// Socket to shut down on drop so the reader thread and the peer see EOF.
    socket: Option<TcpStream>,
    spec: Option<EnvSpec>,
    phase: Phase,
    steps: u64,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient")
            .field("spec", &self.spec)
            .field("phase", &self.phase)
            .field("steps", &self.steps)
            .finish_non_exhaustive()
    }
}

impl BridgeClient {
    /// Wraps an arbitrary byte transport. Replies are read on a helper thread
    /// so every request can time out.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("gbac-bridge-reader".into())
            .spawn(move || {
                let mut reader = reader;
                loop {
                    let msg = read_message(&mut reader);
                    let stop = !matches!(msg, Ok(Some(_)));
                    if tx.send(msg).is_err() || stop {
                        break;
                    }
                }
            })
            .expect("spawn bridge reader thread");
        Self {
            writer: Box::new(writer),
            replies: rx,
            timeout,
            child: None,
            socket: None,
            spec: None,
            phase: Phase::Connected,
            steps: 0,
        }
    }

    /// Spawns `command` through `sh -c` and talks to it over stdin/stdout.
    pub fn spawn(command: &str, timeout: Duration) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| GbacError::Connection(format!("cannot start bridge command {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut client = Self::from_streams(stdout, stdin, timeout);
        client.child = Some(child);
        Ok(client)
    }

    pub fn connect(addr: &str, timeout: Duration) -> Result<Self> {
        let addrs: Vec<_> = addr
            .to_socket_addrs()
            .map_err(|e| GbacError::Connection(format!("cannot resolve {addr}: {e}")))?
            .collect();
        let mut last = None;
        for a in addrs {
            match TcpStream::connect_timeout(&a, timeout) {
                Ok(stream) => {
                    stream.set_nodelay(true).ok();
                    let reader = stream.try_clone()?;
                    let handle = stream.try_clone()?;
                    let mut client = Self::from_streams(reader, stream, timeout);
                    client.socket = Some(handle);
                    return Ok(client);
                }
                Err(e) => last = Some(e),
            }
        }
        Err(GbacError::Connection(match last {
            Some(e) => format!("cannot connect to {addr}: {e}"),
            None => format!("{addr} resolved to no addresses"),
        }))
    }

    pub fn spec(&self) -> Option<&EnvSpec> {
        self.spec.as_ref()
    }

    /// Steps taken since the connection opened.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Requests the spec and checks the protocol version.
    pub fn handshake(&mut self, seed: u64) -> Result<EnvSpec> {
        let payload = self.request(&Request::Spec)?;
        let reply: SpecReply = parse(&payload, "spec reply")?;
        let spec = reply.to_env_spec(seed)?;
        self.spec = Some(spec.clone());
        self.phase = Phase::NeedsReset;
        Ok(spec)
    }

    pub fn reset(&mut self, seed: Option<u64>) -> Result<RemoteStep> {
        if self.phase == Phase::Connected {
            return Err(GbacError::Protocol("reset before handshake".into()));
        }
        let payload = self.request(&Request::Reset { seed })?;
        let step = self.decode(&payload, "reset reply")?;
        self.phase = if step.done { Phase::NeedsReset } else { Phase::Running };
        Ok(step)
    }

    pub fn step(&mut self, action: usize) -> Result<RemoteStep> {
        match self.phase {
            Phase::Connected => return Err(GbacError::Protocol("step before handshake".into())),
            Phase::NeedsReset => {
                return Err(GbacError::Protocol(
                    "step without reset: the previous episode ended or none has started".into(),
                ))
            }
            Phase::Running => {}
        }
        let actions = self.spec.as_ref().map_or(0, |s| s.action_count);
        if action >= actions {
            return Err(GbacError::Protocol(format!(
                "action {action} out of range for {actions} actions"
            )));
        }
        let payload = self.request(&Request::Step { action })?;
        let step = self.decode(&payload, "step reply")?;
        self.steps += 1;
        if step.done {
            self.phase = Phase::NeedsReset;
        }
        Ok(step)
    }

    fn decode(&self, payload: &[u8], what: &str) -> Result<RemoteStep> {
        let reply: FrameReply = parse(payload, what)?;
        if !reply.reward.is_finite() {
            return Err(GbacError::Protocol(format!("{what} carries non-finite reward {}", reply.reward)));
        }
        let spec = self.spec.as_ref().expect("spec set by handshake");
        Ok(RemoteStep {
            frame: decode_frame(&reply.frame, spec.frame_h, spec.frame_w)?,
            reward: reply.reward,
            done: reply.done,
            t: reply.t,
        })
    }

    fn request(&mut self, req: &Request) -> Result<Vec<u8>> {
        let body = serde_json::to_vec(req)?;
        if let Err(e) = write_message(&mut self.writer, &body) {
            return Err(self.closed().unwrap_or(e));
        }
        let payload = match self.replies.recv_timeout(self.timeout) {
            Ok(Ok(Some(p))) => p,
            Ok(Ok(None)) | Err(RecvTimeoutError::Disconnected) => {
                return Err(self
                    .closed()
                    .unwrap_or_else(|| GbacError::Connection("bridge closed the connection".into())))
            }
            Ok(Err(e)) => return Err(self.closed().unwrap_or(e)),
            Err(RecvTimeoutError::Timeout) => {
                return Err(GbacError::Connection(format!(
                    "no reply to {:?} within {:.1} s",
                    cmd_name(req),
                    self.timeout.as_secs_f64()
                )))
            }
        };
        if let Ok(err) = serde_json::from_slice::<ErrorReply>(&payload) {
            return Err(GbacError::Env {
                step: self.steps,
                detail: format!("bridge reported: {}", err.error),
            });
        }
        Ok(payload)
    }

    /// Env failure if the child process has exited.
    fn closed(&mut self) -> Option<GbacError> {
        let child = self.child.as_mut()?;
        // give a dying child a moment to be reaped
        for _ in 0..50 {
            if let Ok(Some(status)) = child.try_wait() {
                return Some(GbacError::Env {
                    step: self.steps,
                    detail: format!("bridge process exited ({status})"),
                });
            }
            thread::sleep(Duration::from_millis(10));
        }
        None
    }
}

fn cmd_name(req: &Request) -> &'static str {
    match req {
        Request::Spec => "spec",
        Request::Reset { .. } => "reset",
        Request::Step { .. } => "step",
    }
}

impl Drop for BridgeClient {
    fn drop(&mut self) {
        if let Some(s) = self.socket.take() {
            let _ = s.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = self.child.as_mut() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}
