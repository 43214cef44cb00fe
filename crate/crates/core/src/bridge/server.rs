use std::io::{Read, Write};
use std::net::TcpListener;

use log::{info, warn};

use crate::bridge::framing::{read_message, write_message};
use crate::bridge::protocol::{encode_frame, parse, ErrorReply, FrameReply, Request, SpecReply, PROTOCOL_VERSION};
use crate::envs::Env;
use crate::error::Result;
use crate::glimpse::Frame;

struct Session<'a> {
    env: &'a mut dyn Env,
    t: u64,
    running: bool,
}

impl Session<'_> {
    fn handle(&mut self, payload: &[u8]) -> Vec<u8> {
        let reply = match parse::<Request>(payload, "request") {
            Ok(req) => self.dispatch(req),
            Err(e) => Err(e.to_string()),
        };
        match reply {
            Ok(v) => v,
            Err(error) => serde_json::to_vec(&ErrorReply { error }).expect("serialisable"),
        }
    }

    fn dispatch(&mut self, req: Request) -> std::result::Result<Vec<u8>, String> {
        let body = match req {
            Request::Spec => {
                let s = self.env.spec();
                serde_json::to_vec(&SpecReply {
                    version: PROTOCOL_VERSION.into(),
                    id: s.id.clone(),
                    h: s.frame_h,
                    w: s.frame_w,
                    actions: s.action_count,
                    max_steps: s.max_episode_steps,
                })
            }
            Request::Reset { seed } => {
                let frame = self.env.reset(seed).map_err(|e| e.to_string())?;
                self.t = 0;
                self.running = true;
                serde_json::to_vec(&frame_reply(&frame, 0.0, false, 0))
            }
            Request::Step { action } => {
                if !self.running {
                    return Err("step without reset".into());
                }
                let step = self.env.step(action).map_err(|e| e.to_string())?;
                self.t += 1;
                self.running = !step.done;
                serde_json::to_vec(&frame_reply(&step.frame, step.reward as f64, step.done, self.t))
            }
        };
        body.map_err(|e| e.to_string())
    }
}

fn frame_reply(frame: &Frame, reward: f64, done: bool, t: u64) -> FrameReply {
    FrameReply {
        frame: encode_frame(frame),
        reward,
        done,
        t: Some(t),
    }
}

/// Answers requests for `env` until the peer closes the stream.
/// Returns the number of requests served.
pub fn serve<R: Read, W: Write>(env: &mut dyn Env, reader: &mut R, writer: &mut W) -> Result<u64> {
    let mut session = Session {
        env,
        t: 0,
        running: false,
    };
    let mut served = 0;
    while let Some(payload) = read_message(reader)? {
        write_message(writer, &session.handle(&payload))?;
        served += 1;
    }
    Ok(served)
}

/// Serves connections on `listener` one at a time, each against a fresh env.
/// Stops after `max_connections` if given.
pub fn serve_tcp(
    listener: &TcpListener,
    mut make_env: impl FnMut() -> Result<Box<dyn Env>>,
    max_connections: Option<usize>,
) -> Result<()> {
    let mut handled = 0;
    for stream in listener.incoming() {
        let stream = stream?;
        let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
        let mut env = make_env()?;
        let mut reader = stream.try_clone()?;
        let mut writer = stream;
        match serve(env.as_mut(), &mut reader, &mut writer) {
            Ok(n) => info!("bridge peer {peer} closed after {n} requests"),
            Err(e) => warn!("bridge peer {peer}: {e}"),
        }
        handled += 1;
        if max_connections.is_some_and(|m| handled >= m) {
            break;
        }
    }
    Ok(())
}
