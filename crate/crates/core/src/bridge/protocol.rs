use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::envs::EnvSpec;
use crate::error::{GbacError, Result};
use crate::glimpse::Frame;

pub const PROTOCOL_VERSION: &str = "gbac-bridge/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Request {
    Spec,
    Reset { seed: Option<u64> },
    Step { action: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecReply {
    pub version: String,
    pub id: String,
    pub h: usize,
    pub w: usize,
    pub actions: usize,
    pub max_steps: u64,
}

/// Reply to `reset` (reward 0, not done) and `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReply {
    /// Base64 of row-major u8 grayscale pixels.
    pub frame: String,
    #[serde(default)]
    pub reward: f64,
    #[serde(default)]
    pub done: bool,
    /// Steps since the last reset, when the server reports it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
}

impl SpecReply {
    pub fn to_env_spec(&self, seed: u64) -> Result<EnvSpec> {
        if self.version != PROTOCOL_VERSION {
            return Err(GbacError::Connection(format!(
                "bridge version mismatch: server speaks {:?}, client {PROTOCOL_VERSION:?}",
                self.version
            )));
        }
        if self.h == 0 || self.w == 0 || self.actions < 2 {
            return Err(GbacError::Protocol(format!(
                "spec reply describes an unusable env ({}x{}, {} actions)",
                self.h, self.w, self.actions
            )));
        }
        Ok(EnvSpec {
            id: self.id.clone(),
            frame_h: self.h,
            frame_w: self.w,
            action_count: self.actions,
            max_episode_steps: self.max_steps,
            seed,
        })
    }
}

pub fn encode_frame(frame: &Frame) -> String {
    STANDARD.encode(frame.to_u8())
}

/// Decodes a base64 u8 frame of `h x w` pixels into `[0, 1]`.
pub fn decode_frame(b64: &str, h: usize, w: usize) -> Result<Frame> {
    let bytes = STANDARD
        .decode(b64)
        .map_err(|e| GbacError::Frame(format!("frame is not valid base64: {e}")))?;
    if bytes.len() != h * w {
        return Err(GbacError::Frame(format!(
            "frame has {} bytes, expected {h}x{w} = {}",
            bytes.len(),
            h * w
        )));
    }
    crate::envs::preprocess_u8(h, w, crate::envs::PixelFormat::Gray, &bytes)
}

/// Parses `payload` as `T`, naming the offending field on failure.
pub(crate) fn parse<T: for<'de> Deserialize<'de>>(payload: &[u8], what: &str) -> Result<T> {
    let v: serde_json::Value = serde_json::from_slice(payload)
        .map_err(|e| GbacError::Protocol(format!("{what} is not valid JSON: {e}")))?;
    serde_path_to_error::deserialize(v).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            GbacError::Protocol(format!("malformed {what}: {inner}"))
        } else {
            GbacError::Protocol(format!("malformed {what} at {path}: {inner}"))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        assert_eq!(serde_json::to_string(&Request::Spec).unwrap(), r#"{"cmd":"spec"}"#);
        assert_eq!(
            serde_json::to_string(&Request::Reset { seed: Some(3) }).unwrap(),
            r#"{"cmd":"reset","seed":3}"#
        );
        assert_eq!(serde_json::to_string(&Request::Step { action: 2 }).unwrap(), r#"{"cmd":"step","action":2}"#);
    }

    #[test]
    fn missing_field_is_named() {
        let err = parse::<SpecReply>(br#"{"version":"gbac-bridge/1","id":"x","h":2,"w":2,"max_steps":5}"#, "spec reply")
            .unwrap_err();
        assert!(matches!(err, GbacError::Protocol(_)));
        assert!(err.to_string().contains("actions"), "{err}");
    }

    #[test]
    fn version_mismatch_is_a_connection_error() {
        let r = SpecReply {
            version: "gbac-bridge/0".into(),
            id: "x".into(),
            h: 2,
            w: 2,
            actions: 2,
            max_steps: 1,
        };
        assert!(matches!(r.to_env_spec(0), Err(GbacError::Connection(_))));
    }

    #[test]
    fn frames_round_trip_bit_exactly() {
        let bytes: Vec<u8> = (0..=255u8).collect();
        let f = crate::envs::preprocess_u8(16, 16, crate::envs::PixelFormat::Gray, &bytes).unwrap();
        let back = decode_frame(&encode_frame(&f), 16, 16).unwrap();
        assert_eq!(back.to_u8(), bytes);
    }

    #[test]
    fn constant_128_decodes_to_its_fraction() {
        let b64 = STANDARD.encode([128u8; 6]);
        let f = decode_frame(&b64, 2, 3).unwrap();
        assert!(f.pixels().iter().all(|&p| (p - 128.0 / 255.0).abs() < 1e-7));
        assert!(matches!(decode_frame(&b64, 2, 2), Err(GbacError::Frame(_))));
    }
}
