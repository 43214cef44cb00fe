use std::io::{ErrorKind, Read, Write};

use crate::error::{GbacError, Result};

/// Largest accepted payload.
pub const MAX_MESSAGE: usize = 16 * 1024 * 1024;

/// Writes one message: 4-byte big-endian length, then the payload.
pub fn write_message<W: Write + ?Sized>(w: &mut W, payload: &[u8]) -> Result<()> {
    if payload.len() > MAX_MESSAGE {
        return Err(GbacError::Protocol(format!(
            "outgoing message of {} bytes exceeds the {MAX_MESSAGE}-byte limit",
            payload.len()
        )));
    }
    let len = (payload.len() as u32).to_be_bytes();
    w.write_all(&len).map_err(conn_err)?;
    w.write_all(payload).map_err(conn_err)?;
    w.flush().map_err(conn_err)
}

/// Reads one message. Returns `Ok(None)` on a clean end of stream before
/// the first length byte. The length is checked before the payload is read.
pub fn read_message<R: Read + ?Sized>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(GbacError::Connection("stream ended inside a length prefix".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(conn_err(e)),
        }
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_MESSAGE {
        return Err(GbacError::Protocol(format!(
            "incoming message of {n} bytes exceeds the {MAX_MESSAGE}-byte limit"
        )));
    }
    let mut payload = vec![0u8; n];
    r.read_exact(&mut payload).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            GbacError::Connection(format!("stream ended inside a {n}-byte message"))
        } else {
            conn_err(e)
        }
    })?;
    Ok(Some(payload))
}

fn conn_err(e: std::io::Error) -> GbacError {
    GbacError::Connection(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    /// Hands out at most `chunk` bytes per read.
    struct Trickle<R> {
        inner: R,
        chunk: usize,
    }

    impl<R: Read> Read for Trickle<R> {
        fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
            let n = buf.len().min(self.chunk);
            self.inner.read(&mut buf[..n])
        }
    }

    #[test]
    fn fragmented_stream_yields_whole_messages() {
        let msgs: Vec<Vec<u8>> = (0..20).map(|i| format!("{{\"n\":{i},\"pad\":\"{}\"}}", "x".repeat(i * 13)).into_bytes()).collect();
        let mut wire = Vec::new();
        for m in &msgs {
            write_message(&mut wire, m).unwrap();
        }
        for chunk in [1, 2, 3, 7, 64] {
            let mut r = Trickle {
                inner: Cursor::new(wire.clone()),
                chunk,
            };
            let mut got = Vec::new();
            while let Some(m) = read_message(&mut r).unwrap() {
                got.push(m);
            }
            assert_eq!(got, msgs);
        }
    }

    #[test]
    fn oversize_prefix_rejected_before_read() {
        let mut wire = ((MAX_MESSAGE + 1) as u32).to_be_bytes().to_vec();
        wire.extend_from_slice(b"{}");
        let mut cur = Cursor::new(wire);
        assert!(matches!(read_message(&mut cur), Err(GbacError::Protocol(_))));
        assert_eq!(cur.position(), 4);
    }

    #[test]
    fn truncated_payload_is_a_connection_error() {
        let mut wire = 10u32.to_be_bytes().to_vec();
        wire.extend_from_slice(b"abc");
        assert!(matches!(read_message(&mut Cursor::new(wire)), Err(GbacError::Connection(_))));
    }
}
