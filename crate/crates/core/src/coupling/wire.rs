//! Binary framing for coupling messages.
//!
//! Every frame is little-endian:
//!
//! ```text
//! offset size field
//!      0    4 frame_len   u32, bytes after this field (24 + 8 n)
//!      4    2 version     u16, currently 1
//!      6    1 kind        u8: 1 HELLO, 2 SURFACE_STATE, 3 SUBSURFACE_RESULT, 4 HALT, 5 ERROR
//!      7    1 reserved    u8, zero
//!      8    8 seq         u64, strictly increasing per direction, starting at 0
//!     16    8 t           f64, seconds
//!     24    4 n           u32, payload length in f64 values
//!     28  8 n payload     f64 values
//! ```

use std::io::{Read, Write};

use thiserror::Error;

pub const PROTOCOL_VERSION: u16 = 1;
/// Bytes after the length prefix, excluding the payload.
pub const HEADER_LEN: usize = 24;
/// Largest accepted payload, in values.
pub const MAX_PAYLOAD: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    Hello = 1,
    SurfaceState = 2,
    SubsurfaceResult = 3,
    Halt = 4,
    Error = 5,
}

impl TryFrom<u8> for MessageKind {
    type Error = WireError;
    fn try_from(v: u8) -> Result<Self, WireError> {
        Ok(match v {
            1 => MessageKind::Hello,
            2 => MessageKind::SurfaceState,
            3 => MessageKind::SubsurfaceResult,
            4 => MessageKind::Halt,
            5 => MessageKind::Error,
            _ => return Err(WireError::Kind(v)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub seq: u64,
    pub t: f64,
    pub payload: Vec<f64>,
}

impl Message {
    pub fn new(kind: MessageKind, seq: u64, t: f64, payload: Vec<f64>) -> Self {
        Message { kind, seq, t, payload }
    }
}

#[derive(Debug, Error)]
pub enum WireError {
    #[error("truncated frame: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("unsupported protocol version {0}")]
    Version(u16),
    #[error("unknown message kind {0}")]
    Kind(u8),
    #[error("frame length {declared} does not match payload of {values} values")]
    Length { declared: usize, values: usize },
    #[error("payload of {0} values exceeds the frame limit")]
    TooLarge(usize),
    #[error("connection closed by peer")]
    Closed,
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("socket: {0}")]
    Io(#[from] std::io::Error),
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    let n = msg.payload.len();
    let mut out = Vec::with_capacity(4 + HEADER_LEN + 8 * n);
    out.extend_from_slice(&((HEADER_LEN + 8 * n) as u32).to_le_bytes());
    out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    out.push(msg.kind as u8);
    out.push(0);
    out.extend_from_slice(&msg.seq.to_le_bytes());
    out.extend_from_slice(&msg.t.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    for v in &msg.payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes one complete frame, length prefix included.
pub fn decode_message(bytes: &[u8]) -> Result<Message, WireError> {
    if bytes.len() < 4 {
        return Err(WireError::Truncated {
            need: 4,
            have: bytes.len(),
        });
    }
    let declared = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if bytes.len() != 4 + declared {
        return Err(WireError::Truncated {
            need: 4 + declared,
            have: bytes.len(),
        });
    }
    decode_body(declared, &bytes[4..])
}

fn decode_body(declared: usize, body: &[u8]) -> Result<Message, WireError> {
    if body.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            need: HEADER_LEN,
            have: body.len(),
        });
    }
    let version = u16::from_le_bytes([body[0], body[1]]);
    if version != PROTOCOL_VERSION {
        return Err(WireError::Version(version));
    }
    let kind = MessageKind::try_from(body[2])?;
    let seq = u64::from_le_bytes(body[4..12].try_into().unwrap());
    let t = f64::from_le_bytes(body[12..20].try_into().unwrap());
    let n = u32::from_le_bytes(body[20..24].try_into().unwrap()) as usize;
    if declared != HEADER_LEN + 8 * n {
        return Err(WireError::Length { declared, values: n });
    }
    let payload = body[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Message { kind, seq, t, payload })
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), WireError> {
    w.write_all(&encode_message(msg))?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. A clean end of stream before the first byte is
/// reported as [`WireError::Closed`].
pub fn read_message<R: Read>(r: &mut R) -> Result<Message, WireError> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Err(WireError::Closed),
            Ok(0) => return Err(WireError::Truncated { need: 4, have: got }),
            Ok(k) => got += k,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(io_error(e)),
        }
    }
    let declared = u32::from_le_bytes(len) as usize;
    if declared < HEADER_LEN || !(declared - HEADER_LEN).is_multiple_of(8) {
        return Err(WireError::Length {
            declared,
            values: declared.saturating_sub(HEADER_LEN) / 8,
        });
    }
    if (declared - HEADER_LEN) / 8 > MAX_PAYLOAD {
        return Err(WireError::TooLarge((declared - HEADER_LEN) / 8));
    }
    let mut body = vec![0u8; declared];
    r.read_exact(&mut body).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => WireError::Truncated {
            need: declared,
            have: 0,
        },
        _ => io_error(e),
    })?;
    decode_body(declared, &body)
}

fn io_error(e: std::io::Error) -> WireError {
    match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => WireError::Timeout,
        _ => WireError::Io(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kind() -> impl Strategy<Value = MessageKind> {
        prop_oneof![
            Just(MessageKind::Hello),
            Just(MessageKind::SurfaceState),
            Just(MessageKind::SubsurfaceResult),
            Just(MessageKind::Halt),
            Just(MessageKind::Error),
        ]
    }

    proptest! {
        #[test]
        fn round_trip(kind in kind(), seq in any::<u64>(), t in any::<f64>(),
                      payload in proptest::collection::vec(any::<f64>(), 0..64)) {
            let msg = Message::new(kind, seq, t, payload);
            let bytes = encode_message(&msg);
            let back = decode_message(&bytes).unwrap();
            prop_assert_eq!(back.kind, msg.kind);
            prop_assert_eq!(back.seq, msg.seq);
            prop_assert_eq!(back.t.to_bits(), msg.t.to_bits());
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.payload), bits(&msg.payload));
            let streamed = read_message(&mut bytes.as_slice()).unwrap();
            prop_assert_eq!(bits(&streamed.payload), bits(&msg.payload));
        }

        #[test]
        fn garbage_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..80)) {
            let _ = decode_message(&bytes);
            let _ = read_message(&mut bytes.as_slice());
        }
    }

    #[test]
    fn empty_hello_layout() {
        let bytes = encode_message(&Message::new(MessageKind::Hello, 0, 0.0, vec![]));
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[..4], &24u32.to_le_bytes());
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 1);
        let back = decode_message(&bytes).unwrap();
        assert_eq!(back, Message::new(MessageKind::Hello, 0, 0.0, vec![]));
    }

    #[test]
    fn corrupted_frames_are_rejected() {
        let mut bytes = encode_message(&Message::new(MessageKind::SurfaceState, 3, 60.0, vec![1.0, 2.0]));
        let good = bytes.clone();
        bytes[0] = bytes[0].wrapping_add(8);
        assert!(matches!(decode_message(&bytes), Err(WireError::Truncated { .. })));
        assert!(read_message(&mut bytes.as_slice()).is_err());

        let mut bad_n = good.clone();
        bad_n[24] = 5;
        assert!(matches!(decode_message(&bad_n), Err(WireError::Length { .. })));

        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(matches!(decode_message(&bad_version), Err(WireError::Version(9))));

        let mut bad_kind = good.clone();
        bad_kind[6] = 42;
        assert!(matches!(decode_message(&bad_kind), Err(WireError::Kind(42))));

        assert!(matches!(read_message(&mut &good[..10]), Err(WireError::Truncated { .. })));
        assert!(matches!(read_message(&mut &good[..0]), Err(WireError::Closed)));
    }
}
