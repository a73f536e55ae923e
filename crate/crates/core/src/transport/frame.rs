//! Length-prefixed JSON frames: a 4-byte big-endian body length followed by
//! a UTF-8 JSON object carrying the protocol version `v` and a `kind`.

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

use crate::engine::{AgentId, MessageClass, Payload};
use crate::runtime::{Certificate, Envelope};
use crate::value::Value;

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME: usize = 1 << 20;
pub const FRAME_KINDS: [&str; 7] = ["adopt", "send", "envelope", "examineReply", "event", "ack", "error"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum FrameBody {
    /// Asks the service to adopt a law for the certified agent.
    Adopt {
        cert: Certificate,
        law: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pool: Option<usize>,
    },
    /// The actor of `from` sends `payload` to `to`.
    Send {
        from: AgentId,
        to: AgentId,
        payload: Payload,
    },
    /// An envelope handed over from another controller service.
    Envelope(Envelope),
    /// A `value` reply delivered to one of the connection's agents.
    #[serde(rename_all = "camelCase")]
    ExamineReply {
        agent: AgentId,
        from: Option<AgentId>,
        property: String,
        value: Value,
    },
    /// Any other payload delivered to one of the connection's agents.
    Event {
        agent: AgentId,
        payload: Payload,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sender: Option<AgentId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class: Option<MessageClass>,
    },
    Ack {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agent: Option<AgentId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        forwarded: Option<bool>,
    },
    Error {
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub v: u32,
    #[serde(flatten)]
    pub body: FrameBody,
}

impl Frame {
    pub fn new(body: FrameBody) -> Self {
        Frame { v: PROTOCOL_VERSION, body }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Frame::new(FrameBody::Error { message: message.into() })
    }

    pub fn ack(agent: Option<AgentId>, forwarded: Option<bool>) -> Self {
        Frame::new(FrameBody::Ack { agent, forwarded })
    }
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("frame too large: {0} bytes")]
    TooLarge(usize),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unknown frame kind {0:?}")]
    UnknownKind(String),
    #[error("protocol version mismatch: got {got}, expected {PROTOCOL_VERSION}")]
    Version { got: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FrameError {
    /// Errors after which the connection cannot continue.
    pub fn is_fatal(&self) -> bool {
        matches!(self, FrameError::TooLarge(_) | FrameError::Version { .. } | FrameError::Io(_))
    }
}

pub fn encode(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    let body = serde_json::to_vec(frame).map_err(|e| FrameError::Malformed(e.to_string()))?;
    if body.len() > MAX_FRAME {
        return Err(FrameError::TooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Parses one frame body, checking version and kind before the fields.
pub fn decode_body(body: &[u8]) -> Result<Frame, FrameError> {
    let raw: serde_json::Value = serde_json::from_slice(body).map_err(|e| FrameError::Malformed(e.to_string()))?;
    let v = raw.get("v").and_then(serde_json::Value::as_u64).ok_or_else(|| FrameError::Malformed("missing v".into()))?;
    if v != u64::from(PROTOCOL_VERSION) {
        return Err(FrameError::Version { got: v });
    }
    let kind = raw.get("kind").and_then(serde_json::Value::as_str).ok_or_else(|| FrameError::Malformed("missing kind".into()))?;
    if !FRAME_KINDS.contains(&kind) {
        return Err(FrameError::UnknownKind(kind.to_string()));
    }
    serde_json::from_value(raw).map_err(|e| FrameError::Malformed(e.to_string()))
}

/// Decodes the first complete frame in `buf`, returning it with the number
/// of bytes it occupied, or `None` if more bytes are needed.
pub fn decode(buf: &[u8]) -> Result<Option<(Frame, usize)>, FrameError> {
    let Some(head) = buf.get(..4) else { return Ok(None) };
    let len = u32::from_be_bytes(head.try_into().expect("four bytes")) as usize;
    if len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let Some(body) = buf.get(4..4 + len) else { return Ok(None) };
    Ok(Some((decode_body(body)?, 4 + len)))
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
///
/// A frame that is well delimited but invalid is consumed entirely, so the
/// caller may report the error and keep reading.
pub async fn read_frame<R: AsyncRead + Unpin>(r: &mut R) -> Result<Option<Frame>, FrameError> {
    let mut head = [0u8; 4];
    match r.read_exact(&mut head).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(head) as usize;
    if len > MAX_FRAME {
        return Err(FrameError::TooLarge(len));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).await?;
    decode_body(&body).map(Some)
}

pub async fn write_frame<W: AsyncWrite + Unpin>(w: &mut W, frame: &Frame) -> Result<(), FrameError> {
    w.write_all(&encode(frame)?).await?;
    w.flush().await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Layer;

    fn send_frame() -> Frame {
        Frame::new(FrameBody::Send {
            from: AgentId::new("InM", "store7", Layer::B),
            to: AgentId::new("buyer", "store7", Layer::B),
            payload: Payload::new("purchaseRequest", vec![Value::str("milk"), Value::Num(60.0)]),
        })
    }

    #[test]
    fn round_trip_and_partial_input() {
        let bytes = encode(&send_frame()).unwrap();
        assert_eq!(decode(&bytes[..3]).unwrap(), None);
        assert_eq!(decode(&bytes[..bytes.len() - 1]).unwrap(), None);
        let (f, n) = decode(&bytes).unwrap().unwrap();
        assert_eq!((f, n), (send_frame(), bytes.len()));
    }

    #[test]
    fn rejects_oversize_unknown_and_foreign_version() {
        let mut big = (MAX_FRAME as u32 + 1).to_be_bytes().to_vec();
        big.extend_from_slice(b"{}");
        assert!(matches!(decode(&big), Err(FrameError::TooLarge(_))));
        assert!(matches!(decode_body(br#"{"v":1,"kind":"gossip"}"#), Err(FrameError::UnknownKind(k)) if k == "gossip"));
        let e = decode_body(br#"{"v":2,"kind":"ack"}"#).unwrap_err();
        assert!(matches!(e, FrameError::Version { got: 2 }) && e.is_fatal());
        assert!(!decode_body(br#"{"v":1,"kind":"send"}"#).unwrap_err().is_fatal());
        assert_eq!(decode_body(br#"{"v":1,"kind":"ack"}"#).unwrap(), Frame::ack(None, None));
    }

    #[tokio::test]
    async fn async_stream_round_trip() {
        let (mut a, mut b) = tokio::io::duplex(64);
        let f = send_frame();
        let writer = tokio::spawn(async move {
            write_frame(&mut a, &f).await.unwrap();
            write_frame(&mut a, &Frame::error("frame too large")).await.unwrap();
        });
        assert_eq!(read_frame(&mut b).await.unwrap(), Some(send_frame()));
        assert_eq!(read_frame(&mut b).await.unwrap(), Some(Frame::error("frame too large")));
        writer.await.unwrap();
        assert_eq!(read_frame(&mut b).await.unwrap(), None);
    }
}
