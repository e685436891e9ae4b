//! A framed connection with optional transcript recording.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::sync::{Arc, Mutex};

use super::{ErrorMsg, Frame, MsgType, Result, SessionId, WireError};

/// Anything a link can run over: TCP streams, Unix socket pairs, pipes.
pub trait Stream: Read + Write + Send {}

impl<T: Read + Write + Send> Stream for T {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub msg_type: MsgType,
    pub seq: u32,
    pub wire_len: usize,
}

/// Shared log of the frames crossing one or more links.
#[derive(Clone, Debug, Default)]
pub struct Transcript(Arc<Mutex<Vec<TranscriptEntry>>>);

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    fn record(&self, direction: Direction, frame: &Frame) {
        let entry = TranscriptEntry { direction, msg_type: frame.msg_type, seq: frame.seq, wire_len: frame.wire_len() };
        self.0.lock().unwrap().push(entry);
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.0.lock().unwrap().clone()
    }

    /// Frame count and total bytes per (direction, type).
    pub fn summary(&self) -> HashMap<(Direction, MsgType), (usize, usize)> {
        let mut out = HashMap::new();
        for e in self.0.lock().unwrap().iter() {
            let slot = out.entry((e.direction, e.msg_type)).or_insert((0, 0));
            slot.0 += 1;
            slot.1 += e.wire_len;
        }
        out
    }
}

/// One reader and one writer over a byte stream. Outgoing frames are
/// buffered until [`FramedLink::flush`].
///
/// An ERROR frame ends its session: `recv` reports it once and silently
/// drops every later frame carrying the same session id.
pub struct FramedLink {
    stream: Box<dyn Stream>,
    out: Vec<u8>,
    transcript: Option<Transcript>,
    terminated: HashSet<SessionId>,
}

impl FramedLink {
    pub fn new(stream: impl Stream + 'static) -> Self {
        FramedLink { stream: Box::new(stream), out: Vec::new(), transcript: None, terminated: HashSet::new() }
    }

    pub fn with_transcript(mut self, transcript: Transcript) -> Self {
        self.transcript = Some(transcript);
        self
    }

    pub fn queue(&mut self, frame: &Frame) -> Result<()> {
        frame.encode_into(&mut self.out)?;
        if let Some(t) = &self.transcript {
            t.record(Direction::Sent, frame);
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if !self.out.is_empty() {
            self.stream.write_all(&self.out)?;
            self.out.clear();
        }
        self.stream.flush()?;
        Ok(())
    }

    pub fn send(&mut self, frame: &Frame) -> Result<()> {
        self.queue(frame)?;
        self.flush()
    }

    pub fn send_error(&mut self, session: SessionId, error: ErrorMsg) -> Result<()> {
        self.send(&error.into_frame(session))
    }

    pub fn recv(&mut self) -> Result<Frame> {
        loop {
            let frame = Frame::read_from(&mut self.stream)?;
            if let Some(t) = &self.transcript {
                t.record(Direction::Received, &frame);
            }
            if self.terminated.contains(&frame.session) {
                log::debug!("dropping {} for terminated session", frame.msg_type);
                continue;
            }
            if frame.msg_type == MsgType::Error {
                self.terminated.insert(frame.session);
                let err = ErrorMsg::decode(&frame.payload)?;
                return Err(WireError::Remote { code: err.code, message: err.message });
            }
            return Ok(frame);
        }
    }

    pub fn recv_expect(&mut self, expected: MsgType) -> Result<Frame> {
        let frame = self.recv()?;
        if frame.msg_type != expected {
            return Err(WireError::Unexpected { expected, got: frame.msg_type });
        }
        Ok(frame)
    }

    /// Sends a batch and collects one reply per request, matched by `seq`.
    /// Replies may arrive in any order; they are returned in request order.
    pub fn exchange(&mut self, requests: &[Frame]) -> Result<Vec<Frame>> {
        let mut slot = HashMap::with_capacity(requests.len());
        for (i, f) in requests.iter().enumerate() {
            if slot.insert(f.seq, i).is_some() {
                return Err(WireError::Malformed("duplicate seq in batch"));
            }
            self.queue(f)?;
        }
        self.flush()?;
        let mut replies: Vec<Option<Frame>> = vec![None; requests.len()];
        for _ in 0..requests.len() {
            let frame = self.recv()?;
            let i = *slot.get(&frame.seq).ok_or(WireError::Malformed("reply for an unknown seq"))?;
            if replies[i].replace(frame).is_some() {
                return Err(WireError::Malformed("two replies for one seq"));
            }
        }
        Ok(replies.into_iter().map(Option::unwrap).collect())
    }
}
