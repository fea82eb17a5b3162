use crate::error::{Result, TransportError};
use crate::numkernel::Matrix;

pub const MAGIC: [u8; 4] = *b"MICS";
pub const PROTOCOL_VERSION: u8 = 1;
/// magic | version | type | round | payload length.
pub const HEADER_LEN: usize = 4 + 1 + 1 + 4 + 4;

/// Which customer subset a message refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
    /// Previously unseen rows submitted for prediction.
    Query,
}

impl Split {
    fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
            Split::Query => 2,
        }
    }

    fn from_code(c: u8) -> std::result::Result<Self, TransportError> {
        match c {
            0 => Ok(Split::Train),
            1 => Ok(Split::Test),
            2 => Ok(Split::Query),
            other => Err(TransportError::Malformed(format!("split code {other}"))),
        }
    }
}

/// Everything parties say to each other.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Company → industry, setup only: transformed, tagged rows keyed by customer id.
    CompanyUpload {
        industry: u32,
        company: u32,
        split: Split,
        ids: Vec<u64>,
        rows: Matrix,
    },
    /// Industry → global, setup only: the id order of the aligned batch.
    AlignedIds {
        industry: u32,
        split: Split,
        ids: Vec<u64>,
    },
    /// Global → industry: open a round over the given aligned row positions
    /// (empty means the whole training batch).
    RoundStart {
        round: u32,
        rows: Vec<u64>,
    },
    EmbeddingUp {
        industry: u32,
        round: u32,
        z: Matrix,
    },
    /// `clock` is the sender's logical clock after its own update.
    GradientDown {
        industry: u32,
        round: u32,
        clock: u64,
        grad: Matrix,
    },
    /// Industry → global after its update: KL contribution and logical clock.
    EncoderReport {
        industry: u32,
        round: u32,
        clock: u64,
        kl: f64,
    },
    /// Global → industry: send eval-mode (ε = 0) embeddings of a whole split.
    EvalRequest {
        round: u32,
        split: Split,
    },
    MetricsReport {
        round: u32,
        loss: f64,
        accuracy: f64,
    },
    Shutdown {
        round: u32,
    },
    /// A party hit an error and is stopping.
    Fault {
        round: u32,
        reason: String,
    },
}

impl Message {
    pub fn round(&self) -> u32 {
        match self {
            Message::CompanyUpload { .. } | Message::AlignedIds { .. } => 0,
            Message::RoundStart { round, .. }
            | Message::EmbeddingUp { round, .. }
            | Message::GradientDown { round, .. }
            | Message::EncoderReport { round, .. }
            | Message::EvalRequest { round, .. }
            | Message::MetricsReport { round, .. }
            | Message::Shutdown { round }
            | Message::Fault { round, .. } => *round,
        }
    }

    pub fn type_code(&self) -> u8 {
        match self {
            Message::CompanyUpload { .. } => 1,
            Message::AlignedIds { .. } => 2,
            Message::RoundStart { .. } => 3,
            Message::EmbeddingUp { .. } => 4,
            Message::GradientDown { .. } => 5,
            Message::EncoderReport { .. } => 6,
            Message::EvalRequest { .. } => 7,
            Message::MetricsReport { .. } => 8,
            Message::Shutdown { .. } => 9,
            Message::Fault { .. } => 10,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::CompanyUpload { .. } => "CompanyUpload",
            Message::AlignedIds { .. } => "AlignedIds",
            Message::RoundStart { .. } => "RoundStart",
            Message::EmbeddingUp { .. } => "EmbeddingUp",
            Message::GradientDown { .. } => "GradientDown",
            Message::EncoderReport { .. } => "EncoderReport",
            Message::EvalRequest { .. } => "EvalRequest",
            Message::MetricsReport { .. } => "MetricsReport",
            Message::Shutdown { .. } => "Shutdown",
            Message::Fault { .. } => "Fault",
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_ids(out: &mut Vec<u8>, ids: &[u64]) {
    put_u32(out, ids.len() as u32);
    for &id in ids {
        put_u64(out, id);
    }
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    put_u32(out, m.rows() as u32);
    put_u32(out, m.cols() as u32);
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn payload(msg: &Message) -> Vec<u8> {
    let mut p = Vec::new();
    match msg {
        Message::CompanyUpload {
            industry,
            company,
            split,
            ids,
            rows,
        } => {
            put_u32(&mut p, *industry);
            put_u32(&mut p, *company);
            p.push(split.code());
            put_ids(&mut p, ids);
            put_matrix(&mut p, rows);
        }
        Message::AlignedIds { industry, split, ids } => {
            put_u32(&mut p, *industry);
            p.push(split.code());
            put_ids(&mut p, ids);
        }
        Message::RoundStart { rows, .. } => put_ids(&mut p, rows),
        Message::EmbeddingUp { industry, z, .. } => {
            put_u32(&mut p, *industry);
            put_matrix(&mut p, z);
        }
        Message::GradientDown {
            industry, clock, grad, ..
        } => {
            put_u32(&mut p, *industry);
            put_u64(&mut p, *clock);
            put_matrix(&mut p, grad);
        }
        Message::EncoderReport {
            industry, clock, kl, ..
        } => {
            put_u32(&mut p, *industry);
            put_u64(&mut p, *clock);
            p.extend_from_slice(&kl.to_le_bytes());
        }
        Message::EvalRequest { split, .. } => p.push(split.code()),
        Message::MetricsReport { loss, accuracy, .. } => {
            p.extend_from_slice(&loss.to_le_bytes());
            p.extend_from_slice(&accuracy.to_le_bytes());
        }
        Message::Shutdown { .. } => {}
        Message::Fault { reason, .. } => p.extend_from_slice(reason.as_bytes()),
    }
    p
}

/// Serializes one message into a complete frame.
pub fn encode(msg: &Message) -> Vec<u8> {
    let body = payload(msg);
    let mut frame = Vec::with_capacity(HEADER_LEN + body.len());
    frame.extend_from_slice(&MAGIC);
    frame.push(PROTOCOL_VERSION);
    frame.push(msg.type_code());
    put_u32(&mut frame, msg.round());
    put_u32(&mut frame, body.len() as u32);
    frame.extend_from_slice(&body);
    frame
}

/// Parsed frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub type_code: u8,
    pub round: u32,
    pub payload_len: usize,
}

/// Validates magic and version and reads the remaining header fields.
pub fn decode_header(bytes: &[u8]) -> std::result::Result<Header, TransportError> {
    if bytes.len() < HEADER_LEN {
        return Err(TransportError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(TransportError::BadMagic(magic));
    }
    if bytes[4] != PROTOCOL_VERSION {
        return Err(TransportError::VersionMismatch {
            got: bytes[4],
            expected: PROTOCOL_VERSION,
        });
    }
    Ok(Header {
        type_code: bytes[5],
        round: u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")),
        payload_len: u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize,
    })
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], TransportError> {
        if self.buf.len() < n {
            return Err(TransportError::Malformed(format!(
                "payload ends early: wanted {n} more bytes, {} left",
                self.buf.len()
            )));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> std::result::Result<u8, TransportError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<u32, TransportError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, TransportError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> std::result::Result<f64, TransportError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn ids(&mut self) -> std::result::Result<Vec<u64>, TransportError> {
        let n = self.u32()? as usize;
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| TransportError::Malformed("id count".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn matrix(&mut self) -> std::result::Result<Matrix, TransportError> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| TransportError::Malformed("matrix shape overflows".into()))?;
        let values = self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Matrix::from_vec(rows, cols, values).map_err(|e| TransportError::Malformed(e.to_string()))
    }

    fn split(&mut self) -> std::result::Result<Split, TransportError> {
        Split::from_code(self.u8()?)
    }
}

/// Parses exactly one frame. Nothing is returned unless the whole frame is present and valid.
pub fn decode(bytes: &[u8]) -> Result<Message> {
    Ok(decode_frame(bytes)?)
}

fn decode_frame(bytes: &[u8]) -> std::result::Result<Message, TransportError> {
    let header = decode_header(bytes)?;
    let needed = HEADER_LEN + header.payload_len;
    if bytes.len() < needed {
        return Err(TransportError::Truncated {
            needed,
            available: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(TransportError::Malformed(format!(
            "{} trailing bytes after frame",
            bytes.len() - needed
        )));
    }
    let round = header.round;
    let mut r = Reader {
        buf: &bytes[HEADER_LEN..],
    };
    let msg = match header.type_code {
        1 => Message::CompanyUpload {
            industry: r.u32()?,
            company: r.u32()?,
            split: r.split()?,
            ids: r.ids()?,
            rows: r.matrix()?,
        },
        2 => Message::AlignedIds {
            industry: r.u32()?,
            split: r.split()?,
            ids: r.ids()?,
        },
        3 => Message::RoundStart { round, rows: r.ids()? },
        4 => Message::EmbeddingUp {
            industry: r.u32()?,
            round,
            z: r.matrix()?,
        },
        5 => Message::GradientDown {
            industry: r.u32()?,
            round,
            clock: r.u64()?,
            grad: r.matrix()?,
        },
        6 => Message::EncoderReport {
            industry: r.u32()?,
            round,
            clock: r.u64()?,
            kl: r.f64()?,
        },
        7 => Message::EvalRequest {
            round,
            split: r.split()?,
        },
        8 => Message::MetricsReport {
            round,
            loss: r.f64()?,
            accuracy: r.f64()?,
        },
        9 => Message::Shutdown { round },
        10 => {
            let reason = String::from_utf8(r.take(r.buf.len())?.to_vec())
                .map_err(|e| TransportError::Malformed(format!("fault text: {e}")))?;
            Message::Fault { round, reason }
        }
        other => return Err(TransportError::UnknownType(other)),
    };
    if !r.buf.is_empty() {
        return Err(TransportError::Malformed(format!(
            "{} unread payload bytes in {}",
            r.buf.len(),
            msg.kind()
        )));
    }
    if matches!(msg, Message::CompanyUpload { .. } | Message::AlignedIds { .. }) && round != 0 {
        return Err(TransportError::Malformed(format!(
            "setup message stamped with round {round}"
        )));
    }
    Ok(msg)
}
