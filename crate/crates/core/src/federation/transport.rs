use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::error::{Error, Result, TransportError};

use super::codec::{decode, decode_header, encode, Message, HEADER_LEN};

/// Per-phase read timeout for TCP links.
pub const TCP_TIMEOUT: Duration = Duration::from_secs(30);

/// Which wire carries frames between parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Inproc,
    Tcp,
}

impl std::str::FromStr for TransportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inproc" => Ok(TransportKind::Inproc),
            "tcp" => Ok(TransportKind::Tcp),
            other => Err(Error::Config(format!("unknown transport `{other}` (inproc|tcp)"))),
        }
    }
}

impl std::fmt::Display for TransportKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TransportKind::Inproc => "inproc",
            TransportKind::Tcp => "tcp",
        })
    }
}

/// One end of a bidirectional, in-order, exactly-once frame pipe.
pub trait Link: Send {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()>;
    fn recv_frame(&mut self) -> Result<Vec<u8>>;

    fn send(&mut self, msg: &Message) -> Result<()> {
        self.send_frame(encode(msg))
    }

    fn recv(&mut self) -> Result<Message> {
        decode(&self.recv_frame()?)
    }
}

impl<L: Link + ?Sized> Link for Box<L> {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        (**self).send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        (**self).recv_frame()
    }
}

/// Channel-backed link; blocks indefinitely on receive.
pub struct InprocLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

impl InprocLink {
    pub fn pair() -> (Self, Self) {
        let (a_tx, b_rx) = channel();
        let (b_tx, a_rx) = channel();
        (InprocLink { tx: a_tx, rx: a_rx }, InprocLink { tx: b_tx, rx: b_rx })
    }
}

impl Link for InprocLink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.tx
            .send(frame)
            .map_err(|_| TransportError::ConnectionLost("peer dropped its end".into()).into())
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        self.rx
            .recv()
            .map_err(|_| TransportError::ConnectionLost("peer dropped its end".into()).into())
    }
}

/// Loopback TCP link.
pub struct TcpLink {
    stream: TcpStream,
}

impl TcpLink {
    /// Connects two fresh sockets through an ephemeral loopback listener.
    pub fn pair() -> Result<(Self, Self)> {
        Self::pair_with_timeout(TCP_TIMEOUT)
    }

    pub fn pair_with_timeout(timeout: Duration) -> Result<(Self, Self)> {
        let io = |e: std::io::Error| Error::from(TransportError::ConnectionLost(e.to_string()));
        let listener = TcpListener::bind("127.0.0.1:0").map_err(io)?;
        let addr = listener.local_addr().map_err(io)?;
        let client = TcpStream::connect(addr).map_err(io)?;
        let (server, _) = listener.accept().map_err(io)?;
        let wrap = |s: TcpStream| -> Result<TcpLink> {
            s.set_nodelay(true).map_err(io)?;
            s.set_read_timeout(Some(timeout)).map_err(io)?;
            Ok(TcpLink { stream: s })
        };
        Ok((wrap(client)?, wrap(server)?))
    }

    fn read_exact_or(&mut self, buf: &mut [u8], already: usize) -> std::result::Result<(), TransportError> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.stream.read(&mut buf[filled..]) {
                Ok(0) if filled + already == 0 => {
                    return Err(TransportError::ConnectionLost("peer closed the connection".into()))
                }
                Ok(0) => {
                    return Err(TransportError::Truncated {
                        needed: already + buf.len(),
                        available: already + filled,
                    })
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    return Err(TransportError::TimedOut)
                }
                Err(e) => return Err(TransportError::ConnectionLost(e.to_string())),
            }
        }
        Ok(())
    }
}

impl Link for TcpLink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.stream
            .write_all(&frame)
            .map_err(|e| TransportError::ConnectionLost(e.to_string()).into())
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let mut frame = vec![0u8; HEADER_LEN];
        self.read_exact_or(&mut frame, 0)?;
        let header = decode_header(&frame)?;
        frame.resize(HEADER_LEN + header.payload_len, 0);
        self.read_exact_or(&mut frame[HEADER_LEN..], HEADER_LEN)?;
        Ok(frame)
    }
}

impl Drop for TcpLink {
    fn drop(&mut self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

/// Shared record of every frame that crossed a tapped link.
#[derive(Debug, Clone, Default)]
pub struct FrameLog {
    frames: Arc<Mutex<Vec<Vec<u8>>>>,
}

impl FrameLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn frames(&self) -> Vec<Vec<u8>> {
        self.frames.lock().expect("frame log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.frames.lock().expect("frame log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, frame: &[u8]) {
        self.frames.lock().expect("frame log poisoned").push(frame.to_vec());
    }
}

/// Records each frame sent through the wrapped link.
pub struct TappedLink<L> {
    inner: L,
    log: FrameLog,
}

impl<L: Link> TappedLink<L> {
    pub fn new(inner: L, log: FrameLog) -> Self {
        Self { inner, log }
    }
}

impl<L: Link> Link for TappedLink<L> {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.log.push(&frame);
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        self.inner.recv_frame()
    }
}

/// A connected pair of the requested kind, optionally tapping both directions.
pub fn link_pair(kind: TransportKind, log: Option<&FrameLog>) -> Result<(Box<dyn Link>, Box<dyn Link>)> {
    let (a, b): (Box<dyn Link>, Box<dyn Link>) = match kind {
        TransportKind::Inproc => {
            let (a, b) = InprocLink::pair();
            (Box::new(a), Box::new(b))
        }
        TransportKind::Tcp => {
            let (a, b) = TcpLink::pair()?;
            (Box::new(a), Box::new(b))
        }
    };
    Ok(match log {
        Some(log) => (
            Box::new(TappedLink::new(a, log.clone())),
            Box::new(TappedLink::new(b, log.clone())),
        ),
        None => (a, b),
    })
}
