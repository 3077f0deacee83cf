//! TCP receive side of the frame protocol.
//!
//! A reader thread decodes lines into a small latest-wins queue: when the
//! consumer falls behind, the oldest pending frame is discarded.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::{debug, warn};

use crate::server::wire::{self, TargetMessage};

pub const QUEUE_DEPTH: usize = 4;

#[derive(Debug)]
struct QueueState<T> {
    items: VecDeque<T>,
    closed: bool,
}

/// Bounded queue that drops its oldest element on overflow.
#[derive(Debug)]
pub struct LatestQueue<T> {
    state: Mutex<QueueState<T>>,
    ready: Condvar,
    depth: usize,
    dropped: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecvError {
    Timeout,
    Closed,
}

impl<T> LatestQueue<T> {
    pub fn new(depth: usize) -> Self {
        assert!(depth > 0);
        Self {
            state: Mutex::new(QueueState {
                items: VecDeque::with_capacity(depth),
                closed: false,
            }),
            ready: Condvar::new(),
            depth,
            dropped: AtomicU64::new(0),
        }
    }

    pub fn push(&self, item: T) {
        let mut st = self.state.lock().expect("queue lock");
        if st.items.len() >= self.depth {
            st.items.pop_front();
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
        st.items.push_back(item);
        self.ready.notify_one();
    }

    pub fn close(&self) {
        self.state.lock().expect("queue lock").closed = true;
        self.ready.notify_all();
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<T, RecvError> {
        let deadline = Instant::now() + timeout;
        let mut st = self.state.lock().expect("queue lock");
        loop {
            if let Some(item) = st.items.pop_front() {
                return Ok(item);
            }
            if st.closed {
                return Err(RecvError::Closed);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(RecvError::Timeout);
            }
            st = self.ready.wait_timeout(st, deadline - now).expect("queue lock").0;
        }
    }

    pub fn dropped(&self) -> u64 {
        self.dropped.load(Ordering::Relaxed)
    }
}

/// Connected frame stream from a tracking server or peer headset.
pub struct FrameLink {
    queue: Arc<LatestQueue<TargetMessage>>,
    malformed: Arc<AtomicU64>,
    reader: Option<JoinHandle<()>>,
    stream: TcpStream,
    peer: SocketAddr,
}

impl FrameLink {
    /// Connects, retrying until `window` has elapsed.
    pub fn connect(addr: &str, window: Duration) -> std::io::Result<Self> {
        let deadline = Instant::now() + window;
        let target = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "no address"))?;
        loop {
            match TcpStream::connect_timeout(&target, Duration::from_millis(500)) {
                Ok(s) => return Self::from_stream(s),
                Err(e) if Instant::now() < deadline => {
                    debug!("connect to {target} failed ({e}); retrying");
                    std::thread::sleep(Duration::from_millis(100));
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn from_stream(stream: TcpStream) -> std::io::Result<Self> {
        stream.set_nodelay(true)?;
        let peer = stream.peer_addr()?;
        let read_half = stream.try_clone()?;
        let queue = Arc::new(LatestQueue::new(QUEUE_DEPTH));
        let malformed = Arc::new(AtomicU64::new(0));
        let (q, bad) = (Arc::clone(&queue), Arc::clone(&malformed));
        let reader = std::thread::Builder::new().name("frame-reader".into()).spawn(move || {
            let mut lines = BufReader::new(read_half);
            let mut buf = String::new();
            loop {
                buf.clear();
                match lines.read_line(&mut buf) {
                    Ok(0) => break,
                    Ok(_) => match wire::decode(&buf) {
                        Ok(msg) => q.push(msg),
                        Err(e) => {
                            warn!("skipping malformed frame: {e}");
                            bad.fetch_add(1, Ordering::Relaxed);
                        }
                    },
                    Err(e) => {
                        debug!("frame stream ended: {e}");
                        break;
                    }
                }
            }
            q.close();
        })?;
        Ok(Self {
            queue,
            malformed,
            reader: Some(reader),
            stream,
            peer,
        })
    }

    pub fn peer(&self) -> SocketAddr {
        self.peer
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<TargetMessage, RecvError> {
        self.queue.recv_timeout(timeout)
    }

    pub fn dropped(&self) -> u64 {
        self.queue.dropped()
    }

    pub fn malformed(&self) -> u64 {
        self.malformed.load(Ordering::Relaxed)
    }

    pub fn close(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        let _ = self.stream.shutdown(std::net::Shutdown::Both);
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

impl Drop for FrameLink {
    fn drop(&mut self) {
        self.shutdown();
    }
}
