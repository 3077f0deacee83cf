//! Fan-out of encoded frames to connected TCP clients.
//!
//! Each client owns a bounded outbox drained by its own writer thread. When a
//! slow client's outbox is full the oldest frame is discarded.

use std::collections::VecDeque;
use std::io::{ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::{debug, info, warn};

use super::ServerError;

pub const OUTBOX_DEPTH: usize = 64;
pub const SHUTDOWN_GRACE: Duration = Duration::from_secs(2);

#[derive(Default)]
struct OutboxState {
    frames: VecDeque<Arc<[u8]>>,
    closed: bool,
}

struct Outbox {
    state: Mutex<OutboxState>,
    ready: Condvar,
    disconnected: AtomicBool,
    overflowed: AtomicU64,
}

impl Outbox {
    fn new() -> Self {
        Self {
            state: Mutex::new(OutboxState::default()),
            ready: Condvar::new(),
            disconnected: AtomicBool::new(false),
            overflowed: AtomicU64::new(0),
        }
    }

    fn push(&self, frame: Arc<[u8]>) {
        let mut st = self.state.lock().expect("outbox lock");
        if st.frames.len() >= OUTBOX_DEPTH {
            st.frames.pop_front();
            self.overflowed.fetch_add(1, Ordering::Relaxed);
        }
        st.frames.push_back(frame);
        self.ready.notify_one();
    }

    fn close(&self) {
        self.state.lock().expect("outbox lock").closed = true;
        self.ready.notify_all();
    }

    /// Blocks for the next frame; `None` once closed and drained.
    fn pop(&self) -> Option<Arc<[u8]>> {
        let mut st = self.state.lock().expect("outbox lock");
        loop {
            if let Some(f) = st.frames.pop_front() {
                return Some(f);
            }
            if st.closed {
                return None;
            }
            st = self.ready.wait(st).expect("outbox lock");
        }
    }
}

struct ClientConn {
    peer: SocketAddr,
    outbox: Arc<Outbox>,
    writer: JoinHandle<()>,
}

fn spawn_writer(mut stream: TcpStream, outbox: Arc<Outbox>) -> std::io::Result<JoinHandle<()>> {
    std::thread::Builder::new().name("frame-writer".into()).spawn(move || {
        while let Some(frame) = outbox.pop() {
            if let Err(e) = stream.write_all(&frame) {
                debug!("client write failed: {e}");
                outbox.disconnected.store(true, Ordering::Release);
                break;
            }
        }
        let _ = stream.flush();
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BroadcastStats {
    pub delivered: usize,
    pub pruned: usize,
}

pub struct Broadcaster {
    listener: TcpListener,
    clients: Vec<ClientConn>,
    served: usize,
    overflowed: u64,
}

impl Broadcaster {
    pub fn bind(addr: &str) -> Result<Self, ServerError> {
        let listener = TcpListener::bind(addr).map_err(|e| ServerError::Bind(addr.to_string(), e))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| ServerError::Bind(addr.to_string(), e))?;
        Ok(Self {
            listener,
            clients: Vec::new(),
            served: 0,
            overflowed: 0,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.listener.local_addr().expect("bound listener has an address")
    }

    /// Accepts every pending connection without blocking.
    pub fn accept_pending(&mut self) -> usize {
        let mut n = 0;
        loop {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    if let Err(e) = self.attach(stream, peer) {
                        warn!("dropping client {peer}: {e}");
                        continue;
                    }
                    n += 1;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(e) => {
                    warn!("accept failed: {e}");
                    break;
                }
            }
        }
        n
    }

    fn attach(&mut self, stream: TcpStream, peer: SocketAddr) -> std::io::Result<()> {
        stream.set_nonblocking(false)?;
        stream.set_nodelay(true)?;
        stream.set_write_timeout(Some(SHUTDOWN_GRACE))?;
        let outbox = Arc::new(Outbox::new());
        let writer = spawn_writer(stream, Arc::clone(&outbox))?;
        info!("client connected: {peer}");
        self.clients.push(ClientConn { peer, outbox, writer });
        self.served += 1;
        Ok(())
    }

    /// Polls for connections until `n` clients are attached or `timeout` passes.
    pub fn wait_for_clients(&mut self, n: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            self.accept_pending();
            if self.connected() >= n {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    pub fn connected(&self) -> usize {
        self.clients.len()
    }

    pub fn clients_served(&self) -> usize {
        self.served
    }

    pub fn overflowed(&self) -> u64 {
        self.overflowed + self.clients.iter().map(|c| c.outbox.overflowed.load(Ordering::Relaxed)).sum::<u64>()
    }

    /// Queues the same bytes for every live client and prunes the dead ones.
    pub fn broadcast(&mut self, line: &[u8]) -> BroadcastStats {
        let mut stats = BroadcastStats::default();
        let frame: Arc<[u8]> = Arc::from(line);
        let mut kept = Vec::with_capacity(self.clients.len());
        for c in self.clients.drain(..) {
            if c.outbox.disconnected.load(Ordering::Acquire) {
                info!("client disconnected: {}", c.peer);
                self.overflowed += c.outbox.overflowed.load(Ordering::Relaxed);
                c.outbox.close();
                let _ = c.writer.join();
                stats.pruned += 1;
                continue;
            }
            c.outbox.push(Arc::clone(&frame));
            stats.delivered += 1;
            kept.push(c);
        }
        self.clients = kept;
        stats
    }

    /// Flushes outboxes and joins writer threads. Writers stuck on a stalled
    /// peer give up after the socket write timeout.
    pub fn shutdown(&mut self) {
        for c in &self.clients {
            c.outbox.close();
        }
        for c in self.clients.drain(..) {
            let _ = c.writer.join();
        }
    }
}

impl Drop for Broadcaster {
    fn drop(&mut self) {
        self.shutdown();
    }
}
