use super::protocol::{self, Reply, SubscribeRequest};
use super::{GazeFrame, Result, TrackerError};
use log::{debug, warn};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pacing {
    /// Frames leave at the rate their timestamps imply.
    RealTime,
    /// Frames leave as fast as the socket accepts them.
    Accelerated,
}

type FrameFactory = dyn Fn() -> Box<dyn Iterator<Item = GazeFrame> + Send> + Send + Sync;

/// Produces a fresh frame stream for every subscribing client.
#[derive(Clone)]
pub struct FrameSource(Arc<FrameFactory>);

impl FrameSource {
    pub fn replay(frames: Vec<GazeFrame>) -> Self {
        let frames = Arc::new(frames);
        FrameSource(Arc::new(move || {
            let frames = Arc::clone(&frames);
            Box::new((0..frames.len()).map(move |i| frames[i]))
        }))
    }

    pub fn generator<F, I>(make: F) -> Self
    where
        F: Fn() -> I + Send + Sync + 'static,
        I: Iterator<Item = GazeFrame> + Send + 'static,
    {
        FrameSource(Arc::new(move || Box::new(make())))
    }

    fn open(&self) -> Box<dyn Iterator<Item = GazeFrame> + Send> {
        (self.0)()
    }
}

/// Stand-in tracker. Each client gets its own thread and a complete stream;
/// the connection is closed when the source is exhausted.
pub struct MockTracker {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    served: Arc<AtomicUsize>,
    acceptor: Option<JoinHandle<()>>,
}

const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);

impl MockTracker {
    pub fn serve(source: FrameSource, addr: impl ToSocketAddrs + std::fmt::Debug, pacing: Pacing) -> Result<Self> {
        let listener =
            TcpListener::bind(&addr).map_err(|source| TrackerError::Bind { addr: format!("{addr:?}"), source })?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let served = Arc::new(AtomicUsize::new(0));

        let acceptor = {
            let stop = Arc::clone(&stop);
            let served = Arc::clone(&served);
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    match conn {
                        Ok(stream) => {
                            let source = source.clone();
                            let served = Arc::clone(&served);
                            let stop = Arc::clone(&stop);
                            thread::spawn(move || {
                                match serve_client(stream, &source, pacing, &stop) {
                                    Ok(n) => debug!("mock tracker: client received {n} frames"),
                                    Err(e) => debug!("mock tracker: client ended: {e}"),
                                }
                                served.fetch_add(1, Ordering::SeqCst);
                            });
                        }
                        Err(e) => warn!("mock tracker: accept failed: {e}"),
                    }
                }
            })
        };

        Ok(MockTracker { addr: local, stop, served, acceptor: Some(acceptor) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Clients whose stream has finished (completed or disconnected).
    pub fn clients_served(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }

    /// Blocks until the server is stopped from another handle; used by the CLI.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockTracker {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop_accepting();
        }
    }
}

fn serve_client(stream: TcpStream, source: &FrameSource, pacing: Pacing, stop: &AtomicBool) -> Result<usize> {
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT))?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);

    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(0);
    }
    let subscribed =
        serde_json::from_str::<SubscribeRequest>(line.trim()).map(|req| req.is_push_subscription()).unwrap_or(false);
    if !subscribed {
        writer.write_all(protocol::to_line(&Reply::bad_request()).as_bytes())?;
        writer.flush()?;
        return Err(TrackerError::Protocol {
            line_no: 1,
            line: line.trim().to_string(),
            reason: "not a push subscription".into(),
        });
    }
    writer.write_all(protocol::to_line(&Reply::ack()).as_bytes())?;
    writer.flush()?;

    let mut sent = 0;
    let mut origin: Option<(i64, Instant)> = None;
    for frame in source.open() {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        if pacing == Pacing::RealTime {
            let (ts0, t0) = *origin.get_or_insert((frame.ts_ms, Instant::now()));
            let due = t0 + Duration::from_millis((frame.ts_ms - ts0).max(0) as u64);
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        writer.write_all(protocol::to_line(&Reply::frame(&frame)).as_bytes())?;
        if pacing == Pacing::RealTime {
            writer.flush()?;
        }
        sent += 1;
    }
    writer.flush()?;
    Ok(sent)
}
