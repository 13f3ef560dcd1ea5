//! Network front ends: a UDP report ingest thread and a TCP query listener
//! with one thread per connection.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use log::{debug, info, warn};
use socket2::{Domain, Protocol, Socket, Type};

use crate::protocol::{self, ErrorCode, Frame, Request, MAX_REQUEST_LEN};
use crate::runtime::CollectorRuntime;

/// Requested kernel receive buffer for the report socket. The kernel may
/// clamp it; datagrams beyond capacity are dropped.
pub const REPORT_RCVBUF: usize = 16 << 20;

const POLL_INTERVAL: Duration = Duration::from_millis(50);

/// Running ingest and query endpoints for one [`CollectorRuntime`].
pub struct CollectorServer {
    runtime: Arc<CollectorRuntime>,
    report_addr: SocketAddr,
    query_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

fn bind_report_socket(addr: SocketAddr) -> io::Result<UdpSocket> {
    let socket = Socket::new(Domain::for_address(addr), Type::DGRAM, Some(Protocol::UDP))?;
    if let Err(e) = socket.set_recv_buffer_size(REPORT_RCVBUF) {
        warn!("could not enlarge report receive buffer: {e}");
    }
    socket.bind(&addr.into())?;
    let socket: UdpSocket = socket.into();
    socket.set_read_timeout(Some(POLL_INTERVAL))?;
    Ok(socket)
}

impl CollectorServer {
    /// Binds both endpoints (port 0 picks a free port) and starts serving.
    pub fn start(
        runtime: Arc<CollectorRuntime>,
        report_addr: SocketAddr,
        query_addr: SocketAddr,
    ) -> io::Result<Self> {
        let udp = bind_report_socket(report_addr)?;
        let tcp = TcpListener::bind(query_addr)?;
        let report_addr = udp.local_addr()?;
        let query_addr = tcp.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));

        let ingest = {
            let rt = Arc::clone(&runtime);
            let stop = Arc::clone(&shutdown);
            thread::Builder::new()
                .name(format!("ingest-{}", runtime.id().0))
                .spawn(move || ingest_loop(&rt, &udp, &stop))?
        };
        let accept = {
            let rt = Arc::clone(&runtime);
            let stop = Arc::clone(&shutdown);
            thread::Builder::new()
                .name(format!("query-{}", runtime.id().0))
                .spawn(move || accept_loop(rt, tcp, &stop))?
        };
        info!(
            "collector {} ingesting on udp {report_addr}, queries on tcp {query_addr}",
            runtime.id().0
        );
        Ok(CollectorServer {
            runtime,
            report_addr,
            query_addr,
            shutdown,
            threads: vec![ingest, accept],
        })
    }

    pub fn runtime(&self) -> &Arc<CollectorRuntime> {
        &self.runtime
    }

    pub fn report_addr(&self) -> SocketAddr {
        self.report_addr
    }

    pub fn query_addr(&self) -> SocketAddr {
        self.query_addr
    }

    /// Blocks until the server threads exit (they only do on shutdown).
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    /// Stops ingest and the listener. Open query connections finish when
    /// their clients disconnect.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.query_addr, Duration::from_secs(1));
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for CollectorServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Receives datagrams until `stop` is set. Uses one fixed buffer; the per
/// datagram path does not allocate.
pub fn ingest_loop(rt: &CollectorRuntime, socket: &UdpSocket, stop: &AtomicBool) {
    let mut buf = [0u8; 2048];
    while !stop.load(Ordering::Relaxed) {
        match socket.recv_from(&mut buf) {
            Ok((n, _)) => {
                let _ = rt.handle_datagram(&buf[..n]);
            }
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut
                ) => {}
            Err(e) => {
                warn!("report socket error: {e}");
                thread::sleep(POLL_INTERVAL);
            }
        }
    }
}

fn accept_loop(rt: Arc<CollectorRuntime>, listener: TcpListener, stop: &AtomicBool) {
    for conn in listener.incoming() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        match conn {
            Ok(stream) => {
                let rt = Arc::clone(&rt);
                let spawned = thread::Builder::new()
                    .name("query-conn".into())
                    .spawn(move || {
                        let peer = stream.peer_addr().ok();
                        if let Err(e) = serve_connection(&rt, stream) {
                            debug!("query connection {peer:?} ended: {e}");
                        }
                    });
                if let Err(e) = spawned {
                    warn!("could not spawn query handler: {e}");
                }
            }
            Err(e) => warn!("accept failed: {e}"),
        }
    }
}

/// Serves length-prefixed requests until the peer closes. Bad requests get
/// an error response and the connection stays open.
pub fn serve_connection(rt: &CollectorRuntime, stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let mut out = Vec::with_capacity(256);
    loop {
        let resp = match protocol::read_frame(&mut reader, MAX_REQUEST_LEN)? {
            Frame::Eof => return Ok(()),
            Frame::Oversize(len) => rt.error(
                ErrorCode::RequestTooLarge,
                format!("request of {len} bytes exceeds {MAX_REQUEST_LEN}"),
            ),
            Frame::Body(body) => match Request::decode(&body) {
                Ok(req) => rt.handle_request(&req),
                Err(e) => rt.error(ErrorCode::MalformedRequest, e.to_string()),
            },
        };
        out.clear();
        resp.encode(&mut out);
        protocol::write_frame(&mut writer, &out)?;
        // batch responses to pipelined requests
        if reader.buffer().is_empty() {
            writer.flush()?;
        }
    }
}
