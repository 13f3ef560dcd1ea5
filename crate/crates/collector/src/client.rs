//! Operator-side clients: one connection to one collector, and a cluster
//! client that picks the collector holding a key.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

use dart_core::store::{
    select_collector, CollectorId, ResolutionPolicy, StoreConfig, TelemetryKey,
};
use thiserror::Error;

use crate::protocol::{
    self, Frame, ProtocolError, QueryResponse, Request, Response, StatsResponse, MAX_RESPONSE_LEN,
};

/// Requests written before reading responses in [`CollectorClient::query_batch`].
const PIPELINE_DEPTH: usize = 256;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error talking to {addr}: {source}")]
    Transport {
        addr: SocketAddr,
        #[source]
        source: io::Error,
    },
    #[error("protocol error from {addr}: {source}")]
    Protocol {
        addr: SocketAddr,
        #[source]
        source: ProtocolError,
    },
    #[error("collector {collector} returned error {code}: {message}")]
    Server {
        collector: CollectorId,
        code: u8,
        message: String,
    },
    #[error("expected an answer from collector {expected}, got collector {got}")]
    WrongCollector {
        expected: CollectorId,
        got: CollectorId,
    },
    #[error("response type does not match the request")]
    UnexpectedResponse,
    #[error("cluster has {endpoints} endpoints but the config names {collectors} collectors")]
    EndpointCount { endpoints: usize, collectors: u32 },
}

pub struct CollectorClient {
    addr: SocketAddr,
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
    scratch: Vec<u8>,
}

impl CollectorClient {
    pub fn connect(addr: SocketAddr) -> Result<Self, ClientError> {
        Self::connect_timeout(addr, Duration::from_secs(5))
    }

    pub fn connect_timeout(addr: SocketAddr, timeout: Duration) -> Result<Self, ClientError> {
        let transport = |source| ClientError::Transport { addr, source };
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(transport)?;
        stream.set_nodelay(true).map_err(transport)?;
        let reader = BufReader::new(stream.try_clone().map_err(transport)?);
        Ok(CollectorClient {
            addr,
            reader,
            writer: BufWriter::new(stream),
            scratch: Vec::with_capacity(128),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    fn transport(&self, source: io::Error) -> ClientError {
        ClientError::Transport {
            addr: self.addr,
            source,
        }
    }

    fn send(&mut self, req: &Request) -> Result<(), ClientError> {
        self.scratch.clear();
        req.encode(&mut self.scratch);
        protocol::write_frame(&mut self.writer, &self.scratch).map_err(|e| self.transport(e))
    }

    fn flush(&mut self) -> Result<(), ClientError> {
        self.writer.flush().map_err(|e| self.transport(e))
    }

    fn receive(&mut self) -> Result<Response, ClientError> {
        let frame = protocol::read_frame(&mut self.reader, MAX_RESPONSE_LEN);
        let body = match frame.map_err(|e| self.transport(e))? {
            Frame::Body(b) => b,
            Frame::Eof => return Err(self.transport(io::ErrorKind::UnexpectedEof.into())),
            Frame::Oversize(n) => {
                return Err(ClientError::Protocol {
                    addr: self.addr,
                    source: ProtocolError::TooLarge(n),
                })
            }
        };
        let resp = Response::decode(&body).map_err(|source| ClientError::Protocol {
            addr: self.addr,
            source,
        })?;
        match resp {
            Response::Error {
                collector,
                code,
                message,
            } => Err(ClientError::Server {
                collector,
                code,
                message,
            }),
            other => Ok(other),
        }
    }

    /// Sends one request and waits for its response.
    pub fn call(&mut self, req: &Request) -> Result<Response, ClientError> {
        self.send(req)?;
        self.flush()?;
        self.receive()
    }

    pub fn query(
        &mut self,
        key: &[u8],
        policy: Option<ResolutionPolicy>,
    ) -> Result<QueryResponse, ClientError> {
        match self.call(&Request::Query {
            key: key.to_vec(),
            policy,
        })? {
            Response::Query(q) => Ok(q),
            _ => Err(ClientError::UnexpectedResponse),
        }
    }

    /// Queries many keys with pipelined requests. Server-side errors for one
    /// key are returned in place; transport errors abort the batch.
    pub fn query_batch<K: AsRef<[u8]>>(
        &mut self,
        keys: &[K],
        policy: Option<ResolutionPolicy>,
    ) -> Result<Vec<Result<QueryResponse, ClientError>>, ClientError> {
        let mut out = Vec::with_capacity(keys.len());
        for chunk in keys.chunks(PIPELINE_DEPTH) {
            for k in chunk {
                self.send(&Request::Query {
                    key: k.as_ref().to_vec(),
                    policy,
                })?;
            }
            self.flush()?;
            for _ in chunk {
                match self.receive() {
                    Ok(Response::Query(q)) => out.push(Ok(q)),
                    Ok(_) => out.push(Err(ClientError::UnexpectedResponse)),
                    Err(e @ ClientError::Server { .. }) => out.push(Err(e)),
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(out)
    }

    pub fn stats(&mut self) -> Result<StatsResponse, ClientError> {
        match self.call(&Request::Stats)? {
            Response::Stats(s) => Ok(s),
            _ => Err(ClientError::UnexpectedResponse),
        }
    }

    /// Asks the collector to write a snapshot on its own filesystem. `None`
    /// uses the collector's configured path. Returns the bytes written.
    pub fn snapshot(&mut self, path: Option<&str>) -> Result<u64, ClientError> {
        let req = Request::Snapshot {
            path: path.unwrap_or_default().to_string(),
        };
        match self.call(&req)? {
            Response::Snapshot { bytes, .. } => Ok(bytes),
            _ => Err(ClientError::UnexpectedResponse),
        }
    }
}

/// Routes each query to the collector `select_collector` assigns the key
/// to. A collector that cannot be reached yields a transport error; there is
/// no failover because no other collector holds the key.
pub struct ClusterClient {
    config: StoreConfig,
    endpoints: Vec<SocketAddr>,
    connections: Vec<Option<CollectorClient>>,
}

impl ClusterClient {
    /// `endpoints[i]` is the query address of collector `i`.
    pub fn new(config: StoreConfig, endpoints: Vec<SocketAddr>) -> Result<Self, ClientError> {
        if endpoints.len() != config.num_collectors as usize {
            return Err(ClientError::EndpointCount {
                endpoints: endpoints.len(),
                collectors: config.num_collectors,
            });
        }
        let connections = endpoints.iter().map(|_| None).collect();
        Ok(ClusterClient {
            config,
            endpoints,
            connections,
        })
    }

    pub fn collector_for(&self, key: &TelemetryKey) -> CollectorId {
        select_collector(key, &self.config)
    }

    pub fn query(
        &mut self,
        key: &TelemetryKey,
        policy: Option<ResolutionPolicy>,
    ) -> Result<QueryResponse, ClientError> {
        let id = self.collector_for(key);
        let idx = id.0 as usize;
        if self.connections[idx].is_none() {
            self.connections[idx] = Some(CollectorClient::connect(self.endpoints[idx])?);
        }
        let conn = self.connections[idx].as_mut().expect("connected above");
        match conn.query(key.as_bytes(), policy) {
            Ok(q) if q.collector != id => Err(ClientError::WrongCollector {
                expected: id,
                got: q.collector,
            }),
            Ok(q) => Ok(q),
            Err(e) => {
                if matches!(
                    e,
                    ClientError::Transport { .. } | ClientError::Protocol { .. }
                ) {
                    self.connections[idx] = None;
                }
                Err(e)
            }
        }
    }
}
