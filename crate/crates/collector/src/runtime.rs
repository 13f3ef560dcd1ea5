use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use dart_core::store::snapshot::{self, SnapshotError};
use dart_core::store::{
    Answer, CollectorId, RegionLayout, ResolutionPolicy, Store, StoreConfig, StoreError,
    TelemetryKey,
};
use dart_core::wire::{parse_report, Reject};

use crate::protocol::{ErrorCode, QueryResponse, Request, Response, StatsResponse};

/// Monotone ingest and query counters. `received` is derived as
/// `accepted + Σ rejected` so conservation holds at every instant.
#[derive(Debug, Default)]
pub struct IngestStats {
    accepted: AtomicU64,
    rejected: [AtomicU64; Reject::ALL.len()],
    queries: AtomicU64,
}

impl IngestStats {
    fn accept(&self) {
        self.accepted.fetch_add(1, Ordering::Relaxed);
    }

    fn reject(&self, reason: Reject) {
        self.rejected[usize::from(reason.code())].fetch_add(1, Ordering::Relaxed);
    }

    pub fn accepted(&self) -> u64 {
        self.accepted.load(Ordering::Relaxed)
    }

    pub fn rejected(&self, reason: Reject) -> u64 {
        self.rejected[usize::from(reason.code())].load(Ordering::Relaxed)
    }

    pub fn received(&self) -> u64 {
        self.accepted() + Reject::ALL.iter().map(|&r| self.rejected(r)).sum::<u64>()
    }
}

/// One collector: a region plus the counters describing what reached it.
#[derive(Debug)]
pub struct CollectorRuntime {
    id: CollectorId,
    store: Store,
    layout: RegionLayout,
    stats: IngestStats,
    snapshot_path: Option<PathBuf>,
}

impl CollectorRuntime {
    pub fn new(
        id: CollectorId,
        config: StoreConfig,
        base_address: u64,
    ) -> Result<Self, StoreError> {
        Ok(Self::from_store(
            id,
            Store::with_base_address(config, base_address)?,
        ))
    }

    pub fn from_store(id: CollectorId, store: Store) -> Self {
        let layout = store.region().layout();
        CollectorRuntime {
            id,
            store,
            layout,
            stats: IngestStats::default(),
            snapshot_path: None,
        }
    }

    /// Restores a region from a snapshot file. Snapshots do not record the
    /// resolution policy, so it is supplied here.
    pub fn restore(
        id: CollectorId,
        path: &Path,
        policy: ResolutionPolicy,
    ) -> Result<Self, SnapshotError> {
        let (mut config, region) = snapshot::load(path)?.into_parts();
        config.policy = policy;
        Ok(Self::from_store(id, Store::from_region(config, region)?))
    }

    pub fn with_snapshot_path(mut self, path: PathBuf) -> Self {
        self.snapshot_path = Some(path);
        self
    }

    pub fn id(&self) -> CollectorId {
        self.id
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn layout(&self) -> RegionLayout {
        self.layout
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    /// Validates one datagram and, if accepted, writes its slot. Returns the
    /// slot index written. Does not allocate.
    pub fn handle_datagram(&self, bytes: &[u8]) -> Result<usize, Reject> {
        match parse_report(bytes, &self.layout) {
            Ok(w) => {
                self.store
                    .apply_slot(w.slot_index, w.payload)
                    .expect("parse_report bounds and length checked");
                self.stats.accept();
                Ok(w.slot_index)
            }
            Err(reason) => {
                self.stats.reject(reason);
                Err(reason)
            }
        }
    }

    pub fn serve_query(
        &self,
        key: &TelemetryKey,
        policy: Option<ResolutionPolicy>,
    ) -> QueryResponse {
        self.stats.queries.fetch_add(1, Ordering::Relaxed);
        let r = match policy {
            Some(p) => self.store.query_with(key, p),
            None => self.store.query(key),
        };
        QueryResponse {
            collector: self.id,
            value: match r.answer {
                Answer::Value(v) => Some(v.into_bytes()),
                Answer::Empty => None,
            },
            matched_slots: r.matched_slots as u32,
            distinct_values: r.distinct_values as u32,
            addresses: r.addresses.iter().map(|&a| a as u64).collect(),
        }
    }

    pub fn stats_response(&self) -> StatsResponse {
        StatsResponse {
            collector: self.id,
            accepted: self.stats.accepted(),
            rejected: Reject::ALL.map(|r| self.stats.rejected(r)),
            queries: self.stats.queries.load(Ordering::Relaxed),
        }
    }

    /// Writes the region to `path`. Each slot is read atomically, but slots
    /// written during the snapshot may or may not be included.
    pub fn snapshot(&self, path: &Path) -> Result<u64, SnapshotError> {
        snapshot::save(&self.store, path)?;
        Ok(snapshot::HEADER_LEN as u64 + self.layout.len_bytes())
    }

    pub fn handle_request(&self, req: &Request) -> Response {
        match req {
            Request::Query { key, policy } => {
                let key = match TelemetryKey::new(key) {
                    Ok(k) => k,
                    Err(e) => return self.error(ErrorCode::InvalidKey, e.to_string()),
                };
                if let Some(Err(e)) = policy.map(|p| p.validate()) {
                    return self.error(ErrorCode::InvalidPolicy, e.to_string());
                }
                Response::Query(self.serve_query(&key, *policy))
            }
            Request::Stats => Response::Stats(self.stats_response()),
            Request::Snapshot { path } => {
                let target = if path.is_empty() {
                    match &self.snapshot_path {
                        Some(p) => p.clone(),
                        None => {
                            return self.error(
                                ErrorCode::SnapshotFailed,
                                "no path given and no snapshot path configured".into(),
                            )
                        }
                    }
                } else {
                    PathBuf::from(path)
                };
                match self.snapshot(&target) {
                    Ok(bytes) => Response::Snapshot {
                        collector: self.id,
                        bytes,
                    },
                    Err(e) => self.error(ErrorCode::SnapshotFailed, e.to_string()),
                }
            }
        }
    }

    pub fn error(&self, code: ErrorCode, message: String) -> Response {
        Response::Error {
            collector: self.id,
            code: code as u8,
            message,
        }
    }
}
