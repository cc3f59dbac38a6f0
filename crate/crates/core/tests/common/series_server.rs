//! In-process HTTP series endpoint for source tests.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;

#[derive(Default)]
struct Inner {
    series: Mutex<HashMap<String, Vec<(i64, f64)>>>,
    fail_next: AtomicUsize,
    requests: AtomicUsize,
    froms: Mutex<Vec<i64>>,
}

#[derive(Deserialize)]
struct SeriesQuery {
    kpi: String,
    from: i64,
}

async fn series(
    State(inner): State<Arc<Inner>>,
    Query(q): Query<SeriesQuery>,
) -> Result<Json<Vec<(i64, f64)>>, StatusCode> {
    inner.requests.fetch_add(1, Ordering::SeqCst);
    inner.froms.lock().unwrap().push(q.from);
    let failing = inner
        .fail_next
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    if failing {
        return Err(StatusCode::SERVICE_UNAVAILABLE);
    }
    let map = inner.series.lock().unwrap();
    let points = map
        .get(&q.kpi)
        .map(|v| v.iter().copied().filter(|(t, _)| *t > q.from).collect())
        .unwrap_or_default();
    Ok(Json(points))
}

/// A running server; shut down when dropped.
pub struct SeriesServer {
    inner: Arc<Inner>,
    addr: SocketAddr,
    _shutdown: tokio::sync::oneshot::Sender<()>,
}

impl SeriesServer {
    pub fn start() -> Self {
        let inner = Arc::new(Inner::default());
        let app = Router::new()
            .route("/series", get(series))
            .with_state(inner.clone());
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(1)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            inner,
            addr,
            _shutdown: stop_tx,
        }
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn push(&self, kpi: &str, points: &[(i64, f64)]) {
        self.inner
            .series
            .lock()
            .unwrap()
            .entry(kpi.to_owned())
            .or_default()
            .extend_from_slice(points);
    }

    /// Answer the next `n` requests with HTTP 503.
    pub fn fail_next(&self, n: usize) {
        self.inner.fail_next.store(n, Ordering::SeqCst);
    }

    pub fn requests(&self) -> usize {
        self.inner.requests.load(Ordering::SeqCst)
    }

    /// `from` cursor of every request received so far.
    pub fn cursors(&self) -> Vec<i64> {
        self.inner.froms.lock().unwrap().clone()
    }
}
