//! In-process Bugzilla stand-in serving a fixed record list at
//! `/rest/bug`. It understands the creation-time bounds, newest-first
//! ordering, `limit`/`offset` paging and `include_fields` used by the client,
//! and can fail the first few requests to exercise retries.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Json, Response};
use axum::routing::get;
use axum::Router;
use chrono::{DateTime, NaiveDateTime, Utc};
use serde_json::{json, Value};
use tokio::sync::oneshot;

pub type Params = Vec<(String, String)>;

#[derive(Debug, Clone, Default)]
pub struct MockOptions {
    /// Number of initial requests answered with HTTP 503.
    pub fail_first: usize,
}

struct Shared {
    records: Vec<Value>,
    options: MockOptions,
    seen: AtomicUsize,
    log: Mutex<Vec<Params>>,
}

pub struct MockBugzilla {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

fn param<'a>(p: &'a Params, k: &str) -> Option<&'a str> {
    p.iter().find(|(n, _)| n == k).map(|(_, v)| v.as_str())
}

fn created(r: &Value) -> Option<DateTime<Utc>> {
    r.get("creation_time")?.as_str()?.parse().ok()
}

fn bound(p: &Params, op: &str) -> Option<DateTime<Utc>> {
    (1..=9).find_map(|i| {
        let f = param(p, &format!("f{i}"))?;
        let o = param(p, &format!("o{i}"))?;
        if f != "creation_ts" || o != op {
            return None;
        }
        let v = param(p, &format!("v{i}"))?;
        NaiveDateTime::parse_from_str(v, "%Y-%m-%d %H:%M:%S")
            .ok()
            .map(|t| t.and_utc())
    })
}

async fn bugs(State(s): State<Arc<Shared>>, Query(p): Query<Params>) -> Response {
    s.log.lock().expect("log lock").push(p.clone());
    if s.seen.fetch_add(1, Ordering::SeqCst) < s.options.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, "try again").into_response();
    }
    let lo = bound(&p, "greaterthaneq");
    let hi = bound(&p, "lessthaneq");
    let mut rows: Vec<&Value> = s
        .records
        .iter()
        .filter(|r| match created(r) {
            Some(t) => lo.is_none_or(|lo| t >= lo) && hi.is_none_or(|hi| t <= hi),
            None => true,
        })
        .collect();
    if param(&p, "order").is_some_and(|o| o.ends_with("DESC")) {
        rows.sort_by_key(|r| std::cmp::Reverse(created(r)));
    }
    let offset: usize = param(&p, "offset").and_then(|v| v.parse().ok()).unwrap_or(0);
    let limit: usize = param(&p, "limit").and_then(|v| v.parse().ok()).unwrap_or(usize::MAX);
    let fields: Option<Vec<&str>> = param(&p, "include_fields").map(|f| f.split(',').collect());
    let page: Vec<Value> = rows
        .into_iter()
        .skip(offset)
        .take(limit)
        .map(|r| match (&fields, r.as_object()) {
            (Some(fields), Some(obj)) => Value::Object(
                obj.iter()
                    .filter(|(k, _)| fields.contains(&k.as_str()))
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
            ),
            _ => r.clone(),
        })
        .collect();
    Json(json!({ "bugs": page })).into_response()
}

impl MockBugzilla {
    /// Serve on an ephemeral localhost port from a background thread.
    pub fn start(records: Vec<Value>, options: MockOptions) -> std::io::Result<Self> {
        Self::start_on(std::net::TcpListener::bind("127.0.0.1:0")?, records, options)
    }

    pub fn start_on(
        listener: std::net::TcpListener,
        records: Vec<Value>,
        options: MockOptions,
    ) -> std::io::Result<Self> {
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            records,
            options,
            seen: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        });
        let (tx, rx) = oneshot::channel::<()>();
        let app = Router::new().route("/rest/bug", get(bugs)).with_state(shared.clone());
        let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        log::error!("mock bugzilla: {e}");
                        return;
                    }
                };
                let shutdown = async {
                    let _ = rx.await;
                };
                if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                    log::error!("mock bugzilla: {e}");
                }
            });
        });
        Ok(Self {
            addr,
            shared,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/rest/bug", self.addr)
    }

    /// Query parameters of every request received so far.
    pub fn requests(&self) -> Vec<Params> {
        self.shared.log.lock().expect("log lock").clone()
    }

    /// Block until the server thread exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockBugzilla {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
