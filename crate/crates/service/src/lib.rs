//! HTTP front end for the channel store.
//!
//! ```text
//! GET  /update?api_key=KEY&field1=..[&created_at=..]   -> entry id, or 0 when rate limited
//! POST /update   (same parameters, form encoded)
//! GET  /channels/{id}/feeds.json?results=N[&start=..&end=..][&api_key=..]
//! GET  /channels/{id}/fields/{n}.json?results=N
//! ```

mod config;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use agrisense_core::channel::{parse_timestamp, ChannelStore, FeedQuery, Fields, StoreError, UpdateResult, FIELD_COUNT};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Form, Router};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

pub use config::{ensure_channels, ConfigError, ServiceConfig};

type Params = HashMap<String, String>;

pub fn router(store: Arc<ChannelStore>) -> Router {
    Router::new()
        .route("/update", get(update_query).post(update_form))
        .route("/update.json", get(update_query).post(update_form))
        .route("/channels/{id}/feeds.json", get(feeds))
        .route("/channels/{id}/fields/{file}", get(field_feed))
        .with_state(store)
}

fn text(status: StatusCode, body: impl Into<String>) -> Response {
    (status, [(header::CONTENT_TYPE, "text/plain; charset=utf-8")], body.into()).into_response()
}

fn store_error(e: StoreError) -> Response {
    match e {
        StoreError::Unauthorized => text(StatusCode::UNAUTHORIZED, "error: invalid api key"),
        StoreError::NotFound(id) => text(StatusCode::NOT_FOUND, format!("error: channel {id} not found")),
        StoreError::BadRequest(m) => text(StatusCode::BAD_REQUEST, format!("error: {m}")),
        other => text(StatusCode::INTERNAL_SERVER_ERROR, format!("error: {other}")),
    }
}

async fn update_query(State(store): State<Arc<ChannelStore>>, Query(params): Query<Params>) -> Response {
    update(store, params).await
}

async fn update_form(State(store): State<Arc<ChannelStore>>, Form(params): Form<Params>) -> Response {
    update(store, params).await
}

async fn update(store: Arc<ChannelStore>, params: Params) -> Response {
    let Some(key) = params.get("api_key").or_else(|| params.get("key")).cloned() else {
        return text(StatusCode::UNAUTHORIZED, "error: missing api key");
    };
    let mut fields: Fields = Default::default();
    for (n, slot) in fields.iter_mut().enumerate() {
        *slot = params.get(&format!("field{}", n + 1)).cloned();
    }
    let created_at = match params.get("created_at") {
        None => None,
        Some(raw) => match parse_timestamp(raw) {
            Some(t) => Some(t),
            None => return text(StatusCode::BAD_REQUEST, format!("error: bad created_at {raw:?}")),
        },
    };
    // the append fsyncs; keep it off the async workers
    let result = tokio::task::spawn_blocking(move || store.update(&key, &fields, created_at)).await;
    match result {
        Ok(Ok(UpdateResult::Accepted(id))) => text(StatusCode::OK, id.to_string()),
        Ok(Ok(UpdateResult::RateLimited)) => text(StatusCode::OK, "0"),
        Ok(Err(e)) => store_error(e),
        Err(join) => text(StatusCode::INTERNAL_SERVER_ERROR, format!("error: {join}")),
    }
}

fn feed_query(params: &Params, field: Option<u8>) -> Result<FeedQuery, String> {
    let results = match params.get("results") {
        None => None,
        Some(r) => Some(r.parse::<usize>().map_err(|_| format!("bad results {r:?}"))?),
    };
    let time = |name: &str| -> Result<_, String> {
        match params.get(name) {
            None => Ok(None),
            Some(raw) => parse_timestamp(raw).map(Some).ok_or_else(|| format!("bad {name} {raw:?}")),
        }
    };
    Ok(FeedQuery {
        results,
        start: time("start")?,
        end: time("end")?,
        read_key: params.get("api_key").cloned(),
        field,
    })
}

fn json_page(store: &ChannelStore, id: u64, query: &FeedQuery) -> Response {
    match store.read_feeds(id, query) {
        Ok(page) => (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], page.to_json()).into_response(),
        Err(e) => store_error(e),
    }
}

async fn feeds(State(store): State<Arc<ChannelStore>>, Path(id): Path<u64>, Query(params): Query<Params>) -> Response {
    match feed_query(&params, None) {
        Ok(q) => json_page(&store, id, &q),
        Err(m) => text(StatusCode::BAD_REQUEST, format!("error: {m}")),
    }
}

async fn field_feed(
    State(store): State<Arc<ChannelStore>>,
    Path((id, file)): Path<(u64, String)>,
    Query(params): Query<Params>,
) -> Response {
    let field = file
        .strip_suffix(".json")
        .and_then(|n| n.parse::<u8>().ok())
        .filter(|n| (1..=FIELD_COUNT as u8).contains(n));
    let Some(field) = field else {
        return text(StatusCode::NOT_FOUND, format!("error: no field {file:?}"));
    };
    match feed_query(&params, Some(field)) {
        Ok(q) => json_page(&store, id, &q),
        Err(m) => text(StatusCode::BAD_REQUEST, format!("error: {m}")),
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    store: Arc<ChannelStore>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(store)).with_graceful_shutdown(shutdown).await
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves on a background thread.
pub fn spawn(addr: SocketAddr, store: Arc<ChannelStore>) -> std::io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (stop, stopped) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("agrisense-http".into())
        .spawn(move || {
            runtime.block_on(serve(listener, store, async {
                let _ = stopped.await;
            }))
        })?;
    Ok(ServerHandle { addr, stop: Some(stop), thread: Some(thread) })
}
