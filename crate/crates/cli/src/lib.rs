//! HTTP service over analysis sessions, and image loading shared with the
//! command line.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use mathrev::isa::{assemble, decode, BinaryImage};
use mathrev::svc::{AnalyzeOptions, CallGraph, EquationView, Session, SvcError};
use serde::{Deserialize, Serialize};

/// Reads an image file, assembling it first when it is assembly text.
pub fn load_image(path: &Path) -> anyhow::Result<BinaryImage> {
    let bytes = std::fs::read(path)?;
    let is_source = matches!(path.extension().and_then(|e| e.to_str()), Some("s" | "asm"));
    if is_source {
        Ok(assemble(std::str::from_utf8(&bytes)?)?)
    } else {
        Ok(decode(&bytes)?)
    }
}

#[derive(Default)]
pub struct AppState {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next: AtomicU64,
}

pub fn router() -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/callgraph", get(callgraph))
        .route("/sessions/{id}/functions/{func}/analyze", post(analyze))
        .route("/sessions/{id}/functions/{func}/result", get(result))
        .route("/sessions/{id}/rename", post(rename))
        .with_state(Arc::new(AppState::default()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into() } }
    }
}

impl From<SvcError> for ApiError {
    fn from(e: SvcError) -> Self {
        let status = match e {
            SvcError::UnknownFunction(_) | SvcError::NotAnalyzed(_) | SvcError::UnknownSymbol(_) => {
                StatusCode::NOT_FOUND
            }
            SvcError::UnanalyzedCallee { .. } | SvcError::NameCollision(_) => StatusCode::CONFLICT,
            SvcError::InvalidName(_) | SvcError::Image(_) => StatusCode::BAD_REQUEST,
            SvcError::RecursiveCall(_) | SvcError::Symx(_) => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Either a base64 encoded image file or assembly source.
#[derive(Debug, Serialize, Deserialize)]
pub struct NewSession {
    #[serde(default)]
    pub image: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
}

fn bad_image(msg: impl ToString) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "bad_image", msg.to_string())
}

async fn create_session(State(st): State<Arc<AppState>>, Json(req): Json<NewSession>) -> ApiResult<SessionCreated> {
    let image = match (req.image, req.source) {
        (Some(b64), None) => {
            let bytes = base64::engine::general_purpose::STANDARD.decode(b64).map_err(bad_image)?;
            decode(&bytes).map_err(bad_image)?
        }
        (None, Some(src)) => assemble(&src).map_err(bad_image)?,
        _ => return Err(bad_image("give exactly one of `image` and `source`")),
    };
    let id = format!("s{}", st.next.fetch_add(1, Ordering::Relaxed) + 1);
    let session = Session::new(id.clone(), image)?;
    st.sessions.lock().unwrap_or_else(|p| p.into_inner()).insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok(Json(SessionCreated { id }))
}

fn session(st: &AppState, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
    let map = st.sessions.lock().unwrap_or_else(|p| p.into_inner());
    map.get(id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session `{id}`")))
}

async fn with_session<T: Send + 'static>(
    st: Arc<AppState>,
    id: String,
    f: impl FnOnce(&mut Session) -> Result<T, SvcError> + Send + 'static,
) -> Result<T, ApiError> {
    let s = session(&st, &id)?;
    let joined = tokio::task::spawn_blocking(move || {
        let mut guard = s.lock().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await;
    match joined {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CallGraphBody {
    #[serde(flatten)]
    pub graph: CallGraph,
    /// Suggested analysis order, callees first.
    pub order: Vec<String>,
}

async fn callgraph(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<CallGraphBody> {
    let body = with_session(st, id, |s| {
        let graph = s.callgraph().clone();
        let order = graph.leaf_first();
        Ok(CallGraphBody { graph, order })
    })
    .await?;
    Ok(Json(body))
}

async fn analyze(
    State(st): State<Arc<AppState>>,
    UrlPath((id, func)): UrlPath<(String, String)>,
    body: axum::body::Bytes,
) -> ApiResult<EquationView> {
    let opts: AnalyzeOptions = if body.iter().all(u8::is_ascii_whitespace) {
        AnalyzeOptions::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?
    };
    Ok(Json(with_session(st, id, move |s| s.analyze(&func, opts)).await?))
}

async fn result(
    State(st): State<Arc<AppState>>,
    UrlPath((id, func)): UrlPath<(String, String)>,
) -> ApiResult<EquationView> {
    Ok(Json(with_session(st, id, move |s| s.result(&func)).await?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RenameRequest {
    pub symbol: String,
    pub name: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Renames {
    pub renames: std::collections::BTreeMap<String, String>,
}

async fn rename(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<RenameRequest>,
) -> ApiResult<Renames> {
    let body = with_session(st, id, move |s| {
        s.rename(&req.symbol, &req.name)?;
        Ok(Renames { renames: s.renames().clone() })
    })
    .await?;
    Ok(Json(body))
}

pub async fn serve(port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router()).await?;
    Ok(())
}
