//! HTTP JSON API over one active session.
//!
//! Label submissions are serialized through the session lock. Completing
//! the pending batch starts fine-tuning in the background; while it runs the
//! status reads `training` and batch requests are refused.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kgalign::harness::MetricsReport;
use kgalign::kg::Label;
use kgalign::session::{ActiveSession, BatchItem, RecordOutcome, RoundRecord, SessionError};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// No batch pending; the next `GET /batch` selects one.
    Ready,
    /// A batch awaits labels.
    Pending,
    Training,
    /// The label budget is used up.
    Done,
    /// The last training round failed; see `error`.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusBody {
    pub status: Phase,
    pub round: usize,
    pub budget_left: usize,
    pub labels_used: usize,
    /// Members of the pending batch still without a label.
    pub missing: usize,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchBody {
    pub round: usize,
    pub items: Vec<BatchItem>,
    pub received: BTreeMap<String, Label>,
    /// True once the budget is spent; `items` is then empty.
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelIn {
    pub pair_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsBody {
    #[serde(flatten)]
    pub outcome: RecordOutcome,
    pub status: Phase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

struct View {
    phase: Phase,
    status: StatusBody,
    records: Vec<RoundRecord>,
}

pub struct AppState {
    session: Mutex<ActiveSession>,
    view: Mutex<View>,
    /// Snapshot written after every change, for restarts.
    state_path: Option<PathBuf>,
}

pub type Shared = Arc<AppState>;

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl AppState {
    pub fn new(session: ActiveSession, state_path: Option<PathBuf>) -> Shared {
        let view = View {
            phase: Phase::Ready,
            status: status_of(&session, Phase::Ready, None),
            records: session.records().to_vec(),
        };
        let s = Arc::new(AppState {
            session: Mutex::new(session),
            view: Mutex::new(view),
            state_path,
        });
        let sess = lock(&s.session);
        let phase = if sess.pending().is_some() { Phase::Pending } else { Phase::Ready };
        s.refresh(&sess, phase, None);
        drop(sess);
        s
    }

    fn refresh(&self, sess: &ActiveSession, phase: Phase, error: Option<String>) {
        let mut v = lock(&self.view);
        v.phase = phase;
        v.status = status_of(sess, phase, error);
        v.records = sess.records().to_vec();
    }

    fn phase(&self) -> Phase {
        lock(&self.view).phase
    }

    fn persist(&self, sess: &ActiveSession) -> Result<(), SessionError> {
        let Some(path) = &self.state_path else {
            return Ok(());
        };
        let tmp = path.with_extension("tmp");
        sess.save(std::io::BufWriter::new(fs::File::create(&tmp)?))?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

fn status_of(sess: &ActiveSession, phase: Phase, error: Option<String>) -> StatusBody {
    StatusBody {
        status: phase,
        round: sess.round(),
        budget_left: sess.budget_left(),
        labels_used: sess.labels_used(),
        missing: sess.pending().map_or(0, |b| b.missing()),
        metrics: sess.records().last().map(|r| r.metrics),
        error,
    }
}

fn error(code: StatusCode, msg: impl ToString) -> Response {
    (code, Json(ErrorBody { error: msg.to_string() })).into_response()
}

fn session_error(e: SessionError) -> Response {
    let code = match e {
        SessionError::NotPending(_) | SessionError::Conflict(..) | SessionError::NoBatch | SessionError::Incomplete(_) => {
            StatusCode::CONFLICT
        }
        SessionError::BadPairId(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    error(code, e)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, Response> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e))
}

async fn get_status(State(s): State<Shared>) -> Json<StatusBody> {
    Json(lock(&s.view).status.clone())
}

async fn get_metrics(State(s): State<Shared>) -> Json<Vec<RoundRecord>> {
    Json(lock(&s.view).records.clone())
}

async fn get_batch(State(s): State<Shared>) -> Response {
    if s.phase() == Phase::Training {
        return error(StatusCode::CONFLICT, "training in progress");
    }
    let st = s.clone();
    let out = blocking(move || {
        let mut sess = lock(&st.session);
        let round = sess.round();
        let body = match sess.select_batch() {
            Ok(b) => BatchBody {
                round: b.round,
                items: b.items.clone(),
                received: b.received.clone(),
                done: false,
            },
            Err(SessionError::BudgetExhausted) => {
                st.refresh(&sess, Phase::Done, None);
                return Ok(BatchBody {
                    round,
                    items: Vec::new(),
                    received: BTreeMap::new(),
                    done: true,
                });
            }
            Err(e) => return Err(e),
        };
        st.persist(&sess)?;
        st.refresh(&sess, Phase::Pending, None);
        Ok(body)
    })
    .await;
    match out {
        Ok(Ok(b)) => Json(b).into_response(),
        Ok(Err(e)) => session_error(e),
        Err(r) => r,
    }
}

fn train(st: Shared) {
    let mut sess = lock(&st.session);
    let res = sess.train_round().map(|_| ()).and_then(|_| st.persist(&sess));
    match res {
        Ok(()) => st.refresh(&sess, Phase::Ready, None),
        Err(e) => st.refresh(&sess, Phase::Failed, Some(e.to_string())),
    }
}

async fn post_labels(State(s): State<Shared>, Json(labels): Json<Vec<LabelIn>>) -> Response {
    let st = s.clone();
    let out = blocking(move || {
        let mut sess = lock(&st.session);
        let pairs: Vec<(String, Label)> = labels.into_iter().map(|l| (l.pair_id, l.label)).collect();
        let outcome = sess.record_labels(&pairs)?;
        st.persist(&sess)?;
        if sess.batch_complete() {
            st.refresh(&sess, Phase::Training, None);
            drop(sess);
            let bg = st.clone();
            tokio::task::spawn_blocking(move || train(bg));
            return Ok(LabelsBody {
                outcome,
                status: Phase::Training,
            });
        }
        let phase = if sess.pending().is_some() { Phase::Pending } else { st.phase() };
        st.refresh(&sess, phase, None);
        Ok(LabelsBody { outcome, status: phase })
    })
    .await;
    match out {
        Ok(Ok(b)) => {
            let code = if b.status == Phase::Training { StatusCode::ACCEPTED } else { StatusCode::OK };
            (code, Json(b)).into_response()
        }
        Ok(Err(e)) => session_error(e),
        Err(r) => r,
    }
}

async fn get_context(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    let st = s.clone();
    let out = blocking(move || lock(&st.session).pair_context(&id)).await;
    match out {
        Ok(Ok(c)) => Json(c).into_response(),
        Ok(Err(SessionError::NotPending(id))) => error(StatusCode::NOT_FOUND, format!("unknown pair `{id}`")),
        Ok(Err(e)) => session_error(e),
        Err(r) => r,
    }
}

/// The API routes; with `assets`, other paths serve files from that
/// directory.
pub fn router(state: Shared, assets: Option<PathBuf>) -> Router {
    let r = Router::new()
        .route("/status", get(get_status))
        .route("/batch", get(get_batch))
        .route("/labels", post(post_labels))
        .route("/metrics", get(get_metrics))
        .route("/pair/{id}/context", get(get_context))
        .with_state(state);
    match assets {
        Some(dir) => r.fallback_service(ServeDir::new(dir)),
        None => r,
    }
}

pub async fn serve(state: Shared, addr: &str, assets: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, assets))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
