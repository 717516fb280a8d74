use std::net::SocketAddr;
use std::sync::Arc;

use alphawealth_core::TestRequest;
use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::config::ServiceConfig;
use crate::error::{Result, ServiceError};
use crate::manager::{CreateInstance, ExecuteRequest, Manager};

/// JSON body extractor whose rejections use the service error format.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self> {
        match axum::Json::<T>::from_request(req, state).await {
            Ok(axum::Json(v)) => Ok(Body(v)),
            Err(e) => Err(ServiceError::BadRequest(e.body_text())),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerQuery {
    pub from: Option<u64>,
    pub to: Option<u64>,
}

/// Runs blocking manager work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(format!("worker panicked: {e}"))))?
}

async fn create(State(m): State<Arc<Manager>>, Body(req): Body<CreateInstance>) -> Result<Response> {
    let snap = blocking(move || m.create(&req)).await?;
    Ok((StatusCode::CREATED, Json(snap)).into_response())
}

async fn list(State(m): State<Arc<Manager>>) -> Result<Response> {
    Ok(Json(blocking(move || Ok(m.list())).await?).into_response())
}

async fn state(State(m): State<Arc<Manager>>, Path(id): Path<String>) -> Result<Response> {
    Ok(Json(blocking(move || m.snapshot(&id)).await?).into_response())
}

async fn quote(
    State(m): State<Arc<Manager>>,
    Path(id): Path<String>,
    Body(req): Body<TestRequest>,
) -> Result<Response> {
    Ok(Json(blocking(move || m.quote(&id, &req)).await?).into_response())
}

async fn execute(
    State(m): State<Arc<Manager>>,
    Path(id): Path<String>,
    Body(req): Body<ExecuteRequest>,
) -> Result<Response> {
    Ok(Json(blocking(move || m.execute(&id, &req)).await?).into_response())
}

async fn ledger(
    State(m): State<Arc<Manager>>,
    Path(id): Path<String>,
    query: std::result::Result<Query<LedgerQuery>, QueryRejection>,
) -> Result<Response> {
    let Query(q) = query.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    Ok(Json(blocking(move || m.ledger(&id, q.from, q.to)).await?).into_response())
}

async fn not_found(uri: axum::http::Uri) -> ServiceError {
    ServiceError::UnknownRoute(uri.path().to_string())
}

pub fn router(manager: Arc<Manager>) -> Router {
    Router::new()
        .route("/instances", post(create).get(list))
        .route("/instances/{id}/state", get(state))
        .route("/instances/{id}/quote", post(quote))
        .route("/instances/{id}/execute", post(execute))
        .route("/instances/{id}/ledger", get(ledger))
        .fallback(not_found)
        .with_state(manager)
}

/// Serves until ctrl-c, then drains in-flight requests.
pub async fn serve(config: ServiceConfig) -> Result<()> {
    let manager = Arc::new(Manager::open(&config.data_dir, config.max_cost)?);
    let addr: SocketAddr = config
        .listen
        .parse()
        .map_err(|e| ServiceError::Config(format!("listen address {:?}: {e}", config.listen)))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %config.data_dir.display(), "listening");
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    Ok(())
}
