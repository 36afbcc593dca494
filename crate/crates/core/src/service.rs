//! HTTP access to loaded anatomical models.
//!
//! `GET /models`, `POST /models/{id}/generate` and
//! `GET /models/{id}/sweep?param=..&steps=..`. Models are loaded once and
//! shared read-only between requests.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{sweep, AnatModel, LabelStats, ModelKind, SweepResult, VariabilityReport};
use crate::morphometry::{measure, MeasurementVector};
use crate::shape::devectorize;

/// Default bound on `|beta_std|` accepted by `/generate`.
pub const DEFAULT_MAX_BETA_STD: f64 = 4.0;
/// Upper bound on sweep steps per request.
pub const MAX_SWEEP_STEPS: usize = 1001;

/// Models keyed by id, plus the generation bound.
#[derive(Debug)]
pub struct Registry {
    models: BTreeMap<String, AnatModel>,
    max_beta_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub kind: ModelKind,
    pub labels: Vec<String>,
    pub stats: BTreeMap<String, LabelStats>,
    pub variability: VariabilityReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    /// Physical values; missing labels stay at the population mean.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// Flat arrays: `x0,y0,z0,x1,..` and `a0,b0,c0,a1,..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshPayload {
    pub vertices: Vec<f64>,
    pub faces: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub mesh: MeshPayload,
    /// Re-measured parameters; `None` when the model has no recipe or the
    /// generated shape cannot be measured.
    pub measurements: Option<MeasurementVector>,
    pub labels: Vec<String>,
    pub beta_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn not_found(id: &str) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            message: format!("unknown model `{id}`"),
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::UnknownLabel(_) | Error::OutOfRange(_) | Error::Invalid { .. } => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError {
            status,
            message: e.to_string(),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.message })).into_response()
    }
}

impl Registry {
    pub fn new(models: Vec<(String, AnatModel)>, max_beta_std: f64) -> Result<Self> {
        if !(max_beta_std > 0.0) {
            return Err(Error::invalid("max_beta_std", "must be positive"));
        }
        let mut map = BTreeMap::new();
        for (id, model) in models {
            if map.contains_key(&id) {
                return Err(Error::invalid("model registry", format!("duplicate model id `{id}`")));
            }
            map.insert(id, model);
        }
        Ok(Registry {
            models: map,
            max_beta_std,
        })
    }

    /// Loads model files; each id is the file stem.
    pub fn load(paths: &[impl AsRef<Path>], max_beta_std: f64) -> Result<Self> {
        let models = paths
            .iter()
            .map(|p| {
                let p = p.as_ref();
                let id = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .ok_or_else(|| Error::invalid("model path", p.display().to_string()))?;
                Ok((id, AnatModel::load(p)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(models, max_beta_std)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.models.keys().map(String::as_str).collect()
    }

    pub fn max_beta_std(&self) -> f64 {
        self.max_beta_std
    }

    fn model(&self, id: &str) -> std::result::Result<&AnatModel, ApiError> {
        self.models.get(id).ok_or_else(|| ApiError::not_found(id))
    }

    pub fn list(&self) -> Vec<ModelInfo> {
        self.models
            .iter()
            .map(|(id, m)| ModelInfo {
                id: id.clone(),
                kind: m.kind(),
                labels: m.labels().to_vec(),
                stats: m.stats_map(),
                variability: m.variability(),
            })
            .collect()
    }

    pub fn generate(&self, id: &str, req: &GenerateRequest) -> std::result::Result<GenerateResponse, ApiError> {
        let model = self.model(id)?;
        for (label, v) in &req.params {
            if !v.is_finite() {
                return Err(ApiError::unprocessable(format!("parameter `{label}` is not finite")));
            }
        }
        let beta: DVector<f64> = model.standardize(&req.params)?;
        for (label, z) in model.labels().iter().zip(beta.iter()) {
            if z.abs() > self.max_beta_std {
                return Err(ApiError::unprocessable(format!(
                    "parameter `{label}` is {z:.3} standard deviations from the mean; limit is {}",
                    self.max_beta_std
                )));
            }
        }
        let shape = model.generate_std(&beta)?;
        let measurements = match (model.recipe(), model.landmarks()) {
            (Some(recipe), Some(lm)) => match lm.locate_in(&shape).and_then(|pts| measure(recipe, &pts)) {
                Ok(mv) => Some(mv),
                Err(e) => {
                    log::warn!("model {id}: generated shape not measurable: {e}");
                    None
                }
            },
            _ => None,
        };
        let mesh = devectorize(&shape, model.base().topology())?;
        Ok(GenerateResponse {
            mesh: MeshPayload {
                vertices: shape.coords().as_slice().to_vec(),
                faces: mesh.faces().iter().flatten().copied().collect(),
            },
            measurements,
            labels: model.labels().to_vec(),
            beta_std: beta.as_slice().to_vec(),
        })
    }

    pub fn sweep(&self, id: &str, param: &str, steps: usize) -> std::result::Result<SweepResult, ApiError> {
        let model = self.model(id)?;
        if !(2..=MAX_SWEEP_STEPS).contains(&steps) {
            return Err(ApiError::unprocessable(format!(
                "steps must lie in 2..={MAX_SWEEP_STEPS}, got {steps}"
            )));
        }
        Ok(sweep(model, param, steps)?)
    }
}

#[derive(Debug, Deserialize)]
struct SweepQuery {
    param: Option<String>,
    steps: Option<usize>,
}

type Shared = Arc<Registry>;

async fn list_models(State(reg): State<Shared>) -> Json<Vec<ModelInfo>> {
    Json(reg.list())
}

async fn generate(
    State(reg): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<GenerateRequest>,
) -> std::result::Result<Json<GenerateResponse>, ApiError> {
    tokio::task::spawn_blocking(move || reg.generate(&id, &req))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        })?
        .map(Json)
}

async fn sweep_model(
    State(reg): State<Shared>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SweepQuery>,
) -> std::result::Result<Json<SweepResult>, ApiError> {
    let param = q.param.ok_or_else(|| ApiError::unprocessable("missing query parameter `param`"))?;
    let steps = q.steps.unwrap_or(13);
    tokio::task::spawn_blocking(move || reg.sweep(&id, &param, steps))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        })?
        .map(Json)
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/models", get(list_models))
        .route("/models/{id}/generate", post(generate))
        .route("/models/{id}/sweep", get(sweep_model))
        .with_state(registry)
}

/// Serves until the process is stopped.
pub async fn serve(registry: Arc<Registry>, addr: SocketAddr) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::io(addr.to_string(), e))?;
    let local = listener.local_addr().map_err(|e| Error::io(addr.to_string(), e))?;
    log::info!("serving {} model(s) on http://{local}", registry.models.len());
    axum::serve(listener, router(registry))
        .await
        .map_err(|e| Error::io(local.to_string(), e))
}

/// [`serve`] on a fresh multi-threaded runtime.
pub fn serve_blocking(registry: Arc<Registry>, addr: SocketAddr) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(serve(registry, addr))
}
