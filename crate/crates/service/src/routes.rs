use std::io::{Cursor, Write};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use craqreg_core::pipeline::overlay_blend;
use craqreg_core::ImageBuffer;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::config_store::{parse_config, PersistedConfig};
use crate::error::ApiError;
use crate::jobs::{Job, JobOutput, JobRecord, ASSETS};
use crate::AppState;

type ApiResult<T> = Result<T, ApiError>;

pub(crate) fn router(state: AppState) -> Router {
    let limit = state.inner.body_limit;
    Router::new()
        .route("/api/images", post(upload_image))
        .route("/api/images/{id}", get(get_image))
        .route("/api/config", get(get_config).put(put_config))
        .route("/api/config/reset", post(reset_config))
        .route("/api/registrations", post(create_registration))
        .route("/api/registrations/{id}", get(get_registration))
        .route("/api/registrations/{id}/assets/{name}", get(get_asset))
        .route("/api/registrations/{id}/blend", get(get_blend))
        .route("/api/registrations/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn upload_image(State(state): State<AppState>, mut multipart: Multipart) -> ApiResult<Json<Value>> {
    let multipart_err = |e: axum::extract::multipart::MultipartError| {
        if e.status() == axum::http::StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::TooLarge(e.body_text())
        } else {
            ApiError::BadRequest(e.body_text())
        }
    };
    while let Some(field) = multipart.next_field().await.map_err(multipart_err)? {
        if field.name() != Some("file") && field.file_name().is_none() {
            continue;
        }
        let bytes = field.bytes().await.map_err(multipart_err)?;
        let (w, h) = ImageBuffer::probe_dimensions(&bytes)?;
        let pixels = w as u64 * h as u64;
        let limit = state.inner.max_pixels;
        if pixels > limit {
            return Err(ApiError::TooLarge(format!(
                "image has {pixels} pixels ({w}x{h}), the limit is {limit}"
            )));
        }
        let img = blocking(move || ImageBuffer::decode(&bytes)).await??;
        let id = state.insert_image(img);
        return Ok(Json(json!({ "image_id": id, "width": w, "height": h })));
    }
    Err(ApiError::BadRequest("multipart body has no `file` field".into()))
}

async fn get_image(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let img = state.image(&id)?;
    Ok(png(blocking(move || img.encode_png()).await?))
}

async fn get_config(State(state): State<AppState>) -> Json<PersistedConfig> {
    Json(state.config().get())
}

async fn put_config(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<PersistedConfig>> {
    let cfg = parse_config(&body)?;
    Ok(Json(state.config().set(cfg)?))
}

async fn reset_config(State(state): State<AppState>) -> ApiResult<Json<PersistedConfig>> {
    Ok(Json(state.config().reset()?))
}

#[derive(Deserialize)]
struct NewRegistration {
    reference_id: String,
    moving_id: String,
    #[serde(default)]
    config: Option<Value>,
}

async fn create_registration(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: NewRegistration =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("malformed request: {e}")))?;
    let cfg = match req.config {
        Some(v) => parse_config(v.to_string().as_bytes())?,
        None => state.config().get().config,
    };
    let reference = state.image(&req.reference_id)?;
    let moving = state.image(&req.moving_id)?;

    let job_id = uuid::Uuid::new_v4().to_string();
    let job = Arc::new(Job::new(job_id.clone(), req.reference_id, req.moving_id, cfg));
    state.insert_job(job_id.clone(), job.clone());

    let queue = state.inner.queue.clone();
    tokio::spawn(async move {
        let Ok(_permit) = queue.acquire_owned().await else {
            job.fail(None, "job queue closed".into());
            return;
        };
        job.mark_running();
        let worker = job.clone();
        if let Err(e) = tokio::task::spawn_blocking(move || worker.execute(reference, moving)).await {
            job.fail(None, format!("registration worker failed: {e}"));
        }
    });
    Ok(Json(json!({ "job_id": job_id })))
}

async fn get_registration(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    Ok(Json(state.job(&id)?.snapshot()))
}

/// The finished job's output, or 409 while it is pending, running or failed.
fn finished(state: &AppState, id: &str) -> ApiResult<Arc<Job>> {
    let job = state.job(id)?;
    if job.output().is_none() {
        return Err(ApiError::Conflict(format!("registration `{id}` is not done")));
    }
    Ok(job)
}

fn output(job: &Job) -> &JobOutput {
    job.output().expect("checked by finished()")
}

async fn get_asset(State(state): State<AppState>, Path((id, name)): Path<(String, String)>) -> ApiResult<Response> {
    let Some(&(_, file)) = ASSETS.iter().find(|(n, _)| *n == name) else {
        return Err(ApiError::NotFound { kind: "asset", id: name });
    };
    let job = finished(&state, &id)?;
    match file {
        None => {
            let moving = output(&job).moving.clone();
            Ok(png(blocking(move || moving.encode_png()).await?))
        }
        Some(file) => output(&job)
            .file(file)
            .map(|b| png(b.to_vec()))
            .ok_or(ApiError::NotFound {
                kind: "asset (enable visualize_matches to render it)",
                id: name,
            }),
    }
}

#[derive(Deserialize)]
struct BlendQuery {
    alpha: Option<String>,
}

async fn get_blend(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<BlendQuery>,
) -> ApiResult<Response> {
    let alpha = match q.alpha {
        None => 0.5,
        Some(s) => s
            .parse::<f64>()
            .ok()
            .filter(|a| a.is_finite())
            .ok_or_else(|| ApiError::BadRequest(format!("alpha `{s}` is not a number")))?,
    };
    let job = finished(&state, &id)?;
    let bytes = blocking(move || {
        let out = output(&job);
        overlay_blend(&out.reference, &out.warped, alpha).map(|b| b.encode_png())
    })
    .await??;
    Ok(png(bytes))
}

async fn export(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let job = finished(&state, &id)?;
    let bytes = blocking(move || -> ApiResult<Vec<u8>> {
        let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
        let opts = zip::write::SimpleFileOptions::default().compression_method(zip::CompressionMethod::Deflated);
        let zip_err = |e: zip::result::ZipError| ApiError::Internal(format!("zip: {e}"));
        for (name, data) in &output(&job).files {
            zip.start_file(name.as_str(), opts).map_err(zip_err)?;
            zip.write_all(data).map_err(|e| ApiError::Internal(format!("zip: {e}")))?;
        }
        Ok(zip.finish().map_err(zip_err)?.into_inner())
    })
    .await??;
    let disposition = format!("attachment; filename=\"registration-{id}.zip\"");
    Ok((
        [
            (header::CONTENT_TYPE, "application/zip".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        bytes,
    )
        .into_response())
}
