//! HTTP service for the authoring front-end.
//!
//! Projects live under `<data root>/projects/<id>/project.json`; relative asset
//! paths resolve against that directory. Mutations are single-writer per
//! project: a request that finds the project busy gets 409 instead of waiting.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chartblender_core::anchor::AnchorSpec;
use chartblender_core::compositor::{RenderError, Renderer, TimelineSegment};
use chartblender_core::project::{
    self, export_render, load_chart_table, load_frame, output_file_name, resolve_render_inputs, write_render, ChartEntry,
    JobStatus, Project, ProjectError, RenderJob, RENDER_REPORT,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::{Mutex as AsyncMutex, OwnedMutexGuard};

use crate::error_kind;

pub const PROJECT_FILE: &str = "project.json";

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl ToString) -> Self {
        Self { status, kind: kind.into(), message: message.to_string() }
    }

    fn not_found(what: impl ToString) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", what)
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "ValidationError", message)
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let status = if e.is_validation() { StatusCode::BAD_REQUEST } else { StatusCode::INTERNAL_SERVER_ERROR };
        Self::new(status, error_kind(&e), e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.kind, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct JobHandle {
    job: Mutex<RenderJob>,
    progress: AtomicUsize,
    out_dir: PathBuf,
}

impl JobHandle {
    fn snapshot(&self) -> RenderJob {
        let mut job = self.job.lock().expect("job lock").clone();
        job.set_progress(self.progress.load(Ordering::Relaxed));
        job
    }
}

pub struct AppState {
    root: PathBuf,
    writers: Mutex<HashMap<String, Arc<AsyncMutex<()>>>>,
    jobs: Mutex<HashMap<String, Arc<JobHandle>>>,
    /// Most recent completed render per project.
    latest: Mutex<HashMap<String, String>>,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(root: PathBuf) -> Self {
        Self {
            root,
            writers: Mutex::new(HashMap::new()),
            jobs: Mutex::new(HashMap::new()),
            latest: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    fn projects_dir(&self) -> PathBuf {
        self.root.join("projects")
    }

    fn project_dir(&self, id: &str) -> ApiResult<PathBuf> {
        let valid = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        let dir = self.projects_dir().join(id);
        if valid && dir.join(PROJECT_FILE).is_file() {
            Ok(dir)
        } else {
            Err(ApiError::not_found(format!("project {id:?}")))
        }
    }

    fn try_write(&self, id: &str) -> ApiResult<OwnedMutexGuard<()>> {
        let lock = self.writers.lock().expect("writer map").entry(id.to_string()).or_default().clone();
        lock.try_lock_owned()
            .map_err(|_| ApiError::new(StatusCode::CONFLICT, "Conflict", format!("project {id:?} is being modified")))
    }

    fn latest_render(&self, id: &str) -> Option<Arc<JobHandle>> {
        let job = self.latest.lock().expect("latest map").get(id).cloned()?;
        self.jobs.lock().expect("job map").get(&job).cloned()
    }
}

pub fn router(root: PathBuf) -> Router {
    router_with_state(Arc::new(AppState::new(root)))
}

pub fn router_with_state(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project).put(put_project))
        .route("/projects/{id}/anchor", put(put_anchor).post(put_anchor))
        .route("/projects/{id}/charts/{cid}", put(put_chart))
        .route("/projects/{id}/segments/{sid}", put(put_segment))
        .route("/projects/{id}/track", post(track))
        .route("/projects/{id}/render", post(start_render))
        .route("/projects/{id}/render/{job}/status", get(render_status))
        .route("/projects/{id}/frames/{n}", get(get_frame))
        .route("/projects/{id}/export", post(export))
        .with_state(state)
}

pub async fn serve(addr: &str, root: PathBuf) -> std::io::Result<()> {
    std::fs::create_dir_all(root.join("projects"))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(root))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(ApiError::bad_request)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e))?
}

/// Load, modify and save a project under its writer lock. Nothing is written
/// if `f` fails or the result does not validate.
async fn mutate<T, F>(state: &AppState, id: &str, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Project, &Path) -> ApiResult<T> + Send + 'static,
{
    let dir = state.project_dir(id)?;
    let guard = state.try_write(id)?;
    blocking(move || {
        let _guard = guard;
        let path = dir.join(PROJECT_FILE);
        let mut p = Project::load(&path)?;
        let out = f(&mut p, &dir)?;
        p.save(&path)?;
        Ok(out)
    })
    .await
}

async fn create_project(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let p = Project::from_json(std::str::from_utf8(&body).map_err(ApiError::bad_request)?)?;
    let projects = state.projects_dir();
    std::fs::create_dir_all(&projects).map_err(ProjectError::from)?;
    let id = loop {
        let id = format!("p{}", state.next_id.fetch_add(1, Ordering::Relaxed));
        // create_dir fails if another request (or an earlier run) took the id.
        match std::fs::create_dir(projects.join(&id)) {
            Ok(()) => break id,
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(ProjectError::from(e).into()),
        }
    };
    p.save(&projects.join(&id).join(PROJECT_FILE))?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id, "project": p }))))
}

async fn get_project(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Project>> {
    let dir = state.project_dir(&id)?;
    Ok(Json(Project::load(&dir.join(PROJECT_FILE))?))
}

async fn put_project(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Project>> {
    let new = Project::from_json(std::str::from_utf8(&body).map_err(ApiError::bad_request)?)?;
    let saved = new.clone();
    mutate(&state, &id, move |p, _| {
        *p = new;
        Ok(())
    })
    .await?;
    Ok(Json(saved))
}

#[derive(Deserialize)]
struct AnchorRequest {
    #[serde(default)]
    id: Option<String>,
    #[serde(flatten)]
    anchor: AnchorSpec,
}

async fn put_anchor(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: AnchorRequest = parse(&body)?;
    let out = mutate(&state, &id, move |p, _| {
        let anchor_id = req.id.unwrap_or_else(|| (1..).map(|n| format!("anchor{n}")).find(|k| !p.anchors.contains_key(k)).expect("unbounded"));
        p.anchors.insert(anchor_id.clone(), req.anchor);
        Ok(json!({ "id": anchor_id, "anchor": req.anchor }))
    })
    .await?;
    Ok(Json(out))
}

async fn put_chart(
    State(state): State<Arc<AppState>>,
    UrlPath((id, cid)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<ChartEntry>> {
    let entry: ChartEntry = parse(&body)?;
    let saved = entry.clone();
    mutate(&state, &id, move |p, dir| {
        let table = load_chart_table(dir, &entry).map_err(|e| match e {
            ProjectError::Io(e) => ApiError::bad_request(format!("chart data {:?}: {e}", entry.data)),
            e => ApiError::from(e),
        })?;
        entry.spec.validate(&table).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "ChartError", e))?;
        p.charts.insert(cid, entry);
        Ok(())
    })
    .await?;
    Ok(Json(saved))
}

async fn put_segment(
    State(state): State<Arc<AppState>>,
    UrlPath((id, sid)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<TimelineSegment>> {
    let segment: TimelineSegment = parse(&body)?;
    let saved = segment.clone();
    mutate(&state, &id, move |p, _| {
        p.segments.insert(sid, segment);
        Ok(())
    })
    .await?;
    Ok(Json(saved))
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum TrackKind {
    Camera,
    Object,
}

#[derive(Deserialize)]
struct TrackRequest {
    mode: TrackKind,
    #[serde(default)]
    anchor: Option<String>,
}

async fn track(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let req: TrackRequest = parse(&body)?;
    let outcomes = mutate(&state, &id, move |p, dir| {
        Ok(match req.mode {
            TrackKind::Camera => vec![project::track_camera(p, dir)?],
            TrackKind::Object => project::track_objects(p, dir, req.anchor.as_deref())?,
        })
    })
    .await?;
    Ok(Json(json!({ "tracked": outcomes })))
}

async fn start_render(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<(StatusCode, Json<RenderJob>)> {
    let dir = state.project_dir(&id)?;
    let (p, renderer) = {
        let dir = dir.clone();
        blocking(move || {
            let p = Project::load(&dir.join(PROJECT_FILE))?;
            let renderer = Renderer::new(resolve_render_inputs(&p, &dir)?).map_err(ProjectError::from)?;
            Ok((p, renderer))
        })
        .await?
    };
    let job_id = format!("r{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let handle = Arc::new(JobHandle {
        job: Mutex::new(RenderJob::new(job_id.clone(), id.clone(), p.video.frame_count)),
        progress: AtomicUsize::new(0),
        out_dir: dir.join("renders").join(&job_id),
    });
    state.jobs.lock().expect("job map").insert(job_id.clone(), handle.clone());
    let snapshot = handle.snapshot();

    let state = state.clone();
    tokio::task::spawn_blocking(move || {
        handle.job.lock().expect("job lock").advance(JobStatus::Running);
        let result = write_render(&renderer, &p, &dir, &handle.out_dir, &handle.progress);
        let mut job = handle.job.lock().expect("job lock");
        match result {
            Ok(_) => {
                job.finish(handle.out_dir.join(RENDER_REPORT).to_string_lossy().into_owned());
                state.latest.lock().expect("latest map").insert(id, job.id.clone());
            }
            Err(e) => {
                log::error!("render {} failed: {e}", job.id);
                job.fail(format!("{}: {e}", error_kind(&e)));
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(snapshot)))
}

async fn render_status(
    State(state): State<Arc<AppState>>,
    UrlPath((id, job)): UrlPath<(String, String)>,
) -> ApiResult<Json<RenderJob>> {
    state.project_dir(&id)?;
    let handle = state.jobs.lock().expect("job map").get(&job).cloned();
    match handle {
        Some(h) if h.job.lock().expect("job lock").project_id == id => Ok(Json(h.snapshot())),
        _ => Err(ApiError::not_found(format!("render job {job:?}"))),
    }
}

fn png_response(bytes: Vec<u8>, source: &'static str) -> Response {
    ([(header::CONTENT_TYPE, "image/png"), (header::HeaderName::from_static("x-chartblender-source"), source)], bytes)
        .into_response()
}

fn encode_png(img: &image::RgbImage) -> ApiResult<Vec<u8>> {
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "ImageError", e))?;
    Ok(bytes)
}

/// Frame `n` of the latest completed render; otherwise a live preview, or the
/// plain input frame while trajectories are not yet tracked.
async fn get_frame(State(state): State<Arc<AppState>>, UrlPath((id, n)): UrlPath<(String, usize)>) -> ApiResult<Response> {
    let dir = state.project_dir(&id)?;
    let latest = state.latest_render(&id);
    blocking(move || {
        let p = Project::load(&dir.join(PROJECT_FILE))?;
        if n >= p.video.frame_count {
            return Err(ApiError::not_found(format!("frame {n}")));
        }
        if let Some(h) = latest {
            if let Ok(bytes) = std::fs::read(h.out_dir.join(output_file_name(n))) {
                return Ok(png_response(bytes, "render"));
            }
        }
        let frame = load_frame(&p, &dir, n)?;
        match resolve_render_inputs(&p, &dir) {
            Ok(inputs) => {
                let renderer = Renderer::new(inputs).map_err(ProjectError::from)?;
                Ok(png_response(encode_png(&renderer.render_frame(n, &frame).raster)?, "preview"))
            }
            Err(ProjectError::Render(RenderError::MissingTrajectory(_) | RenderError::MissingDepth(_))) => {
                Ok(png_response(encode_png(&frame)?, "input"))
            }
            Err(e) => Err(e.into()),
        }
    })
    .await
}

async fn export(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<serde_json::Value>> {
    let dir = state.project_dir(&id)?;
    let Some(handle) = state.latest_render(&id) else {
        return Err(ApiError::new(StatusCode::CONFLICT, "NoRender", "no completed render to export"));
    };
    let manifest = blocking(move || {
        let p = Project::load(&dir.join(PROJECT_FILE))?;
        let total = handle.job.lock().expect("job lock").total;
        Ok(export_render(&handle.out_dir, &dir.join("export"), total, p.video.fps)?)
    })
    .await?;
    Ok(Json(serde_json::to_value(manifest).expect("manifest serializes")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use axum::body::Body;
    use axum::http::Request;
    use tower::ServiceExt;

    #[tokio::test]
    async fn busy_project_rejects_mutation() {
        let dir = tempfile::tempdir().unwrap();
        let state = Arc::new(AppState::new(dir.path().to_path_buf()));
        let app = router_with_state(state.clone());
        let p = Project::new(project::VideoSpec { frames_dir: "frames".into(), fps: 30.0, width: 64, height: 48, frame_count: 5 });
        let res = app.clone().oneshot(Request::post("/projects").body(Body::from(p.to_json())).unwrap()).await.unwrap();
        assert_eq!(res.status(), StatusCode::CREATED);

        let anchor = || Request::put("/projects/p1/anchor").body(Body::from(r#"{"pixel":[3,4],"mode":"camera"}"#)).unwrap();
        let guard = state.try_write("p1").unwrap();
        assert_eq!(app.clone().oneshot(anchor()).await.unwrap().status(), StatusCode::CONFLICT);
        drop(guard);
        assert_eq!(app.oneshot(anchor()).await.unwrap().status(), StatusCode::OK);
        let saved = Project::load(&dir.path().join("projects/p1").join(PROJECT_FILE)).unwrap();
        assert_eq!(saved.anchors.len(), 1);
    }
}
