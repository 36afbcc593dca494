//! HTTP API exercised through the router, plus a check against the CLI sweep.

use std::path::Path;
use std::process::Command;
use std::sync::{Arc, OnceLock};

use anat_ssm::fixtures::{sample_family, FixtureFamilySpec, FixtureKind};
use anat_ssm::mapping::{build_anat, build_oc_anat, fit_mapping, generate_population, orthogonal_procrustes, SweepResult};
use anat_ssm::pca::build_base;
use anat_ssm::service::{router, GenerateResponse, ModelInfo, Registry};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

struct Fixture {
    dir: TempDir,
    registry: Arc<Registry>,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let kind = FixtureKind::Scapula;
        let family = sample_family(&FixtureFamilySpec::default_for(kind, 12, 5)).unwrap();
        let base = build_base(&family.dataset).unwrap();
        let pop = generate_population(&base, &kind.recipe(), &family.landmarks, 300, 5).unwrap();
        let q = fit_mapping(&pop).unwrap();
        let k = orthogonal_procrustes(&q).unwrap();
        let anat = build_anat(base.clone(), &q, &pop.stats_map())
            .unwrap()
            .with_measurement(kind.recipe(), family.landmarks.clone())
            .unwrap();
        let oc = build_oc_anat(base, &k, &pop.stats_map())
            .unwrap()
            .with_measurement(kind.recipe(), family.landmarks.clone())
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        anat.save(dir.path().join("scapula.json")).unwrap();
        oc.save(dir.path().join("scapula-oc.json")).unwrap();
        let paths = [dir.path().join("scapula.json"), dir.path().join("scapula-oc.json")];
        let registry = Arc::new(Registry::load(&paths, 4.0).unwrap());
        Fixture { dir, registry }
    })
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

fn call(req: Request<Body>) -> (StatusCode, Vec<u8>) {
    runtime().block_on(async {
        let resp = router(Arc::clone(&fixture().registry)).oneshot(req).await.unwrap();
        let status = resp.status();
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, body)
    })
}

fn get(uri: &str) -> (StatusCode, Vec<u8>) {
    call(Request::get(uri).body(Body::empty()).unwrap())
}

fn post(uri: &str, json: &str) -> (StatusCode, Vec<u8>) {
    call(
        Request::post(uri)
            .header("content-type", "application/json")
            .body(Body::from(json.to_owned()))
            .unwrap(),
    )
}

fn error_message(body: &[u8]) -> String {
    let v: Value = serde_json::from_slice(body).unwrap();
    v["error"].as_str().unwrap().to_owned()
}

#[test]
fn lists_models_with_labels_and_stats() {
    let (status, body) = get("/models");
    assert_eq!(status, StatusCode::OK);
    let models: Vec<ModelInfo> = serde_json::from_slice(&body).unwrap();
    let ids: Vec<&str> = models.iter().map(|m| m.id.as_str()).collect();
    assert_eq!(ids, ["scapula", "scapula-oc"]);
    for m in &models {
        assert_eq!(m.labels, FixtureKind::Scapula.recipe().labels());
        assert_eq!(m.stats.len(), 6);
        assert_eq!(m.variability.entries.len(), 6);
    }
}

#[test]
fn empty_request_returns_the_mean_shape() {
    let (status, body) = post("/models/scapula/generate", "{}");
    assert_eq!(status, StatusCode::OK);
    let resp: GenerateResponse = serde_json::from_slice(&body).unwrap();
    assert!(resp.beta_std.iter().all(|&b| b == 0.0));
    let reg = &fixture().registry;
    let mean = reg.generate("scapula", &Default::default()).unwrap();
    assert_eq!(resp.mesh.vertices, mean.mesh.vertices);
    assert_eq!(resp.mesh.vertices.len() % 3, 0);
    assert_eq!(resp.mesh.faces.len() % 3, 0);
    assert!(resp.measurements.is_some());
}

#[test]
fn generation_is_deterministic_and_tracks_the_request() {
    let body = r#"{"params": {"GV": -8.0}}"#;
    let (s1, b1) = post("/models/scapula/generate", body);
    let (s2, b2) = post("/models/scapula/generate", body);
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(b1, b2);
    let resp: GenerateResponse = serde_json::from_slice(&b1).unwrap();
    let gv = resp.measurements.unwrap().get("GV").unwrap();
    assert!((gv + 8.0).abs() < 1.5, "GV measured {gv}");
}

#[test]
fn error_statuses() {
    let (status, body) = post("/models/nope/generate", "{}");
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(error_message(&body).contains("nope"));

    let (status, body) = post("/models/scapula/generate", r#"{"params": {"XX": 1.0}}"#);
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(error_message(&body).contains("XX"));

    let (status, body) = post("/models/scapula/generate", r#"{"params": {"GV": 500.0}}"#);
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(error_message(&body).contains("GV"));

    let (status, _) = get("/models/scapula/sweep");
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = get("/models/scapula/sweep?param=XX");
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = get("/models/scapula/sweep?param=GV&steps=1");
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = get("/models/nope/sweep?param=GV");
    assert_eq!(status, StatusCode::NOT_FOUND);
}

fn cli_sweep(dir: &Path, model: &str, param: &str, steps: usize) -> Vec<Vec<f64>> {
    let out = Command::new(env!("CARGO_BIN_EXE_assm"))
        .current_dir(dir)
        .args(["sweep", model, "--param", param, "--steps", &steps.to_string()])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .skip(1)
        .take(steps)
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

#[test]
fn sweep_endpoint_matches_the_cli() {
    let dir = fixture().dir.path();
    for (id, file) in [("scapula", "scapula.json"), ("scapula-oc", "scapula-oc.json")] {
        let (status, body) = get(&format!("/models/{id}/sweep?param=GI&steps=9"));
        assert_eq!(status, StatusCode::OK);
        let api: SweepResult = serde_json::from_slice(&body).unwrap();
        assert_eq!(api.t.len(), 9);
        let cli = cli_sweep(dir, file, "GI", 9);
        assert_eq!(cli.len(), 9);
        for (i, row) in cli.iter().enumerate() {
            assert_eq!(row[0], api.t[i]);
            let readout = api.readout[i].as_ref().unwrap();
            let measured = api.measured[i].as_ref().unwrap();
            for k in 0..api.labels.len() {
                assert_eq!(row[1 + 2 * k], readout[k], "{id} step {i} label {k}");
                assert_eq!(row[2 + 2 * k], measured[k], "{id} step {i} label {k}");
            }
        }
    }
}
