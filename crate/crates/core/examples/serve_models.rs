//! Builds ANAT models for both fixture kinds and serves them over HTTP.
//!
//! ```text
//! cargo run --release --example serve_models -- 8080
//! curl localhost:8080/models
//! curl -X POST localhost:8080/models/femur/generate -H 'content-type: application/json' -d '{"params":{"NSA":130}}'
//! curl 'localhost:8080/models/scapula/sweep?param=GV&steps=7'
//! ```

use std::net::SocketAddr;
use std::sync::Arc;

use anat_ssm::fixtures::{sample_family, FixtureFamilySpec, FixtureKind};
use anat_ssm::mapping::{build_anat, fit_mapping, generate_population};
use anat_ssm::pca::build_base;
use anat_ssm::service::{serve_blocking, Registry, DEFAULT_MAX_BETA_STD};
use anat_ssm::DEFAULT_SEED;

fn main() -> anat_ssm::Result<()> {
    env_logger::init();
    let port: u16 = std::env::args().nth(1).and_then(|p| p.parse().ok()).unwrap_or(8080);
    let mut models = Vec::new();
    for (id, kind) in [("femur", FixtureKind::Femur), ("scapula", FixtureKind::Scapula)] {
        let family = sample_family(&FixtureFamilySpec::default_for(kind, 30, DEFAULT_SEED))?;
        let base = build_base(&family.dataset)?;
        let pop = generate_population(&base, &kind.recipe(), &family.landmarks, 1000, DEFAULT_SEED)?;
        let q = fit_mapping(&pop)?;
        let model = build_anat(base, &q, &pop.stats_map())?.with_measurement(kind.recipe(), family.landmarks)?;
        models.push((id.to_string(), model));
    }
    let registry = Arc::new(Registry::new(models, DEFAULT_MAX_BETA_STD)?);
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    println!("listening on http://{addr}");
    serve_blocking(registry, addr)
}
