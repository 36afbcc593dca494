//! Compactness, generality and specificity curves of a scapula model.

use anat_ssm::fixtures::{sample_family, FixtureFamilySpec, FixtureKind};
use anat_ssm::pca::{build_base, metric_curves};
use anat_ssm::DEFAULT_SEED;

fn main() -> anat_ssm::Result<()> {
    let family = sample_family(&FixtureFamilySpec::default_for(FixtureKind::Scapula, 20, DEFAULT_SEED))?;
    let model = build_base(&family.dataset)?;
    let metrics = metric_curves(&model, &family.dataset, 200, DEFAULT_SEED)?;
    print!("{}", metrics.to_csv());
    Ok(())
}
