//! Leave-one-out comparison of landmark transfer against ANAT and OC-ANAT
//! predictions on a small femur family.

use anat_ssm::fixtures::{sample_family, FixtureFamilySpec, FixtureKind};
use anat_ssm::mapping::loo_evaluate;
use anat_ssm::DEFAULT_SEED;

fn main() -> anat_ssm::Result<()> {
    let kind = FixtureKind::Femur;
    let family = sample_family(&FixtureFamilySpec::default_for(kind, 15, DEFAULT_SEED))?;
    let report = loo_evaluate(&family.dataset, &kind.recipe(), &family.landmarks, 500, DEFAULT_SEED)?;
    println!("{:<8} {:<4} {:>10} {:>10}", "model", "label", "mean", "max");
    for s in &report.summary {
        println!("{:<8} {:<4} {:>10.4} {:>10.4}", s.model, s.label, s.mean, s.max);
    }
    Ok(())
}
