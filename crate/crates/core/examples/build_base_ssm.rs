//! Builds a PCA shape model from a synthetic femur family and prints the
//! leading eigenvalues with their cumulative variance.

use anat_ssm::fixtures::{sample_family, FixtureFamilySpec, FixtureKind};
use anat_ssm::pca::{build_base, compactness};
use anat_ssm::DEFAULT_SEED;

fn main() -> anat_ssm::Result<()> {
    let family = sample_family(&FixtureFamilySpec::default_for(FixtureKind::Femur, 30, DEFAULT_SEED))?;
    let model = build_base(&family.dataset)?;
    println!(
        "{} shapes, {} vertices, rank {}",
        family.dataset.len(),
        model.n_points(),
        model.rank()
    );
    println!("mode  lambda_mm2        cumulative");
    for (i, lambda) in model.eigenvalues().iter().take(8).enumerate() {
        println!("{:>4}  {lambda:>14.3}  {:>10.4}", i + 1, compactness(&model, i + 1)?);
    }
    Ok(())
}
