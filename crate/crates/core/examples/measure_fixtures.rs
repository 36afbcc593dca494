//! Measures the default femur and scapula fixtures and compares each value
//! with the parameter it was built from.

use anat_ssm::fixtures::{make_fixture, FixtureKind};
use anat_ssm::morphometry::measure;

fn main() -> anat_ssm::Result<()> {
    for kind in [FixtureKind::Femur, FixtureKind::Scapula] {
        let params = kind.default_params();
        let (mesh, landmarks) = make_fixture(&params)?;
        let measured = measure(&kind.recipe(), &landmarks.locate(&mesh)?)?;
        println!("{kind:?} ({} vertices)", mesh.n_vertices());
        for (label, expected) in params.expected() {
            let got = measured.get(&label).expect("recipe label");
            println!("  {label:<4} built {expected:>9.4}  measured {got:>9.4}");
        }
    }
    Ok(())
}
