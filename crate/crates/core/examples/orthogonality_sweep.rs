//! Sweeps each parameter of ANAT and OC-ANAT femur models over +-3 SD and
//! prints the matrix of readout slopes. Off-diagonal entries measure how
//! much one parameter drags the others along.

use anat_ssm::fixtures::{sample_family, FixtureFamilySpec, FixtureKind};
use anat_ssm::mapping::{build_anat, build_oc_anat, fit_mapping, generate_population, orthogonal_procrustes, sweep};
use anat_ssm::pca::build_base;
use anat_ssm::DEFAULT_SEED;

fn main() -> anat_ssm::Result<()> {
    let kind = FixtureKind::Femur;
    let family = sample_family(&FixtureFamilySpec::default_for(kind, 30, DEFAULT_SEED))?;
    let base = build_base(&family.dataset)?;
    let pop = generate_population(&base, &kind.recipe(), &family.landmarks, 1000, DEFAULT_SEED)?;
    let q = fit_mapping(&pop)?;
    let k = orthogonal_procrustes(&q)?;
    let models = [
        ("ANAT", build_anat(base.clone(), &q, &pop.stats_map())?),
        ("OC-ANAT", build_oc_anat(base, &k, &pop.stats_map())?),
    ];
    for (name, model) in models {
        let model = model.with_measurement(kind.recipe(), family.landmarks.clone())?;
        println!("{name}: rows swept, columns read out");
        print!("{:>6}", "");
        for l in model.labels() {
            print!("{l:>8}");
        }
        println!();
        for l in model.labels() {
            let s = sweep(&model, l, 13)?;
            print!("{l:>6}");
            for v in &s.slopes {
                print!("{v:>8.3}");
            }
            println!();
        }
    }
    Ok(())
}
