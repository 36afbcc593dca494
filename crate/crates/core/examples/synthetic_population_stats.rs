//! Samples a synthetic femur population and reports normality, the
//! parameter correlations, and how the fitted mapping settles as the
//! population grows.

use anat_ssm::fixtures::{sample_family, FixtureFamilySpec, FixtureKind};
use anat_ssm::mapping::{generate_population, normality_report, pearson_reports, population_size_study};
use anat_ssm::pca::build_base;
use anat_ssm::DEFAULT_SEED;

fn main() -> anat_ssm::Result<()> {
    let kind = FixtureKind::Femur;
    let family = sample_family(&FixtureFamilySpec::default_for(kind, 30, DEFAULT_SEED))?;
    let base = build_base(&family.dataset)?;
    let pop = generate_population(&base, &kind.recipe(), &family.landmarks, 1000, DEFAULT_SEED)?;

    for (s, e) in pop.stats.iter().zip(&normality_report(&pop)?.entries) {
        println!("{:<4} mean {:>9.3}  sd {:>7.3}  W {:.4}  p {:.3}", e.label, s.mean, s.std, e.w, e.p);
    }
    let corr = pearson_reports(&pop)?;
    println!("\ncorr(beta, beta)\n{:.2}", corr.beta_beta);

    println!("M       |Q-corr|  |QQt-corr|");
    let sizes = [50, 100, 200, 400, 800];
    for p in population_size_study(&base, &kind.recipe(), &family.landmarks, &sizes, DEFAULT_SEED)? {
        println!("{:<6} {:>9.4}  {:>9.4}", p.m, p.weights_error, p.covariance_error);
    }
    Ok(())
}
