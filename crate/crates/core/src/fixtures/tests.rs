use super::*;
use crate::morphometry::measure;
use crate::stats::pearson;

fn measured(p: &FixtureParams) -> Vec<(String, f64)> {
    let (mesh, lm) = make_fixture(p).unwrap();
    let m = measure(&p.kind().recipe(), &lm.locate(&mesh).unwrap()).unwrap();
    m.entries().iter().map(|e| (e.label.clone(), e.value)).collect()
}

fn tolerance(label: &str) -> f64 {
    match label {
        "NSA" | "FV" | "CSA" | "GI" | "GV" => 0.5,
        // FL is reported in cm; 0.1 mm
        "FL" => 0.01,
        _ => 0.1,
    }
}

#[test]
fn femur_reference_example() {
    let p = FixtureParams::Femur(FemurParams {
        length: 43.0,
        head_diameter: 52.0,
        neck_shaft_angle: 125.0,
        version: 14.0,
        condylar_width: 84.0,
    });
    let got = measured(&p);
    for ((label, v), (l2, want)) in got.iter().zip(p.expected()) {
        assert_eq!(label, &l2);
        assert!((v - want).abs() < tolerance(label), "{label}: {v} vs {want}");
    }
}

#[test]
fn scapula_defaults_recovered() {
    let p = FixtureKind::Scapula.default_params();
    for ((label, v), (_, want)) in measured(&p).iter().zip(p.expected()) {
        assert!((v - want).abs() < tolerance(label), "{label}: {v} vs {want}");
    }
}

#[test]
fn deterministic_and_shared_topology() {
    let p = FixtureKind::Femur.default_params();
    let (a, la) = make_fixture(&p).unwrap();
    let (b, lb) = make_fixture(&p).unwrap();
    assert_eq!(a.vertices(), b.vertices());
    assert_eq!(la, lb);
    assert_eq!(la, femur_landmarks());
    let mut q = p;
    if let FixtureParams::Femur(f) = &mut q {
        f.neck_shaft_angle = 135.0;
    }
    let (c, _) = make_fixture(&q).unwrap();
    assert!(std::sync::Arc::ptr_eq(a.topology(), c.topology()));
    assert_eq!(la.len(), 18);
    assert_eq!(scapula_landmarks().len(), 20);
}

#[test]
fn uniform_length_scaling_keeps_angles() {
    let base = ScapulaParams::default();
    let mut big = base;
    big.length *= 2.0;
    big.glenoid_height *= 2.0;
    big.glenoid_width *= 2.0;
    let a = measured(&FixtureParams::Scapula(base));
    let b = measured(&FixtureParams::Scapula(big));
    for ((label, x), (_, y)) in a.iter().zip(&b) {
        if ["CSA", "GI", "GV"].contains(&label.as_str()) {
            assert!((x - y).abs() < 1e-9, "{label}");
        } else {
            assert!((2.0 * x - y).abs() < 1e-9, "{label}");
        }
    }
}

#[test]
fn invalid_params_rejected() {
    let mut f = FemurParams::default();
    f.condylar_width = 30.0;
    assert!(make_femur(&f).is_err());
    let mut s = ScapulaParams::default();
    s.critical_shoulder_angle = 190.0;
    assert!(make_scapula(&s).is_err());
}

#[test]
fn zero_covariance_gives_identical_shapes() {
    let mut spec = FixtureFamilySpec::default_for(FixtureKind::Femur, 4, 3);
    spec.covariance = vec![vec![0.0; 5]; 5];
    let fam = sample_family(&spec).unwrap();
    for s in fam.dataset.shapes() {
        assert_eq!(s, &fam.dataset.shapes()[0]);
    }
}

#[test]
fn family_seed_determinism() {
    let spec = FixtureFamilySpec::default_for(FixtureKind::Scapula, 5, 11);
    let a = sample_family(&spec).unwrap();
    let b = sample_family(&spec).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.dataset.shapes(), b.dataset.shapes());
    assert_eq!(a.ground_truth_csv(), b.ground_truth_csv());
}

#[test]
fn generator_correlation_reaches_measurements() {
    let mut spec = FixtureFamilySpec::default_for(FixtureKind::Femur, 1000, 5);
    // corr(length, width) = 0.8 by default
    assert!((spec.covariance[0][4] / (2.9 * 6.3) - 0.8).abs() < 1e-12);
    spec.n = 1000;
    let fam = sample_family(&spec).unwrap();
    let mut fl = Vec::new();
    let mut bw = Vec::new();
    for p in &fam.params {
        let m = measured(p);
        fl.push(m.iter().find(|(l, _)| l == "FL").unwrap().1);
        bw.push(m.iter().find(|(l, _)| l == "BW").unwrap().1);
    }
    let r = pearson(&fl, &bw).unwrap();
    assert!((r - 0.8).abs() < 0.05, "corr = {r}");
}
