use basehop_experiments::spec::{ExperimentSpec, Family, PolicyName};
use basehop_experiments::ExperimentError;

fn panel_spec() -> ExperimentSpec {
    ExperimentSpec::new(Family::LifetimeVsPanel, vec![25.0, 50.0], vec![1, 2])
}

#[test]
fn empty_grid_is_a_validation_error() {
    let mut s = panel_spec();
    s.grid.clear();
    let err = s.validate().unwrap_err();
    assert!(matches!(err, ExperimentError::Validation(_)));
    assert!(err.to_string().contains("grid"), "{err}");
}

#[test]
fn bad_specs_are_rejected() {
    let mut s = panel_spec();
    s.seeds = vec![3, 3];
    assert!(s.validate().is_err());

    let mut s = panel_spec();
    s.grid.push(f64::NAN);
    assert!(s.validate().is_err());

    let mut s = panel_spec();
    s.base.bs_count = s.base.nodes + 1;
    assert!(s.validate().is_err());

    let mut s = ExperimentSpec::new(Family::EnergyVsTime, vec![0.0], vec![1]);
    assert!(s.validate().is_err());
    s.grid = vec![1.0, 5.0];
    s.validate().unwrap();

    let mut s = ExperimentSpec::new(Family::OverheadVsRate, vec![1.0], vec![1]);
    s.policies.push(PolicyName::Opt);
    assert!(s.validate().unwrap_err().to_string().contains("OPT"));

    let mut s = ExperimentSpec::new(Family::LifetimeVsM, vec![2.5], vec![1]);
    assert!(s.validate().is_err());
    s.grid = vec![0.0, 3.0];
    s.validate().unwrap();
}

#[test]
fn toml_round_trip_preserves_spec_and_hash() {
    for family in Family::ALL {
        let s = ExperimentSpec::new(family, vec![1.0, 2.0], vec![7, 8]);
        let text = s.to_toml_string();
        let back = ExperimentSpec::from_toml_str(&text).unwrap();
        assert_eq!(back, s, "{family}");
        assert_eq!(back.hash(), s.hash());
    }
}

#[test]
fn hash_tracks_every_field() {
    let s = panel_spec();
    assert_eq!(s.hash(), panel_spec().hash());
    assert_eq!(s.hash().len(), 64);
    let mut t = s.clone();
    t.seeds.push(3);
    assert_ne!(t.hash(), s.hash());
    let mut t = s.clone();
    t.base.range_m += 1.0;
    assert_ne!(t.hash(), s.hash());
    let mut t = s.clone();
    t.solar.gamma = 0.25;
    assert_ne!(t.hash(), s.hash());
}

#[test]
fn minimal_toml_fills_defaults() {
    let s = ExperimentSpec::from_toml_str("family = \"lifetime_vs_m\"\ngrid = [1, 2, 3]\nseeds = [5]\n").unwrap();
    assert_eq!(s.name, "lifetime_vs_m");
    assert_eq!(s.policies, Family::LifetimeVsM.default_policies());
    assert_eq!(s.base.nodes, 40);
}

#[test]
fn policy_names_accept_either_case() {
    let text = "family = \"lifetime_vs_panel\"\ngrid = [50]\nseeds = [1]\npolicies = [\"HEF\", \"rr\", \"Fixed\"]\n";
    assert!(ExperimentSpec::from_toml_str(text).is_err());
    let text = text.replace("Fixed", "FIXED");
    let s = ExperimentSpec::from_toml_str(&text).unwrap();
    assert_eq!(s.policies, vec![PolicyName::Hef, PolicyName::Rr, PolicyName::Fixed]);
}

#[test]
fn unknown_keys_are_rejected() {
    let err = ExperimentSpec::from_toml_str("family = \"cfr_vs_gprs\"\ngrid = [60]\nseeds = [1]\ncolour = 1\n");
    assert!(matches!(err, Err(ExperimentError::Toml(_))));
    let err = ExperimentSpec::from_toml_str("family = \"cfr_vs_gprs\"\ngrid = [60]\nseeds = [1]\n[base]\nnode = 3\n");
    assert!(err.is_err());
}

#[test]
fn missing_spec_file_names_the_path() {
    let err = ExperimentSpec::from_path("/nonexistent/spec.toml").unwrap_err();
    assert!(matches!(err, ExperimentError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/spec.toml"));
}
