use std::ffi::{CStr, CString};
use std::ptr;

use cdpg_ffi::*;

fn last_error() -> String {
    let p = cdpg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn cliffwalk() -> *mut CdpgMdp {
    let mut mdp = ptr::null_mut();
    let status = unsafe { cdpg_mdp_cliffwalk(0.2, 30.0, 10.0, 0.95, &mut mdp) };
    assert_eq!(status, CdpgStatus::Ok);
    mdp
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(cdpg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn safe_path_cvar_through_handles() {
    unsafe {
        let mdp = cliffwalk();
        assert_eq!(cdpg_mdp_n_states(mdp), 9);
        assert_eq!(cdpg_mdp_n_actions(mdp), 4);

        let theta = cdpg::cliffwalk::safe_path_policy().theta().to_vec();
        let mut policy = ptr::null_mut();
        assert_eq!(
            cdpg_policy_from_theta(9, 4, theta.as_ptr(), theta.len(), &mut policy),
            CdpgStatus::Ok
        );
        let mut back = vec![0.0; 36];
        assert_eq!(cdpg_policy_theta(policy, back.as_mut_ptr(), 36), CdpgStatus::Ok);
        assert_eq!(back, theta);

        let mut table = ptr::null_mut();
        assert_eq!(cdpg_evaluate(mdp, policy, 0.0, 120.0, 121, &mut table), CdpgStatus::Ok);
        assert_eq!(cdpg_table_n_atoms(table), 121);

        let mut dist = vec![0.0; 121];
        assert_eq!(
            cdpg_table_state_distribution(table, policy, 6, dist.as_mut_ptr(), 121),
            CdpgStatus::Ok
        );
        assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let mut cvar = 0.0;
        assert_eq!(
            cdpg_table_risk(table, policy, 6, CdpgRiskKind::Cvar, 0.1, &mut cvar),
            CdpgStatus::Ok
        );
        let mut mean = 0.0;
        assert_eq!(
            cdpg_table_risk(table, policy, 6, CdpgRiskKind::Expectation, 0.0, &mut mean),
            CdpgStatus::Ok
        );
        // projection keeps the mean of the deterministic six-step return
        assert!((mean - 10.0 * (1.0 - 0.95f64.powi(6)) / 0.05).abs() < 1e-9);

        let rust_side = {
            let mdp = cdpg::cliffwalk::CliffwalkParams::default().build().unwrap();
            let p = cdpg::cliffwalk::safe_path_policy();
            let grid = cdpg::SupportGrid::new(0.0, 120.0, 121).unwrap();
            let out = cdpg::evaluate_policy(&mdp, &p, grid, &Default::default(), None).unwrap();
            let d = cdpg::state_distribution(&out.table, &p, 6).unwrap();
            assert_eq!(d.probs(), &dist[..]);
            cdpg::risk_value(&d, &cdpg::RiskMeasure::Cvar { alpha: 0.1 }).unwrap()
        };
        assert_eq!(cvar, rust_side);
        assert!(mean <= cvar);

        cdpg_table_free(table);
        cdpg_policy_free(policy);
        cdpg_mdp_free(mdp);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut mdp = ptr::null_mut();
        assert_eq!(
            cdpg_mdp_cliffwalk(1.5, 30.0, 10.0, 0.95, &mut mdp),
            CdpgStatus::InvalidArgument
        );
        assert!(mdp.is_null());
        assert!(last_error().contains("slip"));

        assert_eq!(
            cdpg_mdp_cliffwalk(0.2, 30.0, 10.0, 0.95, ptr::null_mut()),
            CdpgStatus::NullPointer
        );

        let bad = CString::new("{not json").unwrap();
        assert_eq!(cdpg_mdp_from_json(bad.as_ptr(), &mut mdp), CdpgStatus::ParseError);

        let mdp = cliffwalk();
        assert!(cdpg_last_error().is_null());
        let mut policy = ptr::null_mut();
        assert_eq!(cdpg_policy_uniform(3, 2, &mut policy), CdpgStatus::Ok);
        let mut table = ptr::null_mut();
        assert_eq!(
            cdpg_evaluate(mdp, policy, 0.0, 120.0, 121, &mut table),
            CdpgStatus::DimensionMismatch
        );
        let mut small = [0.0; 2];
        assert_eq!(
            cdpg_policy_theta(policy, small.as_mut_ptr(), 2),
            CdpgStatus::DimensionMismatch
        );
        assert_eq!(
            cdpg_policy_theta(ptr::null(), small.as_mut_ptr(), 2),
            CdpgStatus::NullPointer
        );
        cdpg_policy_free(policy);
        cdpg_mdp_free(mdp);
        cdpg_mdp_free(ptr::null_mut());
    }
}

#[test]
fn mdp_json_round_trip() {
    let json = serde_json::to_string(&cdpg::cliffwalk::CliffwalkParams::default().build().unwrap())
        .unwrap();
    let json = CString::new(json).unwrap();
    unsafe {
        let mut mdp = ptr::null_mut();
        assert_eq!(cdpg_mdp_from_json(json.as_ptr(), &mut mdp), CdpgStatus::Ok);
        assert_eq!(cdpg_mdp_n_states(mdp), 9);
        cdpg_mdp_free(mdp);
    }
}

#[test]
fn short_training_run() {
    let config = CString::new(r#"{"iterations": 3, "rng_seed": 1}"#).unwrap();
    unsafe {
        let mdp = cliffwalk();
        let mut policy = ptr::null_mut();
        assert_eq!(
            cdpg_train_policy(mdp, CdpgRiskKind::Cvar, 0.1, config.as_ptr(), &mut policy),
            CdpgStatus::Ok
        );
        let mut theta = vec![0.0; 36];
        assert_eq!(cdpg_policy_theta(policy, theta.as_mut_ptr(), 36), CdpgStatus::Ok);
        assert!(theta.iter().any(|&t| t != 0.0));
        cdpg_policy_free(policy);

        let bad = CString::new(r#"{"step_size": -1}"#).unwrap();
        assert_eq!(
            cdpg_train_policy(mdp, CdpgRiskKind::Cvar, 0.1, bad.as_ptr(), &mut policy),
            CdpgStatus::ParseError
        );
        cdpg_mdp_free(mdp);
    }
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/cdpg.h");
    for name in [
        "cdpg_version",
        "cdpg_last_error",
        "cdpg_mdp_cliffwalk",
        "cdpg_mdp_from_json",
        "cdpg_mdp_free",
        "cdpg_policy_uniform",
        "cdpg_policy_from_theta",
        "cdpg_policy_theta",
        "cdpg_policy_free",
        "cdpg_evaluate",
        "cdpg_table_state_distribution",
        "cdpg_table_risk",
        "cdpg_table_free",
        "cdpg_train_policy",
        "typedef struct CdpgMdp CdpgMdp;",
        "CDPG_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn c_program_links_against_static_library() {
    use std::path::PathBuf;
    use std::process::Command;

    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/capi-* → target/<profile>
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .and_then(|p| p.parent())
        .unwrap()
        .to_path_buf();
    let lib = profile_dir.join("libcdpg_ffi.a");
    assert!(lib.is_file(), "static library not built at {}", lib.display());
    let exe = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cdpg_smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mut parts = stdout.split_whitespace();
    assert_eq!(parts.next(), Some(env!("CARGO_PKG_VERSION")));
    let mean: f64 = parts.next().unwrap().parse().unwrap();

    let mdp = cdpg::cliffwalk::CliffwalkParams::default().build().unwrap();
    let expected = mdp.expected_values(&cdpg::SoftmaxPolicy::uniform(9, 4)).unwrap()[6];
    assert!((mean - expected).abs() < 1e-3, "{mean} vs {expected}");
}
