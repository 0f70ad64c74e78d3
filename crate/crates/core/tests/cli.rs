use std::path::Path;
use std::process::{Command, Output};

use vifi::fitting::FitResult;
use vifi::io::{load_json, save_json};
use vifi::radiomap::Radiomap;
use vifi::simulator::{make_world, Template};

fn vifi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vifi"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn simulate(dir: &Path, template: &str) {
    ok(vifi(dir, &["simulate", "--template", template, "--preset", "controlled", "--seed", "7"]));
}

fn fit_args<'a>(dir: &'a Path, extra: &[&'a str]) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "fit".into(),
        "--floorplan".into(),
        path(dir, "floorplan.json"),
        "--aps".into(),
        path(dir, "aps.json"),
        "--measurements".into(),
        path(dir, "measurements.csv"),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(dir: &Path, args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    vifi(dir, &refs)
}

#[test]
fn simulate_writes_the_campaign_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(vifi(
        dir.path(),
        &["simulate", "--template", "spinv_like", "--preset", "controlled", "--dr", "0.03", "--seed", "7"],
    ));
    for f in ["floorplan.json", "aps.json", "measurements.csv", "testpoints.csv", "world.json"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("measurements.csv")).unwrap();
    assert!(csv.starts_with("rp_id,x,y,z,ap_id,rss_dbm,scan_index\n"));
    // round(0.03 · 504) = 15 RPs, 7 APs, 50 scans
    assert_eq!(csv.lines().count() - 1, 15 * 7 * 50);
}

#[test]
fn missing_input_exits_with_code_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &fit_args(dir.path(), &[]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("floorplan.json"));
}

#[test]
fn malformed_measurements_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "twist_like");
    std::fs::write(dir.path().join("measurements.csv"), "rp_id,x,y,z,ap_id,rss_dbm,scan_index\nrp0,1,1,1,ap1,loud,0\n").unwrap();
    let out = run(dir.path(), &fit_args(dir.path(), &[]));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("measurements.csv"));
}

#[test]
fn underdetermined_fit_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "spinv_like");
    let out = run(dir.path(), &fit_args(dir.path(), &["--strategy", "per-ap", "--rho", "0.02"]));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn per_ap_with_a_single_ap_matches_environment_fitting() {
    let dir = tempfile::tempdir().unwrap();
    let mut world = make_world(&Template::TwistLike, 4).unwrap();
    world.aps.truncate(1);
    world.truth.retain(|id, _| id == &world.aps[0].id);
    let spec = dir.path().join("one_ap.json");
    save_json(&spec, &world).unwrap();
    let template = format!("custom:{}", spec.display());
    simulate(dir.path(), &template);

    ok(run(dir.path(), &fit_args(dir.path(), &["--strategy", "env"])));
    let env: FitResult = load_json(&dir.path().join("fit.json")).unwrap();
    ok(run(dir.path(), &fit_args(dir.path(), &["--strategy", "per-ap"])));
    let per_ap: FitResult = load_json(&dir.path().join("fit.json")).unwrap();
    assert_eq!(env.params_by_ap, per_ap.params_by_ap);
    assert_eq!(env.residual_rms, per_ap.residual_rms);
    assert_eq!(env.m_used, per_ap.m_used);
}

#[test]
fn fit_output_feeds_build_radiomap_and_locate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "twist_like");
    ok(run(d, &fit_args(d, &["--rho", "0.5"])));
    let fit: FitResult = load_json(&d.join("fit.json")).unwrap();
    assert_eq!(fit.params_by_ap.len(), 4);
    ok(vifi(
        d,
        &[
            "build-radiomap", "--floorplan", &path(d, "floorplan.json"), "--aps", &path(d, "aps.json"),
            "--measurements", &path(d, "measurements.csv"), "--fit", &path(d, "fit.json"), "--rho", "0.5", "--dv", "1",
        ],
    ));
    let map = Radiomap::load(&d.join("radiomap.json")).unwrap();
    assert_eq!(map.n_real(), 21);
    assert_eq!(map.n_virtual(), 450);

    // one target site gives a single object
    let tps = std::fs::read_to_string(d.join("testpoints.csv")).unwrap();
    let mut lines = tps.lines();
    let header = lines.next().unwrap();
    let first: Vec<&str> = lines.filter(|l| l.starts_with("tp0000,")).collect();
    std::fs::write(d.join("one.csv"), format!("{header}\n{}\n", first.join("\n"))).unwrap();
    let out = ok(vifi(d, &["locate", "--radiomap", &path(d, "radiomap.json"), "--target", &path(d, "one.csv"), "--k", "3"]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["x"].is_f64() && v["y"].is_f64() && v["z"].is_f64());
    assert_eq!(v["neighbors"].as_array().unwrap().len(), 3);

    let out = ok(vifi(d, &["locate", "--radiomap", &path(d, "radiomap.json"), "--target", &path(d, "testpoints.csv")]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let all = v.as_array().unwrap();
    assert_eq!(all.len(), 80);
    // default α = 0.05 over 471 RPs
    assert_eq!(all[0]["k"], 24);
}

#[test]
fn k_and_alpha_are_mutually_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = vifi(dir.path(), &["locate", "--radiomap", "m.json", "--target", "t.csv", "--k", "3", "--alpha", "0.05"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_uses_the_default_grids() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    simulate(d, "twist_like");
    let out = ok(vifi(
        d,
        &[
            "evaluate", "--floorplan", &path(d, "floorplan.json"), "--aps", &path(d, "aps.json"), "--measurements",
            &path(d, "measurements.csv"), "--testpoints", &path(d, "testpoints.csv"), "--alpha-range", "0.01:0.25",
        ],
    ));
    let stdout = String::from_utf8(out.stdout).unwrap();
    for key in ["mean_delta_db", "mean_error_m", "gain", "beta_m alpha=0.05"] {
        assert!(stdout.contains(key), "headline missing {key}");
    }
    let csv = std::fs::read_to_string(d.join("positioning.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next().unwrap(), "d_real,d_virtual,k,strategy,model,mean_error_m,p25,p50,p75,min,max,gain");
    // 4 ρ values × (baseline + 7 virtual densities)
    assert_eq!(rows.count(), 32);
    let kest = std::fs::read_to_string(d.join("kest.csv")).unwrap();
    // 4 ρ × 7 dᵛ × 25 α
    assert_eq!(kest.lines().count() - 1, 4 * 7 * 25);
    let prediction = std::fs::read_to_string(d.join("prediction.csv")).unwrap();
    assert!(prediction.lines().skip(1).any(|l| l.starts_with("0.1,5,env,mwmf,all,")));
    for f in ["prediction.json", "positioning.json", "positioning_by_k.csv", "gain.csv", "gain.json", "kest.json"] {
        assert!(d.join(f).is_file(), "missing {f}");
    }
}
