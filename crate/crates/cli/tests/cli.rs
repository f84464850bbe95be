use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ulam-escape"));
    cmd.env_remove("ULAM_ESCAPE_CACHE");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(out)))
}

/// `x -> 30x mod 1`, small enough to certify in a few hundred bins.
fn thirty_branch(dir: &Path) -> String {
    let mut text = String::from("label = \"30x-mod-1\"\n");
    for i in 0..30 {
        text += &format!(
            "\n[[branch]]\ndomain = [\"{i}/30\", \"{}/30\"]\nkind = \"linear\"\nslope = \"30\"\nintercept = \"{}\"\n",
            i + 1,
            -i
        );
    }
    let path = dir.join("thirty.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn certify_args<'a>(map: &'a str, ell: &'a str) -> Vec<&'a str> {
    certify_from(map, ell, "100")
}

fn certify_from<'a>(map: &'a str, ell: &'a str, bins: &'a str) -> Vec<&'a str> {
    vec!["certify", "--map", map, "--ell", ell, "--bins-init", bins, "--dense-limit", "500"]
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["kl-constants", "--alpha0", "1/9"]).status.code(), Some(2));
    assert_eq!(run(&["escape", "--map", "doubling", "--bins", "8", "--hole", "nonsense"]).status.code(), Some(2));
}

#[test]
fn computation_errors_exit_one() {
    let out = run(&["escape", "--map", "no-such-map", "--bins", "8", "--hole", "0,1/8"]);
    assert_eq!(out.status.code(), Some(1));
    // Hole endpoints off the bin grid.
    let out = run(&["escape", "--map", "doubling", "--bins", "8", "--hole", "0,1/3"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn kl_constants_reproduce_the_hole_bound() {
    let out = run(&["kl-constants", "--alpha0", "1/9", "--B0", "2/9", "--r", "24/25", "--delta", "1/26", "--H", "45.46070939"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let value: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("(2 Gamma)^-1 epsilon0"))
        .unwrap_or_else(|| panic!("{text}"))
        .trim()
        .parse()
        .unwrap();
    assert!((value / 0.000231949204 - 1.0).abs() < 1e-9, "{value}");
    assert!(text.lines().any(|l| l.starts_with("n2") && l.trim_end().ends_with(" 8")), "{text}");
}

#[test]
fn escape_on_decimal_shift() {
    let out = run(&["--json", "escape", "--map", "decimal-shift", "--bins", "10", "--hole", "0,1/10"]);
    assert!(out.status.success());
    let v = json(&out);
    let e_h = v["result"]["e_h"].as_f64().unwrap();
    assert!((e_h - 0.9).abs() < 1e-12, "{e_h}");
    assert_eq!(v["manifest"]["map_path"], "bundled:decimal-shift");
}

#[test]
fn matrix_file_feeds_spectral() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = dir.path().join("m.json");
    let m = matrix.to_str().unwrap();
    assert!(run(&["ulam-matrix", "--map", "moebius-ten-branch", "--bins", "50", "--out", m]).status.success());
    let out = run(&["--json", "spectral", "--matrix", m, "--r", "24/25", "--delta", "1/26", "--alpha0", "1/9", "--b0", "2/9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("\"result\""));
}

#[test]
fn certify_exit_status_follows_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let map = thirty_branch(dir.path());
    let out = run(&certify_args(&map, "1/5"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("certified"));

    let mut args = certify_args(&map, "1/5");
    args.extend(["--max-bins", "100", "--max-outer", "1"]);
    assert_eq!(run(&args).status.code(), Some(1));
}

fn strip_timings(v: &mut serde_json::Value) {
    v["manifest"].as_object_mut().unwrap().remove("timings");
    v["manifest"].as_object_mut().unwrap().remove("cache");
}

#[test]
fn reports_are_deterministic_across_runs_and_cache_state() {
    let dir = tempfile::tempdir().unwrap();
    let map = thirty_branch(dir.path());
    let cache = dir.path().join("cache");
    let cache = cache.to_str().unwrap();
    let mut reports = Vec::new();
    for (i, use_cache) in [true, true, false].into_iter().enumerate() {
        let path = dir.path().join(format!("r{i}.json"));
        let mut cmd = bin();
        if use_cache {
            cmd.args(["--cache-dir", cache]);
        }
        let mut args = certify_args(&map, "1/5");
        args.extend(["--out", path.to_str().unwrap()]);
        assert!(cmd.args(&args).status().unwrap().success());
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        reports.push(v.clone());
        strip_timings(&mut v);
        reports.push(v);
    }
    assert_eq!(reports[1], reports[3]);
    assert_eq!(reports[1], reports[5]);
    assert!(reports[2]["manifest"]["cache"]["spectral_hits"].as_u64().unwrap() > 0);
    assert_eq!(reports[2]["manifest"]["cache"]["spectral_misses"], 0);
}

#[test]
fn second_radius_reuses_cached_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let map = thirty_branch(dir.path());
    let cache = dir.path().join("cache");
    let cache = cache.to_str().unwrap();
    let mut first = vec!["--cache-dir", cache];
    first.extend(certify_from(&map, "1/5", "2000"));
    assert!(run(&first).status.success());
    let mut second = vec!["--json", "--cache-dir", cache];
    second.extend(certify_from(&map, "1/6", "2000"));
    let out = run(&second);
    assert!(out.status.success());
    let v = json(&out);
    let stats = &v["manifest"]["cache"];
    assert!(stats["spectral_hits"].as_u64().unwrap() > 0, "{stats}");
    assert_eq!(stats["spectral_misses"], 0);
    assert_eq!(stats["power_norm_computations"], 0);
}

#[test]
fn cache_commands() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let cache = cache.to_str().unwrap();
    let out = run(&["--cache-dir", cache, "cache", "list"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("cache is empty"));
    assert_eq!(run(&["--cache-dir", cache, "cache", "inspect", "missing"]).status.code(), Some(1));

    let map = thirty_branch(dir.path());
    let mut args = vec!["--cache-dir", cache];
    args.extend(certify_args(&map, "1/5"));
    assert!(run(&args).status.success());
    let listing = stdout(&run(&["--cache-dir", cache, "cache", "list"]));
    assert!(!listing.contains("cache is empty"), "{listing}");
    let name = listing.lines().next().unwrap().split_whitespace().last().unwrap().to_string();
    assert!(run(&["--cache-dir", cache, "cache", "inspect", &name]).status.success(), "{listing}");

    assert!(run(&["--cache-dir", cache, "cache", "purge"]).status.success());
    assert!(stdout(&run(&["--cache-dir", cache, "cache", "list"])).contains("cache is empty"));
    assert_eq!(run(&["cache", "purge"]).status.code(), Some(1));
}

#[test]
fn hole_asymptotics_at_a_fixed_point() {
    let out = run(&["--json", "hole-asymptotics", "--map", "doubling", "--point", "0", "--widths", "1/8,1/16,1/32", "--bins-per-hole", "8"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("\"result\""));
}
