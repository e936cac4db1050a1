use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const CONFIG: &str = r#"{
  "partition": [[1,2,3],[4,5,6]],
  "clusters": [
    {"generator": {"family": "clayton", "theta": 1.5}, "stdf": {"family": "logistic", "vartheta": 1.25}},
    {"generator": {"family": "joe", "theta": 2.0}, "stdf": {"family": "logistic", "vartheta": 1.5}}
  ],
  "radial": {"type": "gaussian", "rho": 0.5},
  "seed": 1
}"#;

struct Scratch(PathBuf);

impl Scratch {
    fn new(name: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("archimax-cli-{name}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join("model.json"), CONFIG).unwrap();
        Self(dir)
    }

    fn path(&self, f: &str) -> PathBuf {
        self.0.join(f)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_archimax")).current_dir(&self.0).args(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }

    fn json(&self, f: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.path(f)).unwrap()).unwrap()
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn sha256_hex(p: &Path) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(std::fs::read(p).unwrap()))
}

#[test]
fn simulate_writes_data_and_manifest() {
    let s = Scratch::new("simulate");
    s.ok(&["simulate", "--config", "model.json", "--n", "50", "--out", "u.csv"]);
    let text = std::fs::read_to_string(s.path("u.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "u1,u2,u3,u4,u5,u6");
    assert_eq!(text.lines().count(), 51);
    let m = s.json("u.csv.manifest.json");
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["seed"], 1);
    assert_eq!(m["outputs"][0]["sha256"], sha256_hex(&s.path("u.csv")));
    assert_eq!(m["inputs"][0]["sha256"], sha256_hex(&s.path("model.json")));
    assert_eq!(m["config"]["radial"]["rho"], 0.5);

    s.ok(&["simulate", "--config", "model.json", "--n", "50", "--seed", "2", "--out", "v.csv"]);
    assert_ne!(std::fs::read(s.path("u.csv")).unwrap(), std::fs::read(s.path("v.csv")).unwrap());
}

#[test]
fn invalid_configuration_exits_with_2() {
    let s = Scratch::new("invalid");
    std::fs::write(s.path("bad.json"), CONFIG.replace("[[1,2,3],[4,5,6]]", "[[1,2,3,4,5],[6]]")).unwrap();
    let o = s.run(&["simulate", "--config", "bad.json", "--n", "10", "--out", "x.csv"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("singleton_cluster") && err.contains("/partition/1"), "{err}");
    assert!(!s.path("x.csv").exists());
}

#[test]
fn boundary_cluster_exits_with_4() {
    let s = Scratch::new("capability");
    std::fs::write(s.path("joe1.json"), CONFIG.replace(r#""theta": 2.0"#, r#""theta": 1.0"#)).unwrap();
    let o = s.run(&["eval-stdf", "--config", "joe1.json", "--x", "1,1,1,1,1,1", "--n-mc", "1000", "--out", "e.json"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_stdf_reports_closed_form_when_radial_is_not_gumbel() {
    let s = Scratch::new("stdf");
    s.ok(&["eval-stdf", "--config", "model.json", "--x", "1,1,0,0,0,0", "--n-mc", "2000", "--out", "e.json"]);
    let e = s.json("e.json");
    let want = 2f64.powf(0.8);
    assert!((e["closed_form"].as_f64().unwrap() - want).abs() < 1e-12);
    assert!((e["estimate"].as_f64().unwrap() - want).abs() < 1e-9);
    assert_eq!(e["classification"]["entries"][1]["class"], "d1");
}

#[test]
fn tailcoeff_uses_one_based_pairs() {
    let s = Scratch::new("tail");
    s.ok(&["tailcoeff", "--config", "model.json", "--pairs", "4-6,1-4", "--n-mc", "2000", "--out", "t.json"]);
    let t = s.json("t.json");
    assert_eq!(t["pairs"][0]["i"], 4);
    assert_eq!(t["pairs"][0]["j"], 6);
    assert!((t["pairs"][0]["lambda"].as_f64().unwrap() - (2.0 - 2f64.powf(1.0 / 3.0))).abs() < 1e-12);
    assert_eq!(t["pairs"][1]["lambda"], 0.0);
    let bad = s.run(&["tailcoeff", "--config", "model.json", "--pairs", "0-2", "--out", "u.json"]);
    assert_eq!(code(&bad), 2);
}

#[test]
fn fit_and_test_round_trip_through_files() {
    let s = Scratch::new("fit");
    s.ok(&["simulate", "--config", "model.json", "--n", "300", "--out", "u.csv"]);
    s.ok(&["fit", "theta", "--data", "u.csv", "--config", "model.json", "--out", "f.json"]);
    let f = s.json("f.json");
    let pairs = f["theta"]["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 6);
    assert_eq!((pairs[0]["cluster"].as_u64(), pairs[0]["i"].as_u64(), pairs[0]["j"].as_u64()), (Some(1), Some(1), Some(2)));
    assert_eq!(pairs[5]["cluster"], 2);
    // the shared estimator gives every pair of a cluster the same ϑ
    assert_eq!(pairs[0]["vartheta"], pairs[2]["vartheta"]);

    s.ok(&["fit", "pickands", "--data", "u.csv", "--config", "model.json", "--grid-step", "4", "--out", "p.json"]);
    let p = s.json("p.json");
    assert_eq!(p["pickands"]["clusters"][0]["grid"].as_array().unwrap().len(), 15);
    assert_eq!(p["pickands"]["lambda"][0][3], Value::Null);
    assert_eq!(p["pickands"]["lambda"][0][0], 1.0);

    s.ok(&["test", "--data", "u.csv", "--config", "model.json", "--n-mc", "5000", "--norm", "sup", "--out", "h.json"]);
    let h = s.json("h.json");
    let pv = h["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pv));
    assert_eq!(h["p_value"], h["p_sup"]);
    assert_eq!(h["sigma"].as_array().unwrap().len(), 6);

    let o = s.run(&["fit", "theta", "--data", "u.csv", "--config", "wrong-dim.json", "--out", "g.json"]);
    assert_ne!(code(&o), 0);
}

#[test]
fn radial_fit_writes_the_correlation_matrix() {
    let s = Scratch::new("radial");
    s.ok(&["simulate", "--config", "model.json", "--n", "200", "--out", "u.csv"]);
    s.ok(&["fit", "radial", "--data", "u.csv", "--config", "model.json", "--nodes", "16", "--out", "r.json"]);
    let r = s.json("r.json");
    assert_eq!(r["radial"]["theta_source"], "config");
    assert_eq!(r["radial"]["pairs"].as_array().unwrap().len(), 9);
    let csv = std::fs::read_to_string(s.path("r.rho.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "v1,v2,v3,v4,v5,v6");
    assert!(rows[1].starts_with("1,NaN,NaN,"));
    let m = s.json("r.json.manifest.json");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn chi_accepts_lists_and_grids() {
    let s = Scratch::new("chi");
    s.ok(&["simulate", "--config", "model.json", "--n", "500", "--out", "u.csv"]);
    s.ok(&["chi", "--data", "u.csv", "--pairs", "1-2", "--q-grid", "0.5:0.9:5", "--out", "c.csv"]);
    let c = std::fs::read_to_string(s.path("c.csv")).unwrap();
    assert_eq!(c.lines().count(), 6);
    assert!(c.lines().nth(1).unwrap().starts_with("1-2,0.5,"));
    s.ok(&["chi", "--data", "u.csv", "--pairs", "1-2,1-4", "--q", "0.9", "--copula-scale", "--out", "d.csv"]);
    assert_eq!(std::fs::read_to_string(s.path("d.csv")).unwrap().lines().count(), 3);
    let o = s.run(&["chi", "--data", "u.csv", "--pairs", "1-2", "--q", "1.5", "--out", "e.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn preprocess_takes_block_maxima() {
    let s = Scratch::new("pre");
    std::fs::write(
        s.path("raw.csv"),
        "date,a,b\n2001-09-01,1,2\n2001-09-15,3,1\n2001-10-02,2,NA\n2001-12-01,9,9\n2002-09-03,4,5\n2002-10-01,0.5,7\n",
    )
    .unwrap();
    s.ok(&["preprocess", "--data", "raw.csv", "--months", "sep,oct", "--block", "year", "--out", "y.csv"]);
    assert_eq!(std::fs::read_to_string(s.path("y.csv")).unwrap(), "block,a,b\n2001,3,2\n2002,4,7\n");
    let m = s.json("y.csv.manifest.json");
    assert_eq!(m["summary"]["blocks"], 2);

    // the block column is skipped when the result is read back
    s.ok(&["chi", "--data", "y.csv", "--pairs", "1-2", "--q", "0.5", "--out", "c.csv"]);
    let o = s.run(&["preprocess", "--data", "raw.csv", "--months", "sep,foo", "--out", "z.csv"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn replay_detects_changes() {
    let s = Scratch::new("replay");
    s.ok(&["simulate", "--config", "model.json", "--n", "40", "--out", "u.csv"]);
    let o = s.run(&["replay", "u.csv.manifest.json", "--out-dir", "again"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read(s.path("u.csv")).unwrap(), std::fs::read(s.path("again/u.csv")).unwrap());

    // recorded output digest tampered with: numerical mismatch
    let manifest = std::fs::read_to_string(s.path("u.csv.manifest.json")).unwrap();
    let digest = sha256_hex(&s.path("u.csv"));
    std::fs::write(s.path("forged.json"), manifest.replace(&digest, &"0".repeat(64))).unwrap();
    assert_eq!(code(&s.run(&["replay", "forged.json", "--out-dir", "again2"])), 3);

    // input changed since the run
    std::fs::write(s.path("model.json"), CONFIG.replace("1.25", "1.3")).unwrap();
    assert_eq!(code(&s.run(&["replay", "u.csv.manifest.json", "--out-dir", "again3"])), 2);
}
