use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cutin-rare"))
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("spawn binary")
}

fn ok(args: &[&str], out: &Path) {
    let o = run(args, out);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

fn csv_rows(p: PathBuf) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(p).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn synth_writes_requested_rows_deterministically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["synth", "--n", "1000", "--seed", "3"], a.path());
    ok(&["synth", "--n", "1000", "--seed", "3"], b.path());
    let ta = std::fs::read(a.path().join("observations.csv")).unwrap();
    assert_eq!(ta, std::fs::read(b.path().join("observations.csv")).unwrap());
    let rows = csv_rows(a.path().join("observations.csv"));
    assert_eq!(rows.len(), 1000);
    for r in rows {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert!(v.iter().all(|&x| x >= 0.0), "{r:?}");
    }
    assert_eq!(read_json(a.path().join("synth.json"))["result"]["rows"], 1000);
}

#[test]
fn cmc_without_reachable_event_is_zero() {
    let d = tempfile::tempdir().unwrap();
    ok(&["estimate", "--method", "cmc", "--n", "2000", "--set", "scene.rare_event.stopped_speed=1000"], d.path());
    let e = read_json(d.path().join("estimate.json"));
    assert_eq!(e["result"]["estimate"]["p_hat"].as_f64(), Some(0.0));
    assert_eq!(e["result"]["estimate"]["event_count"].as_u64(), Some(0));
}

#[test]
fn sa_on_rigged_scene_finds_b1() {
    let d = tempfile::tempdir().unwrap();
    ok(&["optimize", "--kind", "sa", "--preset", "rigged", "--seed", "1"], d.path());
    let r = read_json(d.path().join("optimize_sa.json"));
    assert_eq!(r["result"]["best_bid"], "B1");
    let evals = r["result"]["state"]["evaluations"].as_u64().unwrap() as usize;
    assert_eq!(csv_rows(d.path().join("sa_trace.csv")).len(), evals);

    let e = tempfile::tempdir().unwrap();
    let art = d.path().join("optimize_sa.json");
    ok(&["estimate", "--method", "is-br", "--preset", "rigged", "--n", "2000", "--proposal", art.to_str().unwrap()], e.path());
    let est = read_json(e.path().join("estimate.json"));
    assert_eq!(est["result"]["proposal"]["kind"], "bounded_rational");
}

#[test]
fn ce_with_zero_iterations_returns_initial_parameters() {
    let d = tempfile::tempdir().unwrap();
    ok(&["optimize", "--kind", "ce", "--set", "ce.max_iters=0"], d.path());
    let r = read_json(d.path().join("optimize_ce.json"));
    assert_eq!(r["result"]["initial"], r["result"]["params"]);
    assert_eq!(r["result"]["trace"].as_array().unwrap().len(), 0);
}

#[test]
fn fit_qq_generate_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(&["synth", "--n", "3000", "--seed", "11"], p);
    let data = p.join("observations.csv");
    ok(&["fit", "--data", data.to_str().unwrap(), "--seed", "11"], p);
    let fit = p.join("fit.json");
    ok(&["qq", "--data", data.to_str().unwrap(), "--fit", fit.to_str().unwrap(), "--points", "50"], p);
    let qq = read_json(p.join("qq.json"));
    let bands = qq["result"]["bands"].as_array().unwrap();
    assert_eq!(bands.len(), 6);
    for b in bands {
        assert!(b["pearson_r"].as_f64().unwrap() >= 0.99, "{b}");
        let rows = csv_rows(p.join(b["file"].as_str().unwrap()));
        assert_eq!(rows.len(), 50);
        for col in 0..3 {
            let v: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
            assert!(v.windows(2).all(|w| w[1] >= w[0]), "column {col} of {b}");
        }
    }

    let all = tempfile::tempdir().unwrap();
    let close = tempfile::tempdir().unwrap();
    ok(&["generate", "--fit", fit.to_str().unwrap(), "--n", "2000"], all.path());
    ok(&["generate", "--fit", fit.to_str().unwrap(), "--n", "2000", "--filter", "B1,B2"], close.path());
    let median_gap = |dir: &Path| {
        let mut g: Vec<f64> = csv_rows(dir.join("situations.csv")).iter().map(|r| r[2].parse().unwrap()).collect();
        g.sort_by(f64::total_cmp);
        g[g.len() / 2]
    };
    assert!(median_gap(close.path()) < median_gap(all.path()));
}

#[test]
fn malformed_csv_exits_3_with_line_number() {
    let d = tempfile::tempdir().unwrap();
    let bad = d.path().join("bad.csv");
    std::fs::write(&bad, "v_s,v_lc,gap,ttc\n10,12,5,inf\nabc,12,5,inf\n").unwrap();
    let o = run(&["fit", "--data", bad.to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn infeasible_trajectory_exits_4() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["trajectory-dump", "--v-s", "0", "--v-lc", "40", "--gap", "0"], d.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_config_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["config", "--set", "sa.no_such_field=1"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["config", "--set", "sa.cooling_factor=1.5"], d.path());
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["config", "--preset", "nope"], d.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(!d.path().join("config.json").exists());
}

#[test]
fn lambda_flag_takes_three_values() {
    let d = tempfile::tempdir().unwrap();
    ok(&["estimate", "--method", "is-br", "--lambda", "-50,-50,-50", "--n", "500"], d.path());
    let e = read_json(d.path().join("estimate.json"));
    assert_eq!(e["result"]["proposal"]["lambda"][0]["lambda"].as_f64(), Some(-50.0), "{e}");
    let o = run(&["estimate", "--method", "is-br", "--lambda", "1,2", "--n", "500"], d.path());
    assert_eq!(o.status.code(), Some(2));
}
