mod common;

use common::*;
use nalgebra::DMatrix;
use std::path::Path;

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn identical_checkpoints_give_zero_drift_and_angles() {
    let dir = tempfile::tempdir().unwrap();
    let a = synthetic(&dir.path().join("a.safetensors"), 2, 1);
    let out = dir.path().join("diff");
    ok(&["svd-diff", "--a", s(&a), "--b", s(&a), "--out", s(&out)]);
    let r = json(&out.join("svd_diff.json"));
    assert_eq!(r["result"]["overall"]["max_abs_delta"], 0.0);
    assert_eq!(r["result"]["overall"]["matrices"], 8);
    assert!(r.get("generated_at").is_none());
    let rows = csv_rows(&out.join("delta_sigma.csv"));
    assert_eq!(rows.len(), 2 * (8 + 4 + 4 + 8));
    assert!(rows.iter().all(|r| r["delta"] == "0"));

    let out = dir.path().join("angles");
    ok(&["angles", "--a", s(&a), "--b", s(&a), "--out", s(&out)]);
    let files: Vec<_> = std::fs::read_dir(out.join("angles")).unwrap().collect();
    assert_eq!(files.len(), 16);
    for f in files {
        for row in csv_rows(&f.unwrap().path()) {
            let deg: f64 = row["angle_deg"].parse().unwrap();
            assert!(deg < 1e-6, "{deg}");
        }
    }
}

#[test]
fn skew_rotation_moves_angles_not_values() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = rng(3);
    let a = with_spectrum(&mut g, 6, 10, &[6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
    let q = (skew(&mut g, 10) * 0.1).exp();
    let b = &a * &q;
    let name = layer_name(0, "self_attn.q_proj");
    let pa = write_matrices(
        &dir.path().join("a.safetensors"),
        &[(name.clone(), a.clone())],
    );
    let pb = write_matrices(&dir.path().join("b.safetensors"), &[(name, b.clone())]);

    let out = dir.path().join("diff");
    ok(&["svd-diff", "--a", s(&pa), "--b", s(&pb), "--out", s(&out)]);
    let max_delta = json(&out.join("svd_diff.json"))["result"]["overall"]["max_abs_delta"]
        .as_f64()
        .unwrap();
    assert!(max_delta < 1e-3, "{max_delta}");

    let out = dir.path().join("angles");
    ok(&["angles", "--a", s(&pa), "--b", s(&pb), "--out", s(&out)]);
    let m = &json(&out.join("angles.json"))["result"]["matrices"][0];
    let right_max = m["right"]["max_deg"].as_f64().unwrap();
    assert!(right_max > 1.0);
    assert!(m["left"]["max_deg"].as_f64().unwrap() < 1e-6);

    let oracle = cosines(&row_basis(&a), &row_basis(&b));
    let oracle_max = oracle.last().unwrap().acos().to_degrees();
    assert!(
        (right_max - oracle_max).abs() < 1e-6,
        "{right_max} vs {oracle_max}"
    );
}

#[test]
fn single_rotated_direction_gives_injected_angle() {
    let dir = tempfile::tempdir().unwrap();
    let theta = 20f64.to_radians();
    let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 3.0, 2.0, 1.0]));
    let mut r = DMatrix::<f64>::identity(4, 4);
    let (sn, cs) = theta.sin_cos();
    r[(0, 0)] = cs;
    r[(0, 1)] = -sn;
    r[(1, 0)] = sn;
    r[(1, 1)] = cs;
    let name = layer_name(0, "self_attn.k_proj");
    let pa = write_matrices(
        &dir.path().join("a.safetensors"),
        &[(name.clone(), a.clone())],
    );
    let pb = write_matrices(&dir.path().join("b.safetensors"), &[(name, &r * &a)]);
    let out = dir.path().join("angles");
    ok(&[
        "angles",
        "--a",
        s(&pa),
        "--b",
        s(&pb),
        "--rank",
        "1",
        "--out",
        s(&out),
    ]);
    let left = csv_rows(&out.join("angles/layer0.k.left.csv"));
    assert_eq!(left.len(), 1);
    let got: f64 = left[0]["angle_rad"].parse().unwrap();
    assert!((got - theta).abs() < 1e-10, "{got}");
    let right = csv_rows(&out.join("angles/layer0.k.right.csv"));
    assert!(right[0]["angle_rad"].parse::<f64>().unwrap() < 1e-12);
}

#[test]
fn plot_data_has_one_series_per_layer() {
    let dir = tempfile::tempdir().unwrap();
    let a = synthetic(&dir.path().join("a.safetensors"), 3, 1);
    let b = synthetic(&dir.path().join("b.safetensors"), 3, 2);
    let out = dir.path().join("o");
    ok(&[
        "svd-diff",
        "--a",
        s(&a),
        "--b",
        s(&b),
        "--kinds",
        "q,k",
        "--emit-plot-data",
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("plot/delta_sigma_q.csv"));
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0].len(), 4);
    assert!(out.join("plot/delta_sigma_k.csv").exists());
    assert!(!out.join("plot/delta_sigma_v.csv").exists());

    let out = dir.path().join("p");
    ok(&[
        "angles",
        "--a",
        s(&a),
        "--b",
        s(&b),
        "--layers",
        "first:2",
        "--emit-plot-data",
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("plot/angles_right_mlp_up.csv"));
    assert_eq!(rows.len(), 8);
    assert!(rows[0].contains_key("layer1") && !rows[0].contains_key("layer2"));
}

fn write_manifest(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn restore_sweep_writes_one_checkpoint_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(&dir.path().join("base.safetensors"), 12, 1);
    synthetic(&dir.path().join("sft.safetensors"), 12, 2);
    let m = write_manifest(
        dir.path(),
        "sweep.toml",
        r#"
command = "restore"
output_dir = "runs/restore"
seed = 7

[inputs]
mode = "values"
donor = "base.safetensors"
host = "sft.safetensors"

[sweep]
layers = ["first:5", "first:10"]
ranks = ["top:64", "top:256"]
"#,
    );
    ok(&["run", "--manifest", &m]);
    let root = dir.path().join("runs/restore");
    let mut dirs: Vec<String> = std::fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    dirs.sort();
    assert_eq!(
        dirs,
        [
            "layers-first_10__ranks-top_256",
            "layers-first_10__ranks-top_64",
            "layers-first_5__ranks-top_256",
            "layers-first_5__ranks-top_64",
        ]
    );
    for d in &dirs {
        let p = root.join(d);
        assert!(p.join("model.safetensors").is_file());
        assert!(p.join("restore_report.json").is_file());
        let rows = csv_rows(&p.join("restore.csv"));
        let expect = if d.contains("first_10") { 40 } else { 20 };
        assert_eq!(rows.len(), expect);
    }
    let index = json(&root.join("run.json"));
    assert_eq!(index["result"]["grid"].as_array().unwrap().len(), 4);
}

#[test]
fn invalid_grid_point_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(&dir.path().join("a.safetensors"), 2, 1);
    synthetic(&dir.path().join("b.safetensors"), 2, 2);
    let m = write_manifest(
        dir.path(),
        "bad.toml",
        r#"
command = "restore"
output_dir = "out"
[inputs]
mode = "values"
donor = "a.safetensors"
host = "b.safetensors"
[sweep]
layers = ["first:1", "bogus:3"]
"#,
    );
    let o = run(&["run", "--manifest", &m]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let a = synthetic(&dir.path().join("a.safetensors"), 1, 1);
    let out = dir.path().join("o");

    let missing = dir.path().join("missing.safetensors");
    assert_eq!(
        code(&run(&[
            "svd-diff",
            "--a",
            s(&missing),
            "--b",
            s(&a),
            "--out",
            s(&out)
        ])),
        4
    );

    let mut bad = DMatrix::<f64>::identity(4, 4);
    bad[(1, 2)] = f64::NAN;
    let nan = write_matrices(
        &dir.path().join("nan.safetensors"),
        &[(layer_name(0, "self_attn.q_proj"), bad)],
    );
    let o = run(&["svd-diff", "--a", s(&nan), "--b", s(&nan), "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let b = synthetic(&dir.path().join("b.safetensors"), 2, 1);
    let o = run(&["angles", "--a", s(&b), "--b", s(&a), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert_eq!(
        code(&run(&[
            "penalty",
            "--ref",
            s(&a),
            "--current",
            s(&a),
            "--rank",
            "0",
            "--out",
            s(&out)
        ])),
        2
    );
    assert_eq!(
        code(&run(&[
            "restore",
            "--mode",
            "values",
            "--align",
            "procrustes",
            "--donor",
            s(&a),
            "--host",
            s(&a),
            "--out",
            s(&out)
        ])),
        2
    );
    assert_eq!(code(&run(&["svd-diff", "--a", s(&a)])), 2);
    assert!(!out.exists());
}

#[test]
fn bimodal_fixture_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("adv");
    ok(&[
        "adv-stats",
        "--input",
        &fixture("bimodal.jsonl"),
        "--emit-plot-data",
        "--out",
        s(&out),
    ]);
    let r = json(&out.join("adv_stats.json"));
    let summary = &r["result"]["summary"];
    assert_eq!(summary["n"], 2000);
    assert!(summary["silverman_p"].as_f64().unwrap() < 0.05);
    assert_eq!(r["result"]["source"]["kind"], "advantages");
    assert_eq!(r["result"]["source"]["level"], "step");
    assert_eq!(
        r["result"]["verdict"]["reasons"].as_array().unwrap().len(),
        3
    );

    let rows = csv_rows(&out.join("histogram.csv"));
    assert_eq!(rows.len() as u64, summary["bins"].as_u64().unwrap());
    let total: u64 = rows
        .iter()
        .map(|r| r["count"].parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, 2000);
    assert!(out.join("plot/advantage_density.csv").is_file());
}

#[test]
fn traces_are_turned_into_gae_samples() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("traces.jsonl");
    let mut text = String::new();
    let mut g = rng(9);
    use rand::Rng;
    for tr in 0..30 {
        for t in 0..10 {
            let r: f64 = g.random_range(-1.0..1.0);
            let v: f64 = g.random_range(-1.0..1.0);
            text.push_str(&format!(
                "{{\"trace_id\": {tr}, \"t\": {t}, \"reward\": {r}, \"value\": {v}}}\n"
            ));
        }
    }
    std::fs::write(&input, text).unwrap();
    let out = dir.path().join("o");
    ok(&[
        "adv-stats",
        "--input",
        s(&input),
        "--gamma",
        "0.9",
        "--lambda",
        "0.8",
        "--level",
        "token",
        "--bootstrap",
        "100",
        "--out",
        s(&out),
    ]);
    let r = json(&out.join("adv_stats.json"));
    assert_eq!(r["result"]["source"]["kind"], "gae");
    assert_eq!(r["result"]["source"]["traces"], 30);
    assert_eq!(r["result"]["source"]["gamma"], 0.9);
    assert_eq!(r["result"]["source"]["level"], "token");
    assert_eq!(r["result"]["summary"]["n"], 300);
}

#[test]
fn too_few_samples_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("few.jsonl");
    std::fs::write(&input, "{\"advantage\": 1.0}\n{\"advantage\": 2.0}\n").unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        code(&run(&["adv-stats", "--input", s(&input), "--out", s(&out)])),
        2
    );
    assert!(!out.exists());
}

#[test]
fn full_rank_penalty_table_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = synthetic(&dir.path().join("a.safetensors"), 3, 1);
    let b = synthetic(&dir.path().join("b.safetensors"), 3, 2);
    let out = dir.path().join("p");
    ok(&[
        "penalty",
        "--ref",
        s(&a),
        "--current",
        s(&b),
        "--rank",
        "512",
        "--kinds",
        "q",
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("penalty.csv"));
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert_eq!(r["rank"], "8");
        let rel: f64 = r["relative_penalty"].parse().unwrap();
        assert!(rel < 1e-26, "{rel}");
    }

    // Partial rank on a rotated checkpoint: positive penalty, per-kind aggregates.
    let out = dir.path().join("q");
    ok(&[
        "penalty",
        "--ref",
        s(&a),
        "--current",
        s(&b),
        "--rank",
        "2",
        "--out",
        s(&out),
    ]);
    let r = json(&out.join("penalty.json"));
    let kinds = r["result"]["per_kind"].as_object().unwrap();
    assert_eq!(kinds.len(), 4);
    assert!(r["result"]["overall"]["total"].as_f64().unwrap() > 1.0);
    assert_eq!(r["result"]["overall"]["matrices"], 12);
}

#[test]
fn values_restore_takes_donor_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let host = synthetic(&dir.path().join("h.safetensors"), 2, 2);
    // Scale the donor so the spliced spectrum is distinguishable from the host's.
    let scaled: Vec<(String, DMatrix<f64>)> = synthetic_matrices(2, 1)
        .into_iter()
        .map(|(n, w)| (n, w * 1.5))
        .collect();
    let donor2 = write_matrices(&dir.path().join("d2.safetensors"), &scaled);
    let out = dir.path().join("r");
    ok(&[
        "restore",
        "--mode",
        "values",
        "--donor",
        s(&donor2),
        "--host",
        s(&host),
        "--ranks",
        "top:2",
        "--out",
        s(&out),
    ]);
    let rows = csv_rows(&out.join("restore.csv"));
    assert_eq!(rows.len(), 8);
    assert!(rows
        .iter()
        .all(|r| r["rank_end"] == "2" && r["degenerate_boundary"] == "false"));
    let o = out.join("model.safetensors");
    let d = dir.path().join("d");
    ok(&["svd-diff", "--a", s(&host), "--b", s(&o), "--out", s(&d)]);
    for row in csv_rows(&d.join("delta_sigma.csv")) {
        let i: usize = row["index"].parse().unwrap();
        let delta: f64 = row["delta"].parse().unwrap();
        let sa: f64 = row["sigma_a"].parse().unwrap();
        let expect = if i < 2 { 0.5 * sa } else { 0.0 };
        assert!((delta - expect).abs() < 1e-10, "{row:?}");
    }
}

#[test]
fn stamp_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let a = synthetic(&dir.path().join("a.safetensors"), 1, 1);
    let out = dir.path().join("o");
    ok(&[
        "svd-diff",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--stamp",
        "--out",
        s(&out),
    ]);
    let r = json(&out.join("svd_diff.json"));
    assert!(r["generated_at"].as_str().unwrap().starts_with("unix:"));
}

#[test]
fn manifest_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    synthetic(&dir.path().join("a.safetensors"), 3, 1);
    synthetic(&dir.path().join("b.safetensors"), 3, 2);
    let manifests = [
        "command = \"svd-diff\"\noutput_dir = \"o/svd\"\n[inputs]\na = \"a.safetensors\"\nb = \"b.safetensors\"\nemit_plot_data = true\n",
        "command = \"angles\"\noutput_dir = \"o/angles\"\n[inputs]\na = \"a.safetensors\"\nb = \"b.safetensors\"\nemit_plot_data = true\n[sweep]\nranks = [\"top:2\", \"4\"]\n",
        "command = \"restore\"\noutput_dir = \"o/restore\"\n[inputs]\nmode = \"vectors\"\nalign = \"procrustes\"\ndonor = \"a.safetensors\"\nhost = \"b.safetensors\"\n[sweep]\nlayers = [\"first:1\", \"last:2\"]\nranks = [\"bottom:3\"]\n",
        "command = \"penalty\"\noutput_dir = \"o/penalty\"\n[inputs]\nref = \"a.safetensors\"\ncurrent = \"b.safetensors\"\nrank = 3\n",
        "command = \"adv-stats\"\noutput_dir = \"o/adv\"\nseed = 11\n[inputs]\ninput = \"FIXTURE\"\nbootstrap = 200\nemit_plot_data = true\n",
    ];
    for (i, text) in manifests.iter().enumerate() {
        let text = text.replace("FIXTURE", &fixture("bimodal.jsonl"));
        let m = write_manifest(dir.path(), &format!("m{i}.toml"), &text);
        ok(&["run", "--manifest", &m]);
    }
    let first = snapshot(&dir.path().join("o"));
    assert!(first.len() > 20);
    std::fs::remove_dir_all(dir.path().join("o")).unwrap();
    for i in 0..manifests.len() {
        ok(&[
            "run",
            "--manifest",
            dir.path().join(format!("m{i}.toml")).to_str().unwrap(),
        ]);
    }
    let second = snapshot(&dir.path().join("o"));
    assert_eq!(
        first.keys().collect::<Vec<_>>(),
        second.keys().collect::<Vec<_>>()
    );
    for (k, v) in &first {
        assert!(v == &second[k], "{} differs between runs", k.display());
    }
}
