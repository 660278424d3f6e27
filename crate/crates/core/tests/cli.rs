use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_supermux"))
}

#[test]
fn allocate_emits_json_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.txt");
    std::fs::write(&stats, "4.0 1.0 0.5\n2.0 3.0 0.2\n").unwrap();
    let out = dir.path().join("alloc.json");
    for scheme in ["alg1", "alg2", "uo", "mo", "om"] {
        let status = bin()
            .args(["allocate", "--config"])
            .arg(&stats)
            .args([
                "--scheme",
                scheme,
                "--shape",
                "2x2",
                "--samples",
                "2000",
                "--power",
                "2",
                "--out",
            ])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success(), "{scheme}");
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let p: f64 = v["allocation"]["p_total"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .sum();
        assert!((p - 2.0).abs() < 2e-6);
        assert!(v["rates"]["sum_rate"].as_f64().unwrap() > 0.0);
        assert_eq!(v["violations"].as_array().unwrap().len(), 0);
    }
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.txt");
    std::fs::write(&stats, "1.0 -2.0\n").unwrap();
    let out = bin().args(["allocate", "--config"]).arg(&stats).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = bin()
        .args(["allocate", "--config", "/nonexistent/stats.txt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["allocate", "--scheme", "nope"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn simulate_then_report_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "user_counts = [3]\nn_drops = 7\nn_samples = 1000\nshapes = [\"2x2\"]\noutput = \"res\"\n",
    )
    .unwrap();
    let st = bin().args(["simulate", "--config"]).arg(&cfg).status().unwrap();
    assert!(st.success());
    assert!(dir.path().join("res/cdf.csv").exists());
    let report = dir.path().join("report.txt");
    let st = bin()
        .args(["report", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&report)
        .status()
        .unwrap();
    assert!(st.success());
    assert!(std::fs::read_to_string(&report).unwrap().contains("alg1"));
    // a different seed no longer matches the manifest
    let st = bin()
        .args(["report", "--seed", "99", "--config"])
        .arg(&cfg)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(2));
    // unsorted CDF samples are flagged
    let cdf = dir.path().join("res/cdf.csv");
    let text = std::fs::read_to_string(&cdf).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(1, 3);
    std::fs::write(&cdf, lines.join("\n") + "\n").unwrap();
    let st = bin().args(["report", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn oracle_dof_and_fit_alpha_run() {
    let dir = tempfile::tempdir().unwrap();
    let ocfg = dir.path().join("oracle.toml");
    std::fs::write(
        &ocfg,
        "snr = [[4.0, 1.0]]\nshape = \"1x1\"\nmu = 2.0\npower = 10.0\nresolution = 8\nn_samples = 2000\n",
    )
    .unwrap();
    let out = bin().args(["oracle", "--config"]).arg(&ocfg).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["best_wsr"].as_f64().unwrap() > 0.0);

    let dcfg = dir.path().join("dof.toml");
    std::fs::write(&dcfg, "schemes = [\"uo\"]\nsuperposition = []\nn_samples = 500\n").unwrap();
    let st = bin()
        .args(["dof", "--config"])
        .arg(&dcfg)
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(dir.path().join("dof.csv")).unwrap();
    assert!(csv.starts_with("scheme,shape,slope\nuo,2x2,"));

    let fcfg = dir.path().join("fit.toml");
    std::fs::write(&fcfg, "shapes = [\"2x2\"]\nn_samples = 2000\n").unwrap();
    let table = dir.path().join("alpha.tbl");
    let st = bin()
        .args(["fit-alpha", "--config"])
        .arg(&fcfg)
        .arg("--out")
        .arg(&table)
        .status()
        .unwrap();
    assert!(st.success());
    let t = supermux::SurrogateTable::load(&table).unwrap();
    let alpha = t.get(supermux::MimoShape::new(2, 2).unwrap()).unwrap().alpha;
    assert!((alpha / 1.402 - 1.0).abs() < 0.05, "{alpha}");
}
