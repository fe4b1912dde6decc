use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defect-fcs")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn analytic_table_on_stdout() {
    let o = cli(&["analytic", "--k-max", "3", "--seedless"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eta,k,prob");
    assert_eq!(lines.len(), 1 + 3 * 4);
    assert!(lines[1].starts_with("1,0,0.866025403784438"));
    assert!(lines.iter().any(|l| l.starts_with("100,3,")));
}

#[test]
fn effective_run_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "effective".to_string(),
            "--tau".into(),
            "10,20".into(),
            "--omega-c".into(),
            "0,0.1".into(),
            "--samples".into(),
            "20".into(),
            "--out".into(),
            p.display().to_string(),
        ]
    };
    let run = |p: &Path, jobs: &str| {
        let mut v = args(p);
        v.extend(["--jobs".to_string(), jobs.to_string()]);
        let v: Vec<&str> = v.iter().map(String::as_str).collect();
        cli(&v)
    };
    assert_eq!(run(&a, "1").status.code(), Some(0));
    assert_eq!(run(&b, "2").status.code(), Some(0));
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);
    let text = String::from_utf8(ta).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "eta,tau,omega_c,t,t_over_tau,omega,R_sq,nu_mean,nu_var,w_rev,w_irr,var_delta_e"
    );
    assert_eq!(text.lines().count(), 1 + 4 * 20);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[effective]\neta = [2.0]\ntau = [8.0]\nomega_c = [0.2]\nsamples = 6\n").unwrap();
    let o = cli(&["effective", "--config", cfg.to_str().unwrap(), "--tau", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.starts_with("2,4,0.2,")));
    assert!(rows[0].starts_with("2,4,0.2,-4,-1,"));
}

#[test]
fn distributions_and_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eff.csv");
    let dist = dir.path().join("dist");
    let o = cli(&[
        "effective",
        "--tau",
        "10",
        "--omega-c",
        "0.1",
        "--samples",
        "8",
        "--out",
        out.to_str().unwrap(),
        "--distributions",
        dist.to_str().unwrap(),
        "--plot",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let pmf = std::fs::read_to_string(dist.join("point000_defects.csv")).unwrap();
    assert!(pmf.starts_with("m,prob\n"));
    let energy = std::fs::read_to_string(dist.join("point000_energy.csv")).unwrap();
    assert!(energy.starts_with("delta_e,prob\n"));
    let script = std::fs::read_to_string(dir.path().join("eff.gp")).unwrap();
    assert!(script.contains("set datafile separator ','"));
    assert!(script.contains("eff.csv"));
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[effective]\nnot_a_key = 1\n").unwrap();
    assert_eq!(cli(&["effective", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(cli(&["effective", "--config", "/nonexistent/run.toml"]).status.code(), Some(2));
    assert_eq!(cli(&["effective", "--tau", "-1"]).status.code(), Some(2));
    assert_eq!(cli(&["lmg", "--n", "1", "--tau", "1"]).status.code(), Some(2));
    assert_eq!(cli(&["analytic", "--plot"]).status.code(), Some(2));
    assert_eq!(cli(&["collapse"]).status.code(), Some(2));
    assert_eq!(cli(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn lmg_then_collapse() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("lmg.csv");
    let o = cli(&["lmg", "--n", "32,64", "--n-over-tau", "4", "--samples", "11", "--out", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n_sites,tau,t,t_over_tau,h,defect_density,w_irr,ground_overlap");
    assert_eq!(text.lines().count(), 1 + 2 * 11);

    let o = cli(&["collapse", data.to_str().unwrap(), "--grid", "51"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let groups = report["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0]["curves"], 2);
    assert!(groups[0]["curve_deviation"].as_f64().unwrap() >= 0.0);

    // a lone curve cannot form a group
    let single = dir.path().join("single.csv");
    let first: Vec<&str> = text.lines().take(12).collect();
    std::fs::write(&single, first.join("\n") + "\n").unwrap();
    assert_eq!(cli(&["collapse", single.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn validate_emits_json_lines() {
    let o = cli(&["validate", "--only", "1,7,8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let ids: Vec<u64> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["id"].as_u64().unwrap())
        .collect();
    assert_eq!(ids, vec![1, 7, 8]);
}

#[test]
fn failing_check_exits_with_one() {
    let o = cli(&["validate", "--only", "3"]);
    let line: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let expected = if line["pass"].as_bool().unwrap() { 0 } else { 1 };
    assert_eq!(o.status.code(), Some(expected));
}
