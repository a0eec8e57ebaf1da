use std::path::Path;
use std::process::{Command, Output};

fn socvid(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socvid")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[delivery]\nc1 = -1.0\n").unwrap();
    let o = socvid(&["simulate", "--config", "bad.toml", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delivery.c1"));

    let o = socvid(&["simulate", "--config", "missing.toml", "--out", "run"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_then_analyze_writes_figure_data() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("s.toml"),
        "horizon = 120\n[graph]\nusers = 400\nregions = 5\n[videos]\ncount = 150\narrival_rate = 2.0\n",
    )
    .unwrap();
    let o = socvid(&["simulate", "--config", "s.toml", "--out", "run", "--seed", "3"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = socvid(&["analyze", "--in", "run", "--out", "figs"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "fig2_scatter.csv",
        "fig3_cdf_unpopular.csv",
        "fig3_cdf_middle.csv",
        "fig3_cdf_popular.csv",
        "fig4_lag.csv",
        "report.csv",
    ] {
        assert!(dir.path().join("figs").join(f).exists(), "{f}");
    }
    assert!(stdout(&o).contains("fitted s"));

    let o = socvid(&["fit", "--what", "zipf", "--in", "figs/fig4_lag.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("s = "));
}

#[test]
fn fit_recovers_coefficients_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("s_prev,regions\n");
    for s in [5.0f64, 10.0, 40.0, 200.0] {
        text.push_str(&format!("{s},{}\n", 2.0 * (0.7 * s).ln()));
    }
    std::fs::write(dir.path().join("c.csv"), text).unwrap();
    let o = socvid(&["fit", "--what", "c1c2", "--in", "c.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "c1 = 2.000000\nc2 = 0.700000\n");
}

#[test]
fn analyze_rejects_unknown_figure() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.toml"), "horizon = 48\n[graph]\nusers = 100\nregions = 3\n[videos]\ncount = 20\n").unwrap();
    assert!(socvid(&["simulate", "--config", "s.toml", "--out", "run"], dir.path()).status.success());
    let o = socvid(&["analyze", "--in", "run", "--fig", "7", "--out", "figs"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
