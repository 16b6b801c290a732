use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stackbess_cli::bundle::write_bundle;
use stackbess_cli::*;

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn stackbess(stage: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stackbess"))
        .arg(stage)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn expect_ok(o: &Output) {
    assert!(
        o.status.success(),
        "{}\n{}",
        o.status,
        String::from_utf8_lossy(&o.stderr)
    );
}

/// Copy of the bundled data with `edit` applied to its run.toml.
fn edited_bundle(tmp: &Path, edit: impl FnOnce(String) -> String) -> PathBuf {
    let data = tmp.join("data");
    copy_dir(&data_dir(), &data);
    let config = data.join("run.toml");
    let text = fs::read_to_string(&config).unwrap();
    fs::write(&config, edit(text)).unwrap();
    config
}

#[test]
fn bundled_pipeline_produces_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data_dir().join("run.toml");
    for stage in ["forecast", "schedule", "simulate", "report"] {
        expect_ok(&stackbess(stage, &config, tmp.path(), &[]));
    }
    for name in [
        L_HAT_FILE,
        GROSS_HAT_FILE,
        PV_HAT_FILE,
        SCHEDULE_FILE,
        SCHEDULE_SUMMARY_FILE,
        TRACE_FILE,
        TRACE_SUMMARY_FILE,
        ALARMS_FILE,
        REPORT_FILE,
        INTERVAL_ERRORS_FILE,
    ] {
        let p = tmp.path().join(name);
        assert!(
            p.is_file() && fs::metadata(&p).unwrap().len() > 0,
            "{name} missing"
        );
    }
    let trace = fs::read_to_string(tmp.path().join(TRACE_FILE)).unwrap();
    assert_eq!(trace.lines().count(), 2881);
    let errors = fs::read_to_string(tmp.path().join(INTERVAL_ERRORS_FILE)).unwrap();
    assert_eq!(errors.lines().count(), 97);
    let report = fs::read_to_string(tmp.path().join(REPORT_FILE)).unwrap();
    assert!(report.contains("peak reduction"), "{report}");
}

#[test]
fn same_seed_gives_identical_simulation_files() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data_dir().join("run.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    expect_ok(&stackbess("forecast", &config, &a, &[]));
    expect_ok(&stackbess("schedule", &config, &a, &[]));
    copy_dir(&a, &b);
    for out in [&a, &b] {
        expect_ok(&stackbess("simulate", &config, out, &["--seed", "7"]));
    }
    for name in [TRACE_FILE, TRACE_SUMMARY_FILE, ALARMS_FILE] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    // A different seed changes the realization.
    expect_ok(&stackbess("simulate", &config, &b, &["--seed", "8"]));
    assert_ne!(
        fs::read(a.join(TRACE_FILE)).unwrap(),
        fs::read(b.join(TRACE_FILE)).unwrap()
    );
}

#[test]
fn missing_tariff_file_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = edited_bundle(tmp.path(), |t| t);
    fs::remove_file(config.parent().unwrap().join("tariffs.toml")).unwrap();
    let o = stackbess("forecast", &config, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tariffs.toml"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = edited_bundle(tmp.path(), |t| {
        t.replace("b_max_kw = 140.0", "b_max_kw = \"fast\"")
    });
    let o = stackbess("forecast", &config, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let config = edited_bundle(tmp.path(), |t| {
        t.replace("eta = 0.95", "eta = 0.95\nwarp = 9")
    });
    assert_eq!(
        stackbess("forecast", &config, &tmp.path().join("out"), &[])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn stage_without_its_inputs_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = stackbess("simulate", &data_dir().join("run.toml"), tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `schedule`"));
}

#[test]
fn undersized_site_is_infeasible() {
    // A 10 kW transformer and battery cannot serve an 86 kW peak.
    let tmp = tempfile::tempdir().unwrap();
    let config = edited_bundle(tmp.path(), |t| {
        t.replace("b_max_kw = 140.0", "b_max_kw = 10.0")
            .replace("transformer_kw = 400.0", "transformer_kw = 10.0")
    });
    let out = tmp.path().join("out");
    expect_ok(&stackbess("forecast", &config, &out, &[]));
    let o = stackbess("schedule", &config, &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn bundled_data_matches_its_generator() {
    let tmp = tempfile::tempdir().unwrap();
    write_bundle(tmp.path()).unwrap();
    let mut files = vec![
        PathBuf::from("pv_forecast.csv"),
        PathBuf::from("measured_net_load.csv"),
        PathBuf::from("history/index.csv"),
    ];
    for entry in fs::read_dir(tmp.path().join("scenarios")).unwrap() {
        files.push(Path::new("scenarios").join(entry.unwrap().file_name()));
    }
    for entry in fs::read_dir(tmp.path().join("history")).unwrap() {
        files.push(Path::new("history").join(entry.unwrap().file_name()));
    }
    for f in files {
        assert_eq!(
            fs::read(tmp.path().join(&f)).unwrap(),
            fs::read(data_dir().join(&f)).unwrap(),
            "{} differs from the generator",
            f.display()
        );
    }
}

#[test]
fn in_process_pipeline_matches_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data_dir().join("run.toml");
    let cfg = RunConfig::load(&config).unwrap();
    let written = run_pipeline(&cfg, Stage::Forecast, tmp.path()).unwrap();
    assert_eq!(written.len(), 3);
    let bin = tmp.path().join("bin");
    expect_ok(&stackbess("forecast", &config, &bin, &[]));
    assert_eq!(
        fs::read(tmp.path().join(L_HAT_FILE)).unwrap(),
        fs::read(bin.join(L_HAT_FILE)).unwrap()
    );
}
