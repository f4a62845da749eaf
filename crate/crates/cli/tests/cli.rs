use std::fs;
use std::path::Path;
use std::process::Command;

use beacon_rewards::reward_model::{DailyValidatorReward, EpochValidatorReward};
use beacon_rewards::validate::daily_totals_from_ledger;
use beacon_rewards::{table, ChainSpec};
use tempfile::TempDir;

struct Out {
    code: i32,
    stderr: String,
}

fn run(cwd: &Path, args: &[&str]) -> Out {
    let out = Command::new(env!("CARGO_BIN_EXE_beacon-rewards"))
        .args(args)
        .current_dir(cwd)
        .env_remove("BEACON_REWARDS_ENDPOINT")
        .env_remove("BEACON_REWARDS_TOKEN")
        .env_remove("RUST_LOG")
        .output()
        .unwrap();
    Out {
        code: out.status.code().unwrap(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

#[track_caller]
fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = run(cwd, args);
    assert_eq!(out.code, 0, "{args:?}: {}", out.stderr);
    out.stderr
}

/// 40 validators simulated into `sim/`, three epochs unless `extra` says
/// otherwise.
fn simulated(extra: &[&str]) -> TempDir {
    let dir = TempDir::new().unwrap();
    let mut args = vec!["simulate", "--validators", "40", "--out", "sim"];
    if !extra.contains(&"--epochs") {
        args.extend(["--epochs", "3"]);
    }
    args.extend_from_slice(extra);
    ok(dir.path(), &args);
    dir
}

#[test]
fn collect_hundred_proposer_slots() {
    let dir = simulated(&["--epochs", "4"]);
    let log = ok(
        dir.path(),
        &[
            "collect",
            "--stream",
            "proposer",
            "--slots",
            "0..99",
            "--fixtures",
            "sim",
        ],
    );
    assert!(log.contains("100 units ok, 0 missed, 0 error"), "{log}");
    let rows = fs::read_to_string(dir.path().join("raw/proposer.csv")).unwrap();
    assert_eq!(rows.lines().count(), 101);
}

#[test]
fn inverted_range_is_a_usage_error() {
    let dir = simulated(&[]);
    let out = run(
        dir.path(),
        &[
            "collect",
            "--stream",
            "proposer",
            "--slots",
            "9..2",
            "--fixtures",
            "sim",
        ],
    );
    assert_eq!(out.code, 2, "{}", out.stderr);
    let out = run(
        dir.path(),
        &[
            "collect",
            "--stream",
            "proposer",
            "--epochs",
            "0..1",
            "--fixtures",
            "sim",
        ],
    );
    assert_eq!(out.code, 2, "{}", out.stderr);
}

#[test]
fn malformed_unit_exits_one() {
    let dir = simulated(&[]);
    fs::write(dir.path().join("sim/proposer/17.json"), "{\"data\":").unwrap();
    let out = run(
        dir.path(),
        &[
            "collect",
            "--stream",
            "proposer",
            "--slots",
            "0..31",
            "--fixtures",
            "sim",
        ],
    );
    assert_eq!(out.code, 1, "{}", out.stderr);
    assert!(out.stderr.contains("1 error"), "{}", out.stderr);
    let side = fs::read_to_string(dir.path().join("raw/missed_proposer.csv")).unwrap();
    assert_eq!(side, "unit_id,status\n17,error\n");
}

#[test]
fn collect_without_a_source_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[collect]\nproposer = \"0..3\"\n",
    )
    .unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "collect"]);
    assert_eq!(out.code, 2, "{}", out.stderr);
    assert!(out.stderr.contains("no data source"), "{}", out.stderr);

    fs::write(
        dir.path().join("c.toml"),
        "[collect]\nproposer = \"0..3\"\n[dirs]\nfixtures = \"fx\"\n",
    )
    .unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "collect"]);
    // An empty fixture directory: every unit is missed rather than failed.
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert!(
        out.stderr.contains("0 units ok, 4 missed"),
        "{}",
        out.stderr
    );
}

#[test]
fn config_errors_exit_two_with_location() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[chain]\nslots_per_epoch = 32\n\n[dirs]\nraw = 5\n",
    )
    .unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "aggregate"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("line 5"), "{}", out.stderr);

    fs::write(
        dir.path().join("c.toml"),
        "[dirs]\nraw = \"x\"\ntables = \"x\"\n",
    )
    .unwrap();
    let out = run(dir.path(), &["--config", "c.toml", "aggregate"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("raw and tables"), "{}", out.stderr);

    let out = run(dir.path(), &["--config", "missing.toml", "aggregate"]);
    assert_eq!(out.code, 2);
}

#[test]
fn every_subcommand_documents_its_flags_and_rejects_unknown_ones() {
    let dir = TempDir::new().unwrap();
    let expected: [(&str, &[&str]); 6] = [
        (
            "collect",
            &[
                "--stream",
                "--slots",
                "--epochs",
                "--fixtures",
                "--endpoint",
                "--out",
                "--max-parallel",
                "--unit-limit",
                "--fresh",
            ],
        ),
        (
            "aggregate",
            &["--raw", "--tables", "--sort-chunk-records", "--temp-dir"],
        ),
        ("metrics", &["--tables", "--out", "--clamp", "--category"]),
        (
            "simulate",
            &[
                "--sim-config",
                "--out",
                "--seed",
                "--validators",
                "--added-per-epoch",
                "--epochs",
                "--no-fixtures",
                "--no-raw",
            ],
        ),
        (
            "validate",
            &[
                "--raw",
                "--tables",
                "--ref",
                "--daily-ref",
                "--tolerance-gwei",
                "--rel-tolerance",
                "--reports",
            ],
        ),
        ("export", &["--table", "--tables", "--out"]),
    ];
    for (cmd, flags) in expected {
        let out = Command::new(env!("CARGO_BIN_EXE_beacon-rewards"))
            .args([cmd, "--help"])
            .output()
            .unwrap();
        assert!(out.status.success());
        let help = String::from_utf8(out.stdout).unwrap();
        for flag in flags.iter().chain(&["--config", "--verbose", "--quiet"]) {
            assert!(help.contains(flag), "{cmd} --help lacks {flag}");
        }
        assert_eq!(run(dir.path(), &[cmd, "--no-such-flag"]).code, 2, "{cmd}");
    }
}

#[test]
fn aggregate_empty_input_warns_and_succeeds() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("raw")).unwrap();
    let log = ok(dir.path(), &["aggregate"]);
    assert!(log.contains("WARN"), "{log}");
    assert!(dir.path().join("tables/manifest.json").exists());
}

#[test]
fn aggregate_truncated_raw_file_exits_one_with_location() {
    let dir = simulated(&["--no-fixtures"]);
    let path = dir.path().join("sim/attestation.csv");
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(6).collect();
    fs::write(&path, format!("{}\n5,1", kept.join("\n"))).unwrap();
    let out = run(dir.path(), &["aggregate", "--raw", "sim"]);
    assert_eq!(out.code, 1, "{}", out.stderr);
    assert!(out.stderr.contains("attestation.csv:7"), "{}", out.stderr);
}

#[test]
fn missing_tables_are_an_io_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["metrics", "--tables", "nowhere"]).code, 3);
    assert_eq!(
        run(
            dir.path(),
            &[
                "export",
                "--table",
                "daily_category_totals",
                "--tables",
                "nowhere",
                "--out",
                "x.csv"
            ]
        )
        .code,
        3
    );
}

fn indices_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn clamp_modes_differ_in_entropy_and_hhi_not_gini() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("sim.toml"),
        "initial_validators = 30\nepochs = 2\npenalty_probability = 0.5\npenalty_scale = 3.0\n",
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--sim-config",
            "sim.toml",
            "--out",
            "sim",
            "--no-fixtures",
        ],
    );
    ok(dir.path(), &["aggregate", "--raw", "sim"]);
    let daily: Vec<DailyValidatorReward> = fs::read_dir(dir.path().join("tables/daily_rewards"))
        .unwrap()
        .flat_map(|e| table::read_all::<DailyValidatorReward>(&e.unwrap().path()).unwrap())
        .collect();
    assert!(
        daily.iter().any(|r| r.attestation < 0),
        "no negative daily reward to clamp"
    );

    ok(
        dir.path(),
        &[
            "metrics",
            "--clamp",
            "uniform",
            "--category",
            "attestation",
            "--out",
            "u",
        ],
    );
    ok(
        dir.path(),
        &[
            "metrics",
            "--clamp",
            "gini-only",
            "--category",
            "attestation",
            "--out",
            "g",
        ],
    );
    let u = indices_rows(&dir.path().join("u/indices_daily.csv"));
    let g = indices_rows(&dir.path().join("g/indices_daily.csv"));
    assert_eq!(u.len(), g.len());
    assert!(u.iter().all(|r| r[1] == "attestation"));
    for (a, b) in u.iter().zip(&g) {
        assert_eq!(a[2], b[2], "gini");
    }
    assert!(
        u.iter().zip(&g).any(|(a, b)| a[3] != b[3] && a[4] != b[4]),
        "entropy/hhi unchanged"
    );
}

#[test]
fn simulate_twice_gives_identical_files() {
    let a = simulated(&["--seed", "42"]);
    let b = simulated(&["--seed", "42"]);
    let c = simulated(&["--seed", "43"]);
    for name in [
        "sim/ledger.csv",
        "sim/sync_committee.csv",
        "sim/attestation/2.json",
        "sim/simulation.json",
    ] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    assert_ne!(
        fs::read(a.path().join("sim/ledger.csv")).unwrap(),
        fs::read(c.path().join("sim/ledger.csv")).unwrap()
    );
}

#[test]
fn simulate_rejects_bad_config() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("sim.toml"), "epochs = 0\n").unwrap();
    assert_eq!(
        run(dir.path(), &["simulate", "--sim-config", "sim.toml"]).code,
        2
    );
    fs::write(dir.path().join("sim.toml"), "epoch = 3\n").unwrap();
    assert_eq!(
        run(dir.path(), &["simulate", "--sim-config", "sim.toml"]).code,
        2
    );
}

#[test]
fn daily_totals_from_ledger_validate_exactly() {
    let dir = simulated(&["--no-fixtures"]);
    ok(dir.path(), &["aggregate", "--raw", "sim"]);
    let ledger: Vec<EpochValidatorReward> =
        table::read_all(&dir.path().join("sim/ledger.csv")).unwrap();
    let refs = daily_totals_from_ledger(&ledger, &ChainSpec::default()).unwrap();
    let mut w = csv::Writer::from_path(dir.path().join("daily.csv")).unwrap();
    for r in &refs {
        w.serialize(r).unwrap();
    }
    w.flush().unwrap();
    ok(
        dir.path(),
        &[
            "validate",
            "--daily-ref",
            "daily.csv",
            "--rel-tolerance",
            "0",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("reports/daily_totals.json")).unwrap())
            .unwrap();
    assert_eq!(report["summary"]["pass_rate"], 1.0);

    // 0.5% high: passes at 1%, fails at 0.1%.
    let mut w = csv::Writer::from_path(dir.path().join("high.csv")).unwrap();
    for r in &refs {
        w.write_record([
            r.date.to_string(),
            (r.total_income_ether / 1.005).to_string(),
        ])
        .unwrap();
    }
    drop(w);
    fs::write(
        dir.path().join("high.csv"),
        format!(
            "date,total_income_ether\n{}",
            fs::read_to_string(dir.path().join("high.csv")).unwrap()
        ),
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "validate",
            "--daily-ref",
            "high.csv",
            "--rel-tolerance",
            "0.01",
        ],
    );
    let out = run(
        dir.path(),
        &[
            "validate",
            "--daily-ref",
            "high.csv",
            "--rel-tolerance",
            "0.001",
        ],
    );
    assert_eq!(out.code, 1, "{}", out.stderr);
}

#[test]
fn validate_needs_a_reference() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["validate"]).code, 2);
    assert_eq!(run(dir.path(), &["validate", "--ref", "none.json"]).code, 3);
}

#[test]
fn export_writes_exact_ether() {
    let dir = simulated(&["--no-fixtures"]);
    ok(dir.path(), &["aggregate", "--raw", "sim"]);
    ok(
        dir.path(),
        &[
            "export",
            "--table",
            "validator_lifetime_totals",
            "--out",
            "out/lifetime.csv",
        ],
    );
    let gwei = fs::read_to_string(dir.path().join("tables/validator_lifetime_totals.csv")).unwrap();
    let ether = fs::read_to_string(dir.path().join("out/lifetime.csv")).unwrap();
    assert_eq!(gwei.lines().next(), ether.lines().next());
    for (g, e) in gwei.lines().zip(ether.lines()).skip(1) {
        let g: Vec<&str> = g.split(',').collect();
        let e: Vec<&str> = e.split(',').collect();
        assert_eq!(g[0], e[0]);
        for (gv, ev) in g.iter().zip(&e).skip(1) {
            let gv: i64 = gv.parse().unwrap();
            let (whole, frac) = ev.trim_start_matches('-').split_once('.').unwrap();
            assert!(frac.len() <= 9);
            let frac = format!("{frac:0<9}");
            let back = whole.parse::<i64>().unwrap() * 1_000_000_000 + frac.parse::<i64>().unwrap();
            assert_eq!(if ev.starts_with('-') { -back } else { back }, gv);
        }
    }
    ok(
        dir.path(),
        &["export", "--table", "daily_rewards", "--out", "daily.csv"],
    );
    let rows = fs::read_to_string(dir.path().join("daily.csv")).unwrap();
    assert_eq!(rows.lines().count(), 41);
    assert_eq!(
        run(
            dir.path(),
            &["export", "--table", "bogus", "--out", "x.csv"]
        )
        .code,
        2
    );
}
