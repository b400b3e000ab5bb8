use ponres::optimizer::ModelParams;
use ponres::runner::{
    emit, parse_config, parse_config_str, published_reference, render_comparison, run_sweep, summarize,
    survivability_table, write_records, Format, RunConfig, RunRecord, ScenarioSelection, Seeds, Solver, SolverChoice,
    TargetSelection,
};
use ponres::topology::Variant;

fn quick(scenarios: &[&str], seeds: Vec<u64>) -> RunConfig {
    let mut cfg = RunConfig {
        scenarios: ScenarioSelection::List(scenarios.iter().map(|s| s.to_string()).collect()),
        ..Default::default()
    };
    cfg.traffic.seeds = Seeds::List(seeds);
    cfg.validate().unwrap();
    cfg
}

#[test]
fn empty_config_gives_defaults() {
    let cfg = parse_config_str("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    let cell = cfg.cell_params();
    assert_eq!(cell.server_count(), 16);
    assert_eq!(cell.variant, Variant::Modified);
    assert_eq!(cfg.model, ModelParams::default());
    assert_eq!(cfg.model.server_idle_w, 301.6);
    assert_eq!(cfg.traffic.seeds.list(), (0..10).collect::<Vec<_>>());
    assert_eq!(cfg.solver, SolverChoice::Exact);
    assert_eq!(cfg.target, TargetSelection::First);
    assert_eq!(cfg.scenario_list().len(), 8);
}

#[test]
fn na_scenario_is_rejected() {
    let err = parse_config_str("scenarios = [\"S9\"]\n").unwrap_err();
    assert_eq!(err.key.as_deref(), Some("scenarios"));
    assert!(err.message.contains("S9"), "{err}");
    let ok = parse_config_str("scenarios = [\"S9\"]\n[cell]\nvariant = \"original\"\n").unwrap();
    assert_eq!(ok.scenario_list().len(), 1);
    assert!(parse_config_str("scenarios = [\"S1\"]\n[cell]\nvariant = \"original\"\n").is_err());
}

#[test]
fn unknown_key_is_named_with_its_line() {
    let err = parse_config_str("[model]\nserver_idle_w = 300.0\n\n[cell]\nrakcs = 2\n").unwrap_err();
    assert!(err.message.contains("rakcs"), "{err}");
    assert_eq!(err.key.as_deref(), Some("cell.rakcs"));
    assert_eq!(err.line, Some(5));
    assert!(err.to_string().contains("line 5"));
}

#[test]
fn bad_values_are_rejected() {
    assert!(parse_config_str("[traffic]\nseeds = []\n").is_err());
    assert!(parse_config_str("packet_bits = 0\n").is_err());
    assert!(parse_config_str("solver = \"fastest\"\n").is_err());
    assert!(parse_config_str("[traffic]\nmin_rate_bps = 9e8\nmax_rate_bps = 1e8\n").is_err());
    assert!(parse_config_str("[model]\nserver_max_w = 100\n").is_err());
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(
        &path,
        "scenarios = [\"S2\", \"S1\"]\nsolver = \"both\"\n[traffic]\nseeds = [3, 7]\ncount = 8\n[limits]\nmax_nodes = 100\n",
    )
    .unwrap();
    let cfg = parse_config(&path).unwrap();
    assert_eq!(cfg.traffic.seeds.list(), vec![3, 7]);
    assert_eq!(cfg.traffic.count, 8);
    assert_eq!(cfg.limits.max_nodes, 100);
    assert_eq!(cfg.scenario_list().iter().map(|s| s.to_string()).collect::<Vec<_>>(), ["S1", "S2"]);
    let missing = parse_config(dir.path().join("nope.toml")).unwrap_err();
    assert!(missing.to_string().contains("nope.toml"));
}

#[test]
fn no_scenarios_gives_only_the_baseline() {
    let out = run_sweep(&quick(&[], vec![42])).unwrap();
    assert_eq!(out.records.len(), 1);
    let r = &out.records[0];
    assert!(r.is_baseline() && r.is_ok());
    assert_eq!(r.seed, 42);
    assert!(r.optimal);
    assert_eq!(out.exit_code(), 0);
}

#[test]
fn sweep_counts_and_order() {
    let mut cfg = quick(&["S1", "S8"], vec![5, 1]);
    cfg.solver = SolverChoice::Both;
    let out = run_sweep(&cfg).unwrap();
    assert_eq!(out.records.len(), 2 * 2 * 3);
    let keys: Vec<(String, u64, String)> =
        out.records.iter().map(|r| (r.scenario.clone(), r.seed, r.solver.clone())).collect();
    assert_eq!(keys[0], ("NF".to_string(), 1, "exact".to_string()));
    assert_eq!(keys[1], ("NF".to_string(), 1, "heuristic".to_string()));
    assert_eq!(keys.last().unwrap().0, "S8");
    for r in &out.records {
        if r.is_ok() {
            if r.solver == "exact" && r.optimal {
                assert!(r.power_delta_pct.unwrap() >= -1e-9, "{r:?}");
            }
            // deltas are reproducible from the stored absolutes
            let base =
                out.records.iter().find(|b| b.is_baseline() && b.seed == r.seed && b.solver == r.solver).unwrap();
            let p = 100.0 * (r.total_power_W.unwrap() - base.total_power_W.unwrap()) / base.total_power_W.unwrap();
            assert!((p - r.power_delta_pct.unwrap()).abs() < 1e-9);
            let d = 100.0 * (r.mean_delay_s.unwrap() - base.mean_delay_s.unwrap()) / base.mean_delay_s.unwrap();
            assert!((d - r.delay_delta_pct.unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn all_targets_visits_every_link_of_the_class() {
    let mut cfg = quick(&["S2"], vec![0]);
    cfg.solver = SolverChoice::Heuristic;
    cfg.target = TargetSelection::All;
    let out = run_sweep(&cfg).unwrap();
    // one server-to-coupler link per server
    assert_eq!(out.records.len(), 1 + 16);
    let targets: std::collections::BTreeSet<&str> =
        out.records.iter().skip(1).map(|r| r.target_link.as_str()).collect();
    assert_eq!(targets.len(), 16);
}

fn sample_record() -> RunRecord {
    RunRecord {
        scenario: "S1".into(),
        target_link: "l000".into(),
        seed: 4,
        solver: "exact".into(),
        total_power_W: Some(1234.5),
        power_delta_pct: Some(0.25),
        mean_delay_s: Some(1.5e-5),
        delay_delta_pct: None,
        solve_time_s: None,
        optimal: true,
        status: "ok".into(),
    }
}

#[test]
fn one_record_is_two_csv_lines() {
    let mut buf = Vec::new();
    write_records(&[sample_record()], Format::Csv, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[0],
        "scenario,target_link,seed,solver,total_power_W,power_delta_pct,mean_delay_s,delay_delta_pct,solve_time_s,optimal,status"
    );
    assert_eq!(lines[1], "S1,l000,4,exact,1234.5,0.25,0.000015,,,true,ok");
}

#[test]
fn emit_is_byte_stable_and_json_round_trips() {
    let recs = vec![sample_record(), RunRecord { seed: 5, ..sample_record() }];
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(emit(&recs, Format::Csv, &dir.path().join("a")).unwrap()).unwrap();
    let b = std::fs::read(emit(&recs, Format::Csv, &dir.path().join("b")).unwrap()).unwrap();
    assert_eq!(a, b);
    let j = std::fs::read_to_string(emit(&recs, Format::Json, dir.path()).unwrap()).unwrap();
    let back: Vec<RunRecord> = serde_json::from_str(&j).unwrap();
    assert_eq!(back, recs);
}

#[test]
fn emit_to_unwritable_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    assert!(emit(&[sample_record()], Format::Csv, &file.join("sub")).is_err());
}

#[test]
fn comparison_table_has_a_row_per_scenario() {
    let mut recs = Vec::new();
    for s in 1..=8 {
        recs.push(RunRecord { scenario: format!("S{s}"), power_delta_pct: Some(s as f64), ..sample_record() });
    }
    recs.push(RunRecord { scenario: "S3".into(), status: "infeasible".into(), ..sample_record() });
    let sums = summarize(&recs, Solver::Exact);
    assert_eq!(sums.len(), 8);
    assert_eq!(sums[2].runs, 2);
    assert_eq!(sums[2].ok, 1);
    assert_eq!(sums[2].mean_power_delta_pct, Some(3.0));
    let table = render_comparison(&sums);
    assert_eq!(table.lines().count(), 9);
    assert_eq!(published_reference().len(), 8);
    assert!(summarize(&recs, Solver::Heuristic).is_empty());
}

#[test]
fn survivability_rows_match() {
    let rows = survivability_table().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.matches()));
}
