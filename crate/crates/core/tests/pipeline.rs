mod support;

use std::collections::BTreeSet;
use std::path::Path;

use support::{fixture, read_fixture, sha256_hex};
use syswall::corpus::BuiltinRegistry;
use syswall::metrics::compute_metrics;
use syswall::pipeline::{self, analyze_app, analyze_builtins, analyze_native, build_mapping, whitelist_for};
use syswall::policy::emit_policy;
use syswall::syscalls::{CommandProfile, EngineBaseline, SyscallTable};
use syswall::{run_pipeline, PipelineConfig, PoolMode};

fn config(rel: &str, out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture(rel)).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn hashes(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            let name = e.file_name().to_string_lossy().into_owned();
            (name, sha256_hex(&std::fs::read(e.path()).unwrap()))
        })
        .collect();
    out.sort();
    out
}

#[test]
fn demo_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_pipeline(&config("demo/config.json", dir.path())).unwrap();
    let names: Vec<String> = report
        .artifacts
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        [
            pipeline::APP_CG,
            pipeline::APP_SUMMARY,
            pipeline::BUILTIN_CG,
            pipeline::NATIVE_CG_BASE,
            pipeline::NATIVE_CG_REFINED,
            pipeline::CLONE_REPORT,
            pipeline::MAPPING,
            pipeline::WHITELIST,
            pipeline::METRICS,
            pipeline::POLICY,
            pipeline::POLICY_RULES,
        ]
    );
    for golden in [
        "mapping.json",
        "whitelist.json",
        "policy.json",
        "policy.rules",
        "app_summary.json",
    ] {
        let got = std::fs::read_to_string(dir.path().join(golden)).unwrap();
        assert_eq!(got, read_fixture(&format!("golden/demo/{golden}")), "{golden}");
    }
    assert_eq!(report.metrics.sr_fraction, "49/335");
    assert!(report.summary().starts_with("SR = 0.1463 (49/335)"));
}

#[test]
fn demo_policy_is_baseline_plus_exec_plus_profile() {
    let table = SyscallTable::default_x86_64();
    let dir = tempfile::tempdir().unwrap();
    let report = run_pipeline(&config("demo/config.json", dir.path())).unwrap();
    let profile = CommandProfile::load(&fixture("demo/profiles.json"), &table).unwrap();
    let mut expect = EngineBaseline::default_for(&table).unwrap().main;
    expect.insert("execve".into());
    expect.extend(profile.get("notify-send").unwrap().iter().cloned());
    let got: BTreeSet<String> = report.policy.main_allow.iter().cloned().collect();
    assert_eq!(got, expect);
    assert_eq!(report.policy.mode, PoolMode::PoolFree);
}

#[test]
fn two_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(&config("demo/config.json", a.path())).unwrap();
    run_pipeline(&config("demo/config.json", b.path())).unwrap();
    let (ha, hb) = (hashes(a.path()), hashes(b.path()));
    assert_eq!(ha.len(), 11);
    assert_eq!(ha, hb);
}

#[test]
fn refinement_off_passes_the_base_graph_through() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("demo/config.json", dir.path());
    cfg.refine = false;
    run_pipeline(&cfg).unwrap();
    let base = std::fs::read(dir.path().join(pipeline::NATIVE_CG_BASE)).unwrap();
    let refined = std::fs::read(dir.path().join(pipeline::NATIVE_CG_REFINED)).unwrap();
    assert_eq!(base, refined);
}

#[test]
fn refinement_narrows_the_demo_whitelist() {
    let (on, off) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let refined = run_pipeline(&config("demo/config.json", on.path())).unwrap();
    let mut cfg = config("demo/config.json", off.path());
    cfg.refine = false;
    let coarse = run_pipeline(&cfg).unwrap();
    assert!(refined.metrics.s_app <= coarse.metrics.s_app);
    let fine: BTreeSet<&String> = refined.policy.main_allow.iter().collect();
    assert!(fine.iter().all(|n| coarse.policy.main_allow.contains(n)));
}

#[test]
fn stages_run_alone_reproduce_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("demo/config.json", dir.path());
    run_pipeline(&cfg).unwrap();
    let read = |name: &str| std::fs::read_to_string(dir.path().join(name)).unwrap();

    let registry = BuiltinRegistry::default_registry();
    let table = SyscallTable::default_x86_64();
    let app = analyze_app(&cfg.corpus, &registry, cfg.trace.as_deref()).unwrap();
    assert_eq!(app.cg.to_json(), read(pipeline::APP_CG));
    assert_eq!(app.summary.to_json(), read(pipeline::APP_SUMMARY));
    let builtin = analyze_builtins(&cfg.builtin_corpus, &registry).unwrap();
    assert_eq!(builtin.to_json(), read(pipeline::BUILTIN_CG));
    let native = analyze_native(&syswall::nir::parse_nir(&cfg.nir).unwrap(), true);
    assert_eq!(native.base_cg.to_json(), read(pipeline::NATIVE_CG_BASE));
    assert_eq!(native.refined_cg.to_json(), read(pipeline::NATIVE_CG_REFINED));
    assert_eq!(native.report.to_json(), read(pipeline::CLONE_REPORT));

    // later stages start from the persisted files
    let summary = pipeline::AppSummary::load(&dir.path().join(pipeline::APP_SUMMARY)).unwrap();
    let builtin: syswall::jscg::CallGraph = serde_json::from_str(&read(pipeline::BUILTIN_CG)).unwrap();
    let db = build_mapping(&builtin, &native, &table, true).unwrap();
    assert_eq!(db.to_json(), read(pipeline::MAPPING));
    let db = syswall::MappingDatabase::load(&dir.path().join(pipeline::MAPPING)).unwrap();
    let baseline = EngineBaseline::default_for(&table).unwrap();
    let profile = CommandProfile::load(cfg.profile.as_deref().unwrap(), &table).unwrap();
    let wl = whitelist_for(&summary, &db, &baseline, &profile, &table, true).unwrap();
    assert_eq!(wl.to_json(), read(pipeline::WHITELIST));
    let wl = syswall::Whitelist::load(&dir.path().join(pipeline::WHITELIST)).unwrap();
    let metrics = compute_metrics::<f64>(&wl, &table).unwrap().record(&wl, &table);
    assert_eq!(metrics.to_json(), read(pipeline::METRICS));
    let policy = emit_policy(&wl, None);
    assert_eq!(policy.to_json(), read(pipeline::POLICY));
    assert_eq!(policy.to_rules(), read(pipeline::POLICY_RULES));
}

#[test]
fn promise_exec_needs_the_registry() {
    let (on, off) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let with = run_pipeline(&config("promise/config.json", on.path())).unwrap();
    let mut cfg = config("promise/config.json", off.path());
    cfg.use_registry = false;
    let without = run_pipeline(&cfg).unwrap();
    assert!(with.policy.main_allow.contains(&"execve".to_string()));
    assert!(!without.policy.main_allow.contains(&"execve".to_string()));
    assert_eq!(without.metrics.s_app, 29);
}

#[test]
fn payloads_stage_reports_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("demo/config.json", dir.path());
    cfg.payloads = Some(fixture("../crates/core/data/payloads.json"));
    let report = run_pipeline(&cfg).unwrap();
    let matrix = report.payloads.unwrap();
    assert_eq!(matrix.rows.len(), 7);
    // the notify-send profile needs execve, socket and connect
    let executed: Vec<&str> = matrix
        .rows
        .iter()
        .filter(|r| r.outcome == syswall::enforce::PayloadOutcome::Executed)
        .map(|r| r.payload.as_str())
        .collect();
    assert_eq!(executed, ["exec", "connect"]);
    assert!(dir.path().join(pipeline::PAYLOAD_REPORT).is_file());
}

#[test]
fn bad_config_stops_at_the_config_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config("demo/config.json", dir.path());
    cfg.nir = fixture("missing.nir.json");
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, "config");
    assert!(err.error.is_input());
    assert!(PipelineConfig::load(&fixture("demo/profiles.json")).is_err());
}

#[test]
fn strict_native_error_keeps_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let nir = dir.path().join("bad.nir.json");
    let mut program = syswall::nir::parse_nir(&fixture("demo/native.nir.json")).unwrap();
    program.bindings.push(syswall::nir::Binding {
        module: "fs".into(),
        method: "access".into(),
        function: "Read".into(),
    });
    std::fs::write(&nir, program.to_json()).unwrap();
    let out = dir.path().join("out");
    let mut cfg = config("demo/config.json", &out);
    cfg.nir = nir;
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage, "map");
    assert!(out.join(pipeline::NATIVE_CG_REFINED).is_file());
    assert!(!out.join(pipeline::WHITELIST).exists());
}
