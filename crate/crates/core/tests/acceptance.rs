//! Acceptance checks. Runs without the test harness and prints one
//! `PASS`/`FAIL` line per criterion; exits nonzero if any fails.

mod support;

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::{fixture, random_program, random_request, read_fixture, sha256_hex};
use syswall::enforce::{evaluate_payloads, simulate, EventTrace, Outcome, Payload, CATEGORIES};
use syswall::mapping::{ComposedEntry, ComposedMapping, MethodKey};
use syswall::native::{build_base_cg, refine, resolve_syscalls, specialize_fnptr, specialize_switch, CloneReason};
use syswall::native::{CloneReport, NativeCallGraph};
use syswall::nir::{interpret, parse_nir};
use syswall::policy::{Action, LoadPoints, Policy, POLICY_VERSION};
use syswall::syscalls::{CommandProfile, EngineBaseline, SyscallTable};
use syswall::whitelist::{generate_whitelist, WhitelistInputs};
use syswall::{compute_metrics, run_pipeline, ExactMetrics, PipelineConfig, PoolMode};

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn golden(rel: &str) -> NativeCallGraph {
    serde_json::from_str(&read_fixture(rel)).unwrap()
}

fn triples(cg: &NativeCallGraph) -> BTreeSet<(String, usize, String)> {
    cg.edges
        .iter()
        .map(|e| (e.caller.clone(), e.site, e.callee.clone()))
        .collect()
}

fn projected(cg: &NativeCallGraph, report: &CloneReport) -> NativeCallGraph {
    cg.project(|n| report.original_of(n))
}

fn within(start: Instant, limit: Duration) -> Check {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(format!("{took:.2?}"))
}

fn switch_dispatch() -> Check {
    let start = Instant::now();
    let p = parse_nir(&fixture("switch_dispatch.nir.json")).map_err(|e| e.to_string())?;
    let base = build_base_cg(&p);
    let succ = base.successors();
    ensure!(
        succ["uv__fs_work"].contains("access") && succ["uv__fs_work"].contains("uv__fs_write_all"),
        "base graph lacks the shared work edges"
    );
    ensure!(
        base == golden("golden/switch_dispatch/native_cg_base.json"),
        "base graph differs from golden"
    );
    let (refined, _) = specialize_switch(&p);
    let rcg = build_base_cg(&refined);
    ensure!(
        rcg == golden("golden/switch_dispatch/native_cg_refined.json"),
        "refined graph differs from golden"
    );
    let rsucc = rcg.successors();
    let clone = rsucc["uv_fs_access"]
        .iter()
        .find(|c| c.starts_with("uv__fs_work."))
        .ok_or("uv_fs_access reaches no clone")?;
    ensure!(
        rsucc[clone] == BTreeSet::from(["access"]),
        "{clone} calls {:?}",
        rsucc[clone]
    );
    within(start, Duration::from_secs(1)).map(|t| format!("{clone} -> access only, {t}"))
}

fn fnptr_chain() -> Check {
    let start = Instant::now();
    let p = parse_nir(&fixture("fnptr_chain.nir.json")).map_err(|e| e.to_string())?;
    let (refined, report) = specialize_fnptr(&p);
    let n = report.count(CloneReason::Fnptr, "AsyncCall");
    ensure!(n == 3, "{n} AsyncCall clones");
    let rcg = build_base_cg(&refined);
    ensure!(
        rcg == golden("golden/fnptr_chain/native_cg_refined.json"),
        "refined graph differs from golden"
    );
    let read = rcg.reachable_from("Read");
    ensure!(read.contains("uv_fs_read"), "Read does not reach uv_fs_read");
    ensure!(
        !read.contains("uv_fs_unlink") && !read.contains("uv_fs_rmdir"),
        "Read still reaches unlink or rmdir"
    );
    within(start, Duration::from_secs(1)).map(|t| format!("3 AsyncCall clones, {t}"))
}

const PROGRAMS: u64 = 32;

fn soundness() -> Check {
    let table = SyscallTable::default_x86_64();
    let mut runs = 0;
    let mut violations = Vec::new();
    for seed in 0..PROGRAMS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_program(&mut rng);
        let (refined, report) = refine(&p);
        let rcg = build_base_cg(&refined);
        let edges = triples(&projected(&rcg, &report));
        let res = resolve_syscalls(&refined, &rcg, &table, false).map_err(|e| e.to_string())?;
        for entry in &p.entries {
            for _ in 0..4 {
                let log = interpret(&p, entry, &[random_request(&mut rng)]).map_err(|e| e.to_string())?;
                runs += 1;
                violations.extend(
                    log.call_edges
                        .iter()
                        .filter(|e| !edges.contains(*e))
                        .map(|e| format!("{seed}:{e:?}")),
                );
                let allowed = res.of(entry);
                violations.extend(
                    log.syscalls
                        .iter()
                        .filter_map(|n| table.name_of(*n))
                        .filter(|n| !allowed.contains(*n))
                        .map(|n| format!("{seed}:{entry}:{n}")),
                );
            }
        }
    }
    ensure!(
        violations.is_empty(),
        "{} violations, first {}",
        violations.len(),
        violations[0]
    );
    Ok(format!("{PROGRAMS} programs, {runs} runs, 0 violations"))
}

fn precision() -> Check {
    let mut fixtures = vec![
        parse_nir(&fixture("switch_dispatch.nir.json")).unwrap(),
        parse_nir(&fixture("fnptr_chain.nir.json")).unwrap(),
        parse_nir(&fixture("demo/native.nir.json")).unwrap(),
    ];
    for seed in 0..PROGRAMS {
        fixtures.push(random_program(&mut ChaCha8Rng::seed_from_u64(seed)));
    }
    for (i, p) in fixtures.iter().enumerate() {
        let base = triples(&build_base_cg(p));
        let (refined, report) = refine(p);
        let proj = triples(&projected(&build_base_cg(&refined), &report));
        ensure!(
            proj.is_subset(&base),
            "fixture {i}: projected edges outside the base graph"
        );
        let (_, again) = refine(&refined);
        ensure!(
            again.clones.is_empty(),
            "fixture {i}: second pass cloned {}",
            again.clones.len()
        );
    }
    Ok(format!("{} fixtures", fixtures.len()))
}

fn config(rel: &str, out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture(rel)).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = run_pipeline(&config("demo/config.json", dir.path())).map_err(|e| e.to_string())?;
    let table = SyscallTable::default_x86_64();
    let db = syswall::MappingDatabase::load(&dir.path().join("mapping.json")).map_err(|e| e.to_string())?;
    let exec = MethodKey::new("child_process", "exec");
    ensure!(
        db.composed
            .get(&exec)
            .is_some_and(|e| e.main_syscalls.contains("execve")),
        "exec does not map to execve"
    );
    let w = db
        .witnesses
        .iter()
        .find(|w| w.method == exec && w.syscall == "execve")
        .ok_or("no exec witness")?;
    let profile = CommandProfile::load(&fixture("demo/profiles.json"), &table).map_err(|e| e.to_string())?;
    let mut expect = EngineBaseline::default_for(&table).map_err(|e| e.to_string())?.main;
    expect.insert("execve".into());
    expect.extend(
        profile
            .get("notify-send")
            .ok_or("no notify-send profile")?
            .iter()
            .cloned(),
    );
    let got: BTreeSet<String> = report.policy.main_allow.iter().cloned().collect();
    ensure!(
        got == expect,
        "main_allow differs by {:?}",
        got.symmetric_difference(&expect).collect::<Vec<_>>()
    );
    for name in ["mapping.json", "policy.json", "policy.rules", "whitelist.json"] {
        let bytes = std::fs::read_to_string(dir.path().join(name)).map_err(|e| e.to_string())?;
        ensure!(
            bytes == read_fixture(&format!("golden/demo/{name}")),
            "{name} differs from golden"
        );
    }
    within(start, Duration::from_secs(5))
        .map(|t| format!("{} via {}, {} allowed, {t}", exec, w.native_path.join(">"), got.len()))
}

fn baseline_only() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = run_pipeline(&config("jsmisc/solo.config.json", dir.path())).map_err(|e| e.to_string())?;
    let table = SyscallTable::default_x86_64();
    let baseline = EngineBaseline::default_for(&table).map_err(|e| e.to_string())?;
    let main: BTreeSet<String> = report.policy.main_allow.iter().cloned().collect();
    ensure!(main == baseline.main, "main_allow is not the engine baseline");
    ensure!(
        report.policy.mode == PoolMode::PoolFree,
        "mode is {:?}",
        report.policy.mode
    );
    let wl = syswall::Whitelist::load(&dir.path().join("whitelist.json")).map_err(|e| e.to_string())?;
    let m: ExactMetrics = compute_metrics(&wl, &table).map_err(|e| e.to_string())?;
    let expect = Ratio::new(baseline.main.len() as u64, 335);
    ensure!(m.sr == expect, "sr {} != {}", m.sr, expect);
    ensure!(
        report.metrics.sr_rounded == "0.0866",
        "rounded {}",
        report.metrics.sr_rounded
    );
    Ok(format!("SR = {} = {}", m.sr, report.metrics.sr_rounded))
}

fn policy(main: &[&str], pool: &[&str]) -> Policy {
    let sorted = |xs: &[&str]| {
        xs.iter()
            .map(|s| s.to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    Policy {
        version: POLICY_VERSION,
        default_action: Action::Kill,
        main_allow: sorted(main),
        pool_allow: sorted(pool),
        load_points: LoadPoints::default(),
        mode: if pool.is_empty() {
            PoolMode::PoolFree
        } else {
            PoolMode::PoolRequired
        },
        fs_advisory: None,
    }
}

fn run(p: &Policy, text: &str) -> std::result::Result<Vec<Outcome>, String> {
    let trace = EventTrace::parse(text).map_err(|e| e.to_string())?;
    Ok(simulate(p, &trace)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|v| v.outcome)
        .collect())
}

fn simulator() -> Check {
    use Outcome::{Allowed, Killed};
    let pooled = policy(&["epoll_pwait"], &["openat"]);
    let got = run(&pooled, "POOL_INIT 4\nAPP_START\nSYSCALL 1 openat")?;
    ensure!(got == [Allowed], "pool thread: {got:?}");
    let main = policy(&["read"], &[]);
    let got = run(&main, "APP_START\nTHREAD_CREATE 0 5\nSYSCALL 5 socket")?;
    ensure!(got == [Killed], "child of main: {got:?}");
    let got = run(&policy(&[], &[]), "APP_START\nSYSCALL 0 read")?;
    ensure!(got == [Killed], "empty policy: {got:?}");

    let table = SyscallTable::default_x86_64();
    let keys: BTreeSet<&str> = CATEGORIES.iter().map(|(_, k)| *k).collect();
    let names: Vec<String> = table.names().into_iter().collect();
    let safe: Vec<&str> = names.iter().map(String::as_str).filter(|n| !keys.contains(n)).collect();
    let all: Vec<&str> = names.iter().map(String::as_str).collect();
    let strict = evaluate_payloads(&policy(&safe, &[]), &Payload::defaults(), 0).map_err(|e| e.to_string())?;
    let open = evaluate_payloads(&policy(&all, &[]), &Payload::defaults(), 0).map_err(|e| e.to_string())?;
    ensure!(
        strict.blocked() == 7,
        "critical-free policy blocks {}/7",
        strict.blocked()
    );
    ensure!(open.blocked() == 0, "full-table policy blocks {}/7", open.blocked());
    Ok("3 scenarios, 7/7 and 0/7 blocked".into())
}

fn registry_necessity() -> Check {
    let (on, off) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let with = run_pipeline(&config("promise/config.json", on.path())).map_err(|e| e.to_string())?;
    let mut cfg = config("promise/config.json", off.path());
    cfg.use_registry = false;
    let without = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let has = |p: &Policy| p.main_allow.iter().any(|n| n == "execve");
    ensure!(has(&with.policy), "execve missing with the registry");
    ensure!(!has(&without.policy), "execve present without the registry");
    Ok("execve with registry, absent without".into())
}

fn determinism() -> Check {
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let report = run_pipeline(&config("demo/config.json", dir.path())).map_err(|e| e.to_string())?;
        let mut hashes = Vec::new();
        for path in &report.artifacts {
            let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
            hashes.push((path.file_name().unwrap().to_owned(), sha256_hex(&bytes)));
        }
        runs.push(hashes);
    }
    ensure!(runs[0] == runs[1], "artifact hashes differ");
    Ok(format!("{} artifacts identical", runs[0].len()))
}

const UNIVERSE: [&str; 10] = [
    "read", "write", "openat", "futex", "execve", "mmap", "socket", "connect", "unlink", "clone",
];

fn pick(rng: &mut ChaCha8Rng) -> BTreeSet<String> {
    let k = rng.gen_range(0..=3);
    UNIVERSE.choose_multiple(rng, k).map(|s| s.to_string()).collect()
}

fn monotonicity() -> Check {
    let table = SyscallTable::default_x86_64();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let methods: Vec<MethodKey> = (0..5).map(|i| MethodKey::new("m", format!("f{i}"))).collect();
    let mut mutations = 0;
    for _ in 0..40 {
        let mut composed = ComposedMapping::new();
        let mut pool_builtins = BTreeSet::new();
        for m in &methods {
            let pooled = rng.gen_bool(0.4);
            let pool_syscalls = if pooled { pick(&mut rng) } else { BTreeSet::new() };
            if pooled {
                pool_builtins.insert(m.clone());
            }
            composed.insert(
                m.clone(),
                ComposedEntry {
                    main_syscalls: pick(&mut rng),
                    pool_syscalls,
                },
            );
        }
        let mut inputs = WhitelistInputs {
            reachable: methods.iter().filter(|_| rng.gen_bool(0.3)).cloned().collect(),
            composed,
            pool_builtins,
            ..Default::default()
        };
        let mut baseline = EngineBaseline {
            main: pick(&mut rng),
            pool: pick(&mut rng),
        };
        for _ in 0..4 {
            let before = generate_whitelist(&inputs, &baseline, &table, true).map_err(|e| e.to_string())?;
            let m = methods.choose(&mut rng).unwrap().clone();
            let name = UNIVERSE.choose(&mut rng).unwrap().to_string();
            match rng.gen_range(0..5) {
                0 => {
                    inputs.reachable.insert(m);
                }
                1 => {
                    inputs.composed.get_mut(&m).unwrap().main_syscalls.insert(name);
                }
                2 => {
                    inputs.pool_builtins.insert(m.clone());
                    inputs.composed.get_mut(&m).unwrap().pool_syscalls.insert(name);
                }
                3 => {
                    baseline.main.insert(name);
                }
                _ => {
                    baseline.pool.insert(name);
                }
            }
            let after = generate_whitelist(&inputs, &baseline, &table, true).map_err(|e| e.to_string())?;
            ensure!(
                before.main.is_subset(&after.main),
                "main shrank after mutation {mutations}"
            );
            ensure!(
                before.pool.is_subset(&after.pool),
                "pool shrank after mutation {mutations}"
            );
            mutations += 1;
        }
    }
    ensure!(mutations >= 100, "only {mutations} mutations");
    Ok(format!("{mutations} mutations"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 switch specialization example", switch_dispatch),
        ("2 function-pointer specialization example", fnptr_chain),
        ("3 interpreter soundness", soundness),
        ("4 precision and idempotence", precision),
        ("5 demo end to end", end_to_end),
        ("6 baseline-only metric", baseline_only),
        ("7 simulator semantics", simulator),
        ("8 builtin-pattern necessity", registry_necessity),
        ("9 determinism", determinism),
        ("10 whitelist monotonicity", monotonicity),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{}/10 criteria pass", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
