mod support;

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::read_fixture;
use syswall::mapping::{ComposedEntry, ComposedMapping, MethodKey};
use syswall::metrics::format_ratio;
use syswall::policy::{emit_policy, Policy};
use syswall::syscalls::{CommandProfile, EngineBaseline, SyscallClass, SyscallTable};
use syswall::whitelist::{generate_whitelist, PoolMode, Source, Whitelist, WhitelistInputs};
use syswall::{compute_metrics, ExactMetrics, Metrics, Metrics32};

fn table() -> SyscallTable {
    SyscallTable::default_x86_64()
}

fn baseline() -> EngineBaseline {
    EngineBaseline::default_for(&table()).unwrap()
}

fn baseline_only() -> Whitelist {
    generate_whitelist(&WhitelistInputs::default(), &baseline(), &table(), true).unwrap()
}

/// The main-thread list exactly as printed, with `fsstat` read as `fstat`.
const PRINTED_MAIN: &str = "mprotect; futex; rt_sigaction; munmap; read; fstat; getpid; open; ioctl; rt_sigprocmask; \
    stat; fcntl; writev; epoll_pwait; pread64; dup3; close; write; getcwd; getdents64; rt_sigreturn; brk; shutdown; \
    statx; readlink; madvise; exit_group; epoll_ctl; mmap";
const PRINTED_POOL: &str =
    "read; futex; openat; socket; statx; open; exit; close; write; rt_sigprocmask; fcntl; getcwd; madvise; munmap; mmap";

fn printed(list: &str) -> BTreeSet<String> {
    list.split(';').map(|s| s.trim().to_string()).collect()
}

#[test]
fn shipped_baseline_is_the_printed_table() {
    let b = baseline();
    assert_eq!(b.main, printed(PRINTED_MAIN));
    assert_eq!(b.pool, printed(PRINTED_POOL));
    assert_eq!(table().len(), 335);
}

#[test]
fn baseline_only_app() {
    let wl = baseline_only();
    assert_eq!(wl.main, baseline().main);
    assert!(wl.pool.is_empty());
    assert_eq!(wl.mode, PoolMode::PoolFree);
    assert!(wl
        .provenance
        .values()
        .all(|s| s == &BTreeSet::from([Source::EngineBaseline])));

    let exact: ExactMetrics = compute_metrics(&wl, &table()).unwrap();
    assert_eq!(exact.sr, Ratio::new(29, 335));
    assert_eq!(exact.sr_rounded(), "0.0866");
    let approx: Metrics = compute_metrics(&wl, &table()).unwrap();
    assert!((approx.sr - 29.0 / 335.0).abs() < 1e-12);
    let single: Metrics32 = compute_metrics(&wl, &table()).unwrap();
    assert!((single.sr - 29.0f32 / 335.0).abs() < 1e-6);
}

#[test]
fn baseline_only_artifacts_match_goldens() {
    let wl = baseline_only();
    assert_eq!(wl.to_json(), read_fixture("golden/baseline/whitelist.json"));
    let p = emit_policy(&wl, None);
    assert_eq!(p.to_json(), read_fixture("golden/baseline/policy.json"));
    assert_eq!(p.to_rules(), read_fixture("golden/baseline/policy.rules"));
    let m: ExactMetrics = compute_metrics(&wl, &table()).unwrap();
    assert_eq!(
        m.record(&wl, &table()).to_json(),
        read_fixture("golden/baseline/metrics.json")
    );
}

fn names(t: &SyscallTable) -> Vec<String> {
    t.rows().iter().map(|r| r.name.clone()).collect()
}

fn random_whitelist(rng: &mut ChaCha8Rng, pool: &[String]) -> Whitelist {
    let k = rng.gen_range(0..=pool.len());
    let main: BTreeSet<String> = pool.choose_multiple(rng, k).cloned().collect();
    let k = rng.gen_range(0..=40);
    let extra: BTreeSet<String> = pool.choose_multiple(rng, k).cloned().collect();
    Whitelist {
        main,
        mode: if extra.is_empty() {
            PoolMode::PoolFree
        } else {
            PoolMode::PoolRequired
        },
        pool: extra,
        provenance: BTreeMap::new(),
        warnings: vec![],
    }
}

#[test]
fn ratio_matches_set_counting() {
    let t = table();
    let all = names(&t);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let wl = random_whitelist(&mut rng, &all);
        let mut seen: Vec<&String> = wl.main.iter().chain(wl.pool.iter()).collect();
        seen.sort();
        seen.dedup();
        let crit = seen
            .iter()
            .filter(|n| t.class_of(n) == Some(SyscallClass::Critical))
            .count() as u64;
        let m: ExactMetrics = compute_metrics(&wl, &t).unwrap();
        assert_eq!(m.s_app, seen.len() as u64);
        assert_eq!(m.s_base, 335);
        assert_eq!(m.sr, Ratio::new(seen.len() as u64, 335));
        assert_eq!(m.critical_allowed, crit);
        assert_eq!(m.critical_allowed + m.trivial_allowed, m.s_app);
        if m.s_app > 0 {
            assert!(m.sr > Ratio::from_integer(0) && m.sr <= Ratio::from_integer(1));
        }
    }
}

#[test]
fn ratio_ignores_row_order() {
    let t = table();
    let all = names(&t);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut rows = t.rows().to_vec();
        rows.shuffle(&mut rng);
        let shuffled = SyscallTable::new(rows).unwrap();
        let wl = random_whitelist(&mut rng, &all);
        let a: ExactMetrics = compute_metrics(&wl, &t).unwrap();
        let b: ExactMetrics = compute_metrics(&wl, &shuffled).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.record(&wl, &t), b.record(&wl, &shuffled));
    }
}

#[test]
fn full_table_ratio_is_one() {
    let t = table();
    let wl = Whitelist {
        main: t.names(),
        pool: BTreeSet::new(),
        mode: PoolMode::PoolFree,
        provenance: BTreeMap::new(),
        warnings: vec![],
    };
    let m: ExactMetrics = compute_metrics(&wl, &t).unwrap();
    assert_eq!(m.sr, Ratio::from_integer(1));
    assert_eq!(m.sr_rounded(), "1.0000");
}

#[test]
fn unknown_name_is_rejected() {
    let mut wl = baseline_only();
    wl.main.insert("frobnicate".into());
    assert!(compute_metrics::<f64>(&wl, &table()).is_err());
}

#[test]
fn rounding_is_half_up() {
    assert_eq!(format_ratio(1, 20000, 4), "0.0001");
    assert_eq!(format_ratio(1, 20001, 4), "0.0000");
    assert_eq!(format_ratio(49, 335, 4), "0.1463");
}

/// Inputs over a small universe so mutations collide with existing entries.
#[derive(Debug, Clone)]
struct World {
    inputs: WhitelistInputs,
    baseline: EngineBaseline,
}

const UNIVERSE: [&str; 12] = [
    "read", "write", "openat", "futex", "execve", "mmap", "socket", "connect", "unlink", "rmdir", "access", "clone",
];
const BINARIES: [&str; 3] = ["ls", "git", "notify-send"];

fn pick(rng: &mut ChaCha8Rng, max: usize) -> BTreeSet<String> {
    let k = rng.gen_range(0..=max);
    UNIVERSE.choose_multiple(rng, k).map(|s| s.to_string()).collect()
}

fn method(i: usize) -> MethodKey {
    MethodKey::new("m", format!("f{i}"))
}

fn random_world(rng: &mut ChaCha8Rng) -> World {
    let mut composed = ComposedMapping::new();
    let mut pool_builtins = BTreeSet::new();
    for i in 0..6 {
        let pooled = rng.gen_bool(0.4);
        composed.insert(
            method(i),
            ComposedEntry {
                main_syscalls: pick(rng, 3),
                pool_syscalls: if pooled { pick(rng, 3) } else { BTreeSet::new() },
            },
        );
        if pooled {
            pool_builtins.insert(method(i));
        }
    }
    let reachable = (0..6).filter(|_| rng.gen_bool(0.4)).map(method).collect();
    let profile = CommandProfile {
        commands: BINARIES.iter().map(|b| (b.to_string(), pick(rng, 3))).collect(),
    };
    let commands = BINARIES
        .iter()
        .filter(|_| rng.gen_bool(0.3))
        .map(|b| format!("{b} --flag"))
        .collect();
    World {
        inputs: WhitelistInputs {
            reachable,
            composed,
            pool_builtins,
            commands,
            profile,
        },
        baseline: EngineBaseline {
            main: pick(rng, 4),
            pool: pick(rng, 4),
        },
    }
}

fn generate(w: &World) -> Whitelist {
    generate_whitelist(&w.inputs, &w.baseline, &table(), true).unwrap()
}

/// Adds one element somewhere in the inputs. Pool syscalls only go to pool
/// builtins, as the mapping stage guarantees.
fn grow(rng: &mut ChaCha8Rng, w: &World) -> World {
    let mut w = w.clone();
    let name = UNIVERSE.choose(rng).unwrap().to_string();
    let m = method(rng.gen_range(0..6));
    match rng.gen_range(0..7) {
        0 => {
            w.inputs.reachable.insert(m);
        }
        1 => w
            .inputs
            .commands
            .push(format!("/usr/bin/{}", BINARIES.choose(rng).unwrap())),
        2 => {
            w.inputs.composed.get_mut(&m).unwrap().main_syscalls.insert(name);
        }
        3 => {
            w.inputs.pool_builtins.insert(m.clone());
            w.inputs.composed.get_mut(&m).unwrap().pool_syscalls.insert(name);
        }
        4 => {
            w.baseline.main.insert(name);
        }
        5 => {
            w.baseline.pool.insert(name);
        }
        _ => {
            let bin = BINARIES.choose(rng).unwrap().to_string();
            w.inputs.profile.commands.get_mut(&bin).unwrap().insert(name);
        }
    }
    w
}

#[test]
fn growing_any_input_never_shrinks_a_list() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for _ in 0..60 {
        let mut w = random_world(&mut rng);
        for _ in 0..4 {
            let before = generate(&w);
            let next = grow(&mut rng, &w);
            let after = generate(&next);
            assert!(before.main.is_subset(&after.main), "{next:?}");
            assert!(before.pool.is_subset(&after.pool), "{next:?}");
            checked += 1;
            w = next;
        }
    }
    assert!(checked >= 100);
}

#[test]
fn lists_follow_the_union_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..100 {
        let w = random_world(&mut rng);
        let wl = generate(&w);
        let i = &w.inputs;
        let mut main = w.baseline.main.clone();
        let mut pool = BTreeSet::new();
        for m in &i.reachable {
            main.extend(i.composed[m].main_syscalls.iter().cloned());
            pool.extend(i.composed[m].pool_syscalls.iter().cloned());
        }
        for c in &i.commands {
            let bin = c.split(' ').next().unwrap().rsplit('/').next().unwrap();
            main.extend(i.profile.commands[bin].iter().cloned());
        }
        let pooled = i.reachable.iter().any(|m| i.pool_builtins.contains(m));
        if pooled {
            pool.extend(w.baseline.pool.iter().cloned());
        }
        assert_eq!(wl.main, main);
        assert_eq!(wl.pool, pool);
        assert_eq!(wl.mode == PoolMode::PoolRequired, pooled);
        assert!(w.baseline.main.is_subset(&wl.main));
        for name in wl.union() {
            assert!(!wl.provenance[&name].is_empty(), "{name}");
        }
    }
}

/// Strips `name` out of every place `src` could have contributed it.
fn remove_source(w: &mut World, src: &Source, name: &str) {
    match src {
        Source::EngineBaseline => {
            w.baseline.main.remove(name);
            w.baseline.pool.remove(name);
        }
        Source::Builtin(m) => {
            let e = w.inputs.composed.get_mut(m).unwrap();
            e.main_syscalls.remove(name);
            e.pool_syscalls.remove(name);
        }
        Source::Command(bin) => {
            w.inputs.profile.commands.get_mut(bin).unwrap().remove(name);
        }
    }
}

#[test]
fn removing_every_source_removes_the_syscall() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..60 {
        let w = random_world(&mut rng);
        let wl = generate(&w);
        for (name, sources) in &wl.provenance {
            let mut cut = w.clone();
            for src in sources {
                remove_source(&mut cut, src, name);
            }
            assert!(!generate(&cut).union().contains(name), "{name} {sources:?}");
            if sources.len() > 1 {
                let mut partial = w.clone();
                remove_source(&mut partial, sources.iter().next().unwrap(), name);
                assert!(generate(&partial).union().contains(name), "{name}");
            }
        }
    }
}

#[test]
fn policy_round_trips_reproduce_the_lists() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        let wl = generate(&random_world(&mut rng));
        let p = emit_policy(&wl, None);
        for back in [
            Policy::from_json_str(&p.to_json()).unwrap(),
            Policy::from_rules(&p.to_rules()).unwrap(),
        ] {
            assert_eq!(back, p);
            assert_eq!(back.main_allow.iter().cloned().collect::<BTreeSet<_>>(), wl.main);
            let pool: BTreeSet<String> = back.pool_allow.iter().cloned().collect();
            match wl.mode {
                PoolMode::PoolRequired => assert_eq!(pool, wl.pool),
                PoolMode::PoolFree => assert!(pool.is_empty()),
            }
        }
    }
}

#[test]
fn rules_list_one_sorted_allow_per_line() {
    let wl = generate_whitelist(
        &WhitelistInputs {
            reachable: [method(0)].into(),
            pool_builtins: [method(0)].into(),
            composed: [(
                method(0),
                ComposedEntry {
                    main_syscalls: ["write".to_string()].into(),
                    pool_syscalls: ["openat".to_string()].into(),
                },
            )]
            .into(),
            ..Default::default()
        },
        &baseline(),
        &table(),
        true,
    )
    .unwrap();
    let text = emit_policy(&wl, None).to_rules();
    let (pool, main) = text.split_once("[main]").unwrap();
    let allows = |s: &str| {
        s.lines()
            .filter_map(|l| l.strip_prefix("allow "))
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let (p, m) = (allows(pool), allows(main));
    assert!(p.windows(2).all(|w| w[0] < w[1]) && m.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(p.into_iter().collect::<BTreeSet<_>>(), wl.pool);
    assert_eq!(m.into_iter().collect::<BTreeSet<_>>(), wl.main);
}

#[test]
fn unmapped_builtin_is_error_or_warning() {
    let inputs = WhitelistInputs {
        reachable: [method(9)].into(),
        ..Default::default()
    };
    assert!(generate_whitelist(&inputs, &baseline(), &table(), true).is_err());
    let wl = generate_whitelist(&inputs, &baseline(), &table(), false).unwrap();
    assert_eq!(wl.main, baseline().main);
    assert_eq!(wl.warnings.len(), 1);
}
