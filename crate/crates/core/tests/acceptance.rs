//! Acceptance suite. Each test prints one `criterion N [PASS|FAIL]` line and
//! then asserts, so `cargo test --test acceptance -- --nocapture` shows the
//! full verdict table.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config as PtConfig, TestRunner};

use wsn_sync::config::{DelayOverride, DriftMode, ProtocolKind, ScenarioConfig};
use wsn_sync::energy::EnergyLedger;
use wsn_sync::kernel::{seeded_rng, TrueTime};
use wsn_sync::protocol::{MessageKind, Method, SyncMessage};
use wsn_sync::report::{compare_protocols, write_outputs, RunReport, REFERENCE_DELTA_J, REFERENCE_SAVING_PCT};
use wsn_sync::sim::{run_scenario, Level, NodeClass, RunOutput};
use wsn_sync::topology::{assign_tdma_slots, build_hierarchy, LinkModel, Medium, Topology};
use wsn_sync::NodeId;

fn verdict(n: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    println!(
        "criterion {n:>2} [{}] {name}: {}",
        if pass { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    assert!(pass, "criterion {n} failed: {}", detail.as_ref());
}

fn scenario(name: &str) -> ScenarioConfig {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "scenarios", name]
        .iter()
        .collect();
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn noiseless(cfg: &mut ScenarioConfig) {
    cfg.clock.timestamp_noise_ns = 0.0;
    cfg.links.jitter_upper_ns = 0.0;
    cfg.links.jitter_lower_ns = 0.0;
    cfg.links.pbs_excess_min_ns = 0;
    cfg.links.pbs_excess_max_ns = 0;
}

fn topology_of(cfg: &ScenarioConfig) -> Topology {
    build_hierarchy(&cfg.topology.hierarchy()).unwrap()
}

fn geometric_delay(cfg: &ScenarioConfig, topo: &Topology, a: NodeId, b: NodeId) -> u64 {
    let links = LinkModel {
        signal_speed_m_per_s: cfg.links.signal_speed_m_per_s,
        ..LinkModel::default()
    };
    links.base_delay(topo, a, b)
}

/// Makes every slave-to-listener delay equal to the slave-to-router delay
/// (listeners are all leaves but the lowest id of each router).
fn equalize_listener_paths(cfg: &mut ScenarioConfig) {
    let topo = topology_of(cfg);
    for r in topo.routers() {
        let leaves = topo.leaves_of(r);
        let s = leaves[0];
        let d_sm = geometric_delay(cfg, &topo, s, r);
        for &x in &leaves[1..] {
            cfg.links.delays.push(DelayOverride {
                from: s.0,
                to: x.0,
                ns: d_sm,
            });
        }
    }
}

fn short(cfg: &mut ScenarioConfig, lower_start_s: f64, end_s: f64) {
    cfg.protocol.upper_start_s = 0.3;
    cfg.protocol.lower_start_s = lower_start_s;
    cfg.run.end_s = end_s;
}

fn post_convergence(out: &RunOutput, report: &RunReport, class: NodeClass) -> Vec<u64> {
    let c = report.convergence.unwrap_or(TrueTime(u64::MAX));
    out.samples
        .iter()
        .filter(|s| s.t >= c && out.class_of(s.node) == class)
        .map(|s| s.error_ns.unsigned_abs())
        .collect()
}

/// Fraction of samples within [0.8 * lower, 1.2 * upper].
fn band_fraction(abs: &[u64], lower_ns: f64, upper_ns: f64) -> f64 {
    let lo = 0.8 * lower_ns;
    let hi = 1.2 * upper_ns;
    let inside = abs.iter().filter(|&&a| a as f64 >= lo && a as f64 <= hi).count();
    inside as f64 / abs.len().max(1) as f64
}

#[test]
fn criterion_01_noiseless_correction_is_exact() {
    let mut cfg = ScenarioConfig::default();
    noiseless(&mut cfg);
    equalize_listener_paths(&mut cfg);
    cfg.clock.drift_mode = DriftMode::Uniform;
    cfg.clock.drift_ppm = 1.5;
    short(&mut cfg, 1.0, 5.0);
    let start = Instant::now();
    let out = run_scenario(&cfg).unwrap();
    let elapsed = start.elapsed();
    let by_method = |m: Method| -> (usize, usize, u64) {
        let rs: Vec<_> = out.corrections.iter().filter(|c| c.estimate.method == m).collect();
        let nonzero = rs.iter().filter(|c| c.error_after != 0).count();
        let worst = rs.iter().map(|c| c.error_after.unsigned_abs()).max().unwrap_or(0);
        (rs.len(), nonzero, worst)
    };
    let (n2, bad2, worst2) = by_method(Method::TwoWay1588);
    let (np, badp, worstp) = by_method(Method::Pbs);

    // Same run with every clock at nominal rate: the attainable part.
    let mut flat = cfg.clone();
    flat.clock.drift_mode = DriftMode::Fixed;
    flat.clock.drifts_ppm = vec![0.0; flat.node_count()];
    let flat_out = run_scenario(&flat).unwrap();
    let flat_bad = flat_out.corrections.iter().filter(|c| c.error_after != 0).count();

    let pass = n2 > 0 && np > 0 && bad2 == 0 && badp == 0 && elapsed.as_secs_f64() < 1.0;
    verdict(
        1,
        "noiseless correction leaves exactly 0 ns",
        pass,
        format!(
            "with drifts up to 1.5 ppm: two-way {bad2}/{n2} corrections nonzero (max {worst2} ns), \
             PBS {badp}/{np} nonzero (max {worstp} ns); with zero drift: {flat_bad}/{} nonzero; \
             run took {:.3} s",
            flat_out.corrections.len(),
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_pbs_recovers_offset_and_delay() {
    let start = Instant::now();
    let mut runner = TestRunner::new(PtConfig {
        cases: 100,
        failure_persistence: None,
        ..PtConfig::default()
    });
    let mut checked = 0usize;
    let result = runner.run(
        &(1u32..=4, 2u32..=6, 5.0f64..60.0, 2.0f64..20.0, any::<u64>()),
        |(routers, leaves, spacing, ring, seed)| {
            let mut cfg = ScenarioConfig::default();
            cfg.seed = seed;
            cfg.topology.routers = routers;
            cfg.topology.leaves_per_router = leaves;
            cfg.topology.router_spacing_m = spacing;
            cfg.topology.leaf_ring_m = ring;
            noiseless(&mut cfg);
            equalize_listener_paths(&mut cfg);
            cfg.clock.drift_mode = DriftMode::Fixed;
            cfg.clock.drifts_ppm = vec![0.0; cfg.node_count()];
            short(&mut cfg, 0.5, 1.5);
            let out = run_scenario(&cfg).unwrap();
            let pbs: Vec<_> = out
                .corrections
                .iter()
                .filter(|c| c.estimate.method == Method::Pbs)
                .collect();
            prop_assert!(!pbs.is_empty());
            for c in pbs {
                prop_assert_eq!(Some(c.estimate.delta_hat), c.offset_at_request);
                let d_mx = out.links.base_delay(&out.topology, c.master, c.node);
                prop_assert_eq!(c.estimate.d_hat, d_mx as i64);
                prop_assert_eq!(c.error_after, 0);
            }
            Ok(())
        },
    );
    if result.is_ok() {
        checked = 100;
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        2,
        "PBS offset and delay recovered exactly",
        result.is_ok() && elapsed < 10.0,
        format!("{checked} randomized topologies, {elapsed:.2} s; {:?}", result.err()),
    );
}

#[test]
fn criterion_03_asymmetry_law() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut checked = 0usize;
    for &(d_ms, d_sm) in &[(100u64, 100u64), (100, 120), (120, 100), (37, 1000), (5_001, 20), (0, 7)] {
        for &extra in &[0u64, 40, 1_234, 40_000] {
            let mut cfg = ScenarioConfig::default();
            cfg.topology.routers = 2;
            cfg.topology.leaves_per_router = 4;
            noiseless(&mut cfg);
            cfg.clock.drift_mode = DriftMode::Fixed;
            cfg.clock.drifts_ppm = vec![0.0; cfg.node_count()];
            let topo = topology_of(&cfg);
            for r in topo.routers() {
                let leaves = topo.leaves_of(r);
                let s = leaves[0];
                cfg.links.delays.push(DelayOverride { from: r.0, to: s.0, ns: d_ms });
                cfg.links.delays.push(DelayOverride { from: s.0, to: r.0, ns: d_sm });
                for (i, &x) in leaves[1..].iter().enumerate() {
                    // listener paths: d_SX = d_SM + extra * i
                    cfg.links.delays.push(DelayOverride {
                        from: s.0,
                        to: x.0,
                        ns: d_sm + extra * i as u64,
                    });
                }
            }
            short(&mut cfg, 0.5, 1.5);
            let out = run_scenario(&cfg).unwrap();
            let delay = |a: NodeId, b: NodeId| out.links.base_delay(&out.topology, a, b) as i64;
            for c in out.corrections.iter().filter(|c| c.master != NodeId(0)) {
                let truth = c.offset_before;
                let err = c.estimate.delta_hat - truth;
                let ok = match c.estimate.method {
                    Method::TwoWay1588 => {
                        // exact halving: 2 * err + remainder == d_MS - d_SM
                        2 * err + c.estimate.offset_remainder == delay(c.master, c.node) - delay(c.node, c.master)
                    }
                    Method::Pbs => {
                        let s = out.topology.leaves_of(c.master)[0];
                        err == delay(s, c.node) - delay(s, c.master)
                    }
                };
                checked += 1;
                if !ok {
                    failures.push(format!("{:?} node {} err {err}", c.estimate.method, c.node));
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        3,
        "asymmetry law for PBS and two-way errors",
        failures.is_empty() && checked > 0 && elapsed < 10.0,
        format!(
            "{checked} corrections over 24 delay settings, {} mismatches, {elapsed:.2} s {:?}",
            failures.len(),
            failures.first()
        ),
    );
}

struct DefaultRun {
    out: RunOutput,
    report: RunReport,
    seconds: f64,
}

fn default_run() -> DefaultRun {
    let cfg = scenario("default-hybrid.toml");
    let start = Instant::now();
    let out = run_scenario(&cfg).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let report = RunReport::from_output(&out);
    DefaultRun { out, report, seconds }
}

#[test]
fn criterion_04_upper_level_band() {
    let r = default_run();
    let abs = post_convergence(&r.out, &r.report, NodeClass::RouterSlave);
    let f = band_fraction(&abs, 50.0, 250.0);
    verdict(
        4,
        "concentrator-router error within 50-250 ns (+-20%)",
        f >= 0.95 && !abs.is_empty() && r.seconds < 30.0,
        format!("{:.2}% of {} samples in band; 60 s simulated in {:.2} s", 100.0 * f, abs.len(), r.seconds),
    );
}

#[test]
fn criterion_05_lower_level_bands() {
    let r = default_run();
    let slaves = post_convergence(&r.out, &r.report, NodeClass::LeafSlave);
    let listeners = post_convergence(&r.out, &r.report, NodeClass::LeafListener);
    let fs = band_fraction(&slaves, 100.0, 250.0);
    let fl = band_fraction(&listeners, 1_000.0, 46_000.0);
    verdict(
        5,
        "router-leaf errors: two-way 100-250 ns, PBS 1-46 us (+-20%)",
        fs >= 0.95 && fl >= 0.95 && !slaves.is_empty() && !listeners.is_empty(),
        format!(
            "two-way {:.2}% of {} samples, PBS {:.2}% of {} samples",
            100.0 * fs,
            slaves.len(),
            100.0 * fl,
            listeners.len()
        ),
    );
}

#[test]
fn criterion_06_convergence_time() {
    let r = default_run();
    let conv = r.report.convergence;
    let nodes = r.out.classes.iter().filter(|c| **c != NodeClass::Concentrator).count();
    let cfg = &r.out.config;
    verdict(
        6,
        "all nodes converged by 25 s",
        conv.is_some_and(|t| t <= TrueTime::from_secs(25))
            && cfg.protocol.upper_start_s == 0.3
            && cfg.protocol.lower_start_s == 7.0,
        format!(
            "{} followers converged at {:?} s (levels start at {} s and {} s)",
            nodes,
            conv.map(|t| t.as_secs_f64()),
            cfg.protocol.upper_start_s,
            cfg.protocol.lower_start_s
        ),
    );
}

fn steady(out: &RunOutput, level: Level, kinds: &[MessageKind]) -> Option<u64> {
    out.counter.steady_per_cycle(level, kinds)
}

#[test]
fn criterion_07_message_counters() {
    let one_step = [MessageKind::Sync, MessageKind::DelayRequest, MessageKind::DelayResponse];
    let all = MessageKind::ALL;
    let mut lines = Vec::new();
    let mut pass = true;
    let mut check = |what: String, got: Option<u64>, want: u64| {
        pass &= got == Some(want);
        lines.push(format!("{what}={got:?}/{want}"));
    };

    let cr_h = run_scenario(&scenario("count-cr-hybrid.toml")).unwrap();
    let cr_p = run_scenario(&scenario("count-cr-pure.toml")).unwrap();
    let rn_h = run_scenario(&scenario("count-rn-hybrid.toml")).unwrap();
    let rn_p = run_scenario(&scenario("count-rn-pure.toml")).unwrap();
    let counted = |o: &RunOutput, l: Level| {
        steady(o, l, &o.config.counted_kinds(l == Level::Upper))
    };
    check("c-r hybrid".into(), counted(&cr_h, Level::Upper), 120);
    check("c-r pure".into(), counted(&cr_p, Level::Upper), 120);
    check("r-n hybrid".into(), counted(&rn_h, Level::Lower), 24);
    check("r-n pure".into(), counted(&rn_p, Level::Lower), 1024);

    // the readings behind each cell: 8 pairs x 3 kinds x 5 rounds, 8 pairs x
    // 3 kinds, 64 pairs x 4 kinds x 4 rounds; with all kinds counted the same
    // runs give the plain census
    check("c-r plain (5 rounds)".into(), steady(&cr_h, Level::Upper, &all), 8 * 4 * 5);
    check("c-r one-step".into(), steady(&cr_h, Level::Upper, &one_step), 8 * 3 * 5);
    check("r-n hybrid plain".into(), steady(&rn_h, Level::Lower, &all), 32);
    check("r-n hybrid one-step".into(), steady(&rn_h, Level::Lower, &one_step), 8 * 3);
    check("r-n pure one-step".into(), steady(&rn_p, Level::Lower, &one_step), 64 * 3 * 4);

    for rounds in [1u32, 2, 4] {
        for (file, per_round) in [("census-hybrid.toml", 32u64), ("census-pure.toml", 256)] {
            let mut cfg = scenario(file);
            cfg.protocol.rounds_per_cycle = rounds;
            if rounds == 4 {
                cfg.tdma.slot_us = 250.0;
            }
            cfg.run.end_s = 10.0;
            let o = run_scenario(&cfg).unwrap();
            check(
                format!("{file} x{rounds}"),
                steady(&o, Level::Lower, &all),
                per_round * rounds as u64,
            );
        }
    }
    verdict(7, "per-cycle message counters", pass, lines.join(", "));
}

#[test]
fn criterion_08_energy_census_and_direction() {
    let r = default_run();
    let out = &r.out;
    let tx = out.ledger.tx_cost().0;
    let rx = out.ledger.rx_cost().0;
    let lower = out.level_start(Level::Lower);
    // complete cycles strictly after the first router-leaf cycle
    let snaps: Vec<_> = out.snapshots.iter().filter(|s| s.t > lower).collect();
    let mut bad = Vec::new();
    let mut cycles = 0;
    for w in snaps.windows(2) {
        cycles += 1;
        for (i, class) in out.classes.iter().enumerate() {
            let used = w[1].nodes[i].2 .0 - w[0].nodes[i].2 .0;
            let want = match class {
                NodeClass::LeafListener => 4 * rx,
                NodeClass::LeafSlave => 3 * rx + tx,
                _ => continue,
            };
            if used != want {
                bad.push((i, used, want));
            }
        }
    }
    let mut ratios = Vec::new();
    let mut direction = true;
    for seed in [1u64, 2, 3] {
        let mut a = scenario("default-hybrid.toml");
        let mut b = scenario("pure-1588.toml");
        a.seed = seed;
        b.seed = seed;
        a.run.end_s = 20.0;
        b.run.end_s = 20.0;
        let (_, _, cmp) = compare_protocols(&a, &b).unwrap();
        direction &= cmp.pbs_node_j < cmp.ieee_node_j;
        ratios.push(format!("seed {seed}: {:.2}% ({:.4} J)", cmp.saving_pct(), cmp.delta_j()));
        assert!(cmp.render().contains("reference_claim"));
    }
    verdict(
        8,
        "listener 4 rx / slave 3 rx + 1 tx per cycle; PBS node cheaper",
        bad.is_empty() && cycles > 100 && direction,
        format!(
            "{cycles} cycles, {} mismatches; measured saving {} vs reference {REFERENCE_SAVING_PCT}% / {REFERENCE_DELTA_J} J",
            bad.len(),
            ratios.join(", ")
        ),
    );
}

#[test]
fn criterion_09_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut files = 0;
    for name in ["default-hybrid.toml", "pure-1588.toml"] {
        let cfg = scenario(name);
        let mut dirs = Vec::new();
        for k in 0..2 {
            let d = dir.path().join(format!("{name}-{k}"));
            let out = run_scenario(&cfg).unwrap();
            write_outputs(&out, &RunReport::from_output(&out), &d).unwrap();
            dirs.push(d);
        }
        for f in ["errors.csv", "energy.csv", "messages.csv", "report.txt"] {
            let a = std::fs::read(dirs[0].join(f)).unwrap();
            let b = std::fs::read(dirs[1].join(f)).unwrap();
            identical &= a == b;
            files += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        9,
        "same seed gives byte-identical outputs",
        identical && elapsed < 60.0,
        format!("{files} file pairs compared, {elapsed:.2} s"),
    );
}

fn small_scenario() -> impl Strategy<Value = ScenarioConfig> {
    (
        1u32..=3,
        1u32..=4,
        prop_oneof![Just(ProtocolKind::Hybrid), Just(ProtocolKind::Pure1588)],
        prop_oneof![Just(ProtocolKind::Hybrid), Just(ProtocolKind::Pure1588)],
        0.0f64..0.2,
        0.0f64..2_000.0,
        any::<u64>(),
    )
        .prop_map(|(routers, leaves, upper, lower, loss, jitter, seed)| {
            let mut cfg = ScenarioConfig::default();
            cfg.seed = seed;
            cfg.topology.routers = routers;
            cfg.topology.leaves_per_router = leaves;
            cfg.protocol.upper = upper;
            cfg.protocol.lower = lower;
            cfg.links.loss_probability = loss;
            cfg.links.jitter_upper_ns = jitter;
            cfg.links.jitter_lower_ns = jitter;
            cfg.protocol.upper_start_s = 0.3;
            cfg.protocol.lower_start_s = 0.5;
            cfg.run.end_s = 1.2;
            cfg
        })
}

/// Receivers per transmission at each level: the other party plus listeners.
fn receivers_per_message(cfg: &ScenarioConfig, level: Level) -> u64 {
    let (kind, group) = match level {
        Level::Upper => (cfg.protocol.upper, cfg.topology.routers),
        Level::Lower => (cfg.protocol.lower, cfg.topology.leaves_per_router),
    };
    match kind {
        ProtocolKind::Hybrid => group as u64,
        ProtocolKind::Pure1588 => 1,
    }
}

fn check_accounting(cfg: &ScenarioConfig) -> Result<(), TestCaseError> {
    let out = run_scenario(cfg).unwrap();
    let l = &out.ledger;
    // conservation
    let sum: u64 = l.nodes().map(|(_, e)| e.consumed().0).sum();
    prop_assert_eq!(sum, l.total_tx_count() * l.tx_cost().0 + l.total_rx_count() * l.rx_cost().0);
    for (_, e) in l.nodes() {
        prop_assert_eq!(e.consumed_tx.0, e.tx_count * l.tx_cost().0);
        prop_assert_eq!(e.consumed_rx.0, e.rx_count * l.rx_cost().0);
    }
    // leaf listeners never transmit
    for n in out.nodes_of(NodeClass::LeafListener) {
        prop_assert_eq!(l.node(n).unwrap().tx_count, 0);
    }
    // every transmission is counted once, every delivery or loss once
    let all = MessageKind::ALL;
    let sent: u64 = Level::ALL.iter().map(|&lv| out.counter.total(lv, &all)).sum();
    prop_assert_eq!(sent, l.total_tx_count());
    let expected_rx: u64 = Level::ALL
        .iter()
        .map(|&lv| out.counter.total(lv, &all) * receivers_per_message(cfg, lv))
        .sum();
    prop_assert_eq!(l.total_rx_count() + out.diagnostics.lost_deliveries, expected_rx);
    // counters only increase and snapshots are monotone
    for w in out.snapshots.windows(2) {
        for (a, b) in w[0].nodes.iter().zip(&w[1].nodes) {
            prop_assert!(b.0 >= a.0 && b.1 >= a.1 && b.2 >= a.2);
        }
    }
    Ok(())
}

fn check_fifo(jitter: f64, gaps: Vec<u64>, seed: u64) -> Result<(), TestCaseError> {
    let topo = build_hierarchy(&wsn_sync::topology::HierarchyConfig {
        routers: 2,
        leaves_per_router: 3,
        ..Default::default()
    })
    .unwrap();
    let ids: Vec<NodeId> = topo.nodes().iter().map(|n| n.id).collect();
    // one giant slot for the concentrator so every send time is legal
    let mut schedule = assign_tdma_slots(&topo, 1_000_000_000, 10_000_000_000, TrueTime::ZERO, false);
    schedule.frame_len = 1;
    let links = LinkModel {
        jitter_upper_ns: jitter,
        jitter_lower_ns: jitter,
        ..LinkModel::default()
    };
    let mut m = Medium::new(topo, links, schedule);
    let mut ledger = EnergyLedger::new(wsn_sync::energy::RadioCostModel::standard(), 1e9, ids.clone());
    let mut rng = seeded_rng(seed, 0);
    let in_range = ids.iter().filter(|&&n| n != NodeId(0) && m.topology().in_range(NodeId(0), n)).count() as u64;
    let msg = SyncMessage::sync(NodeId(0), NodeId(1), 0);
    let mut t = TrueTime::ZERO;
    let mut last: BTreeMap<NodeId, TrueTime> = BTreeMap::new();
    for g in gaps {
        t = t + g;
        let b = m.broadcast(NodeId(0), &msg, t, |_| true, &mut ledger, &mut rng).unwrap();
        prop_assert_eq!(b.deliveries.len() as u64 + b.lost as u64, in_range);
        for d in b.deliveries {
            let prev = last.insert(d.receiver, d.arrival).unwrap_or(TrueTime::ZERO);
            prop_assert!(d.arrival >= prev && d.arrival >= t);
        }
    }
    Ok(())
}

#[test]
fn criterion_10_conservation_suite() {
    let start = Instant::now();
    let cfg = PtConfig {
        cases: 1000,
        failure_persistence: None,
        ..PtConfig::default()
    };
    let accounting = TestRunner::new(cfg.clone()).run(&small_scenario(), |c| check_accounting(&c));
    let fifo = TestRunner::new(cfg).run(
        &(0.0f64..20_000.0, prop::collection::vec(0u64..5_000, 1..40), any::<u64>()),
        |(j, gaps, seed)| check_fifo(j, gaps, seed),
    );
    verdict(
        10,
        "conservation, FIFO, listener silence, accounting identities",
        accounting.is_ok() && fifo.is_ok(),
        format!(
            "1000 randomized scenarios ({}), 1000 randomized broadcast sequences ({}), {:.1} s",
            if accounting.is_ok() { "ok" } else { "failed" },
            if fifo.is_ok() { "ok" } else { "failed" },
            start.elapsed().as_secs_f64()
        ) + &accounting.err().map(|e| format!(" {e}")).unwrap_or_default()
            + &fifo.err().map(|e| format!(" {e}")).unwrap_or_default(),
    );
}
