//! Summaries of a run and the files written for it. Every number in a
//! [`RunReport`] is derived from data that is also written to the CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::config::ScenarioConfig;
use crate::kernel::TrueTime;
use crate::sim::{run_scenario, Diagnostics, ErrorSample, Level, NodeClass, RunOutput, SimError};
use crate::topology::Tier;

/// Published result for the PBS-versus-1588 energy comparison, printed next
/// to the measured values. It does not follow from the per-message costs.
pub const REFERENCE_SAVING_PCT: f64 = 84.0;
pub const REFERENCE_DELTA_J: f64 = 15.07;

/// Statistics of |error| over a set of samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorStats {
    pub samples: usize,
    pub min_abs_ns: u64,
    pub max_abs_ns: u64,
    pub mean_abs_ns: f64,
    /// Nearest-rank 99th percentile.
    pub p99_abs_ns: u64,
}

impl ErrorStats {
    pub fn from_errors(errors: impl IntoIterator<Item = i64>) -> Option<Self> {
        let mut abs: Vec<u64> = errors.into_iter().map(|e| e.unsigned_abs()).collect();
        if abs.is_empty() {
            return None;
        }
        abs.sort_unstable();
        let n = abs.len();
        let rank = (0.99 * n as f64).ceil() as usize;
        let sum: u128 = abs.iter().map(|&a| a as u128).sum();
        Some(ErrorStats {
            samples: n,
            min_abs_ns: abs[0],
            max_abs_ns: abs[n - 1],
            mean_abs_ns: sum as f64 / n as f64,
            p99_abs_ns: abs[rank.clamp(1, n) - 1],
        })
    }
}

/// First sampling instant from which every node stays within its bound
/// (routers `router_bound_ns`, leaves `leaf_bound_ns`) until the end.
pub fn convergence_time(
    samples: &[ErrorSample],
    is_router: impl Fn(crate::NodeId) -> bool,
    router_bound_ns: i64,
    leaf_bound_ns: i64,
) -> Option<TrueTime> {
    let mut last_bad: Option<TrueTime> = None;
    let mut times: Vec<TrueTime> = Vec::new();
    for s in samples {
        if times.last() != Some(&s.t) {
            times.push(s.t);
        }
        let bound = if is_router(s.node) {
            router_bound_ns
        } else {
            leaf_bound_ns
        };
        if s.error_ns.unsigned_abs() > bound as u64 {
            last_bad = Some(s.t);
        }
    }
    match last_bad {
        None => times.first().copied(),
        Some(bad) => times.into_iter().find(|&t| t > bad),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStats {
    pub nodes: usize,
    pub mean_consumed_j: f64,
    pub min_consumed_j: f64,
    pub max_consumed_j: f64,
    pub mean_tx_count: f64,
    pub mean_rx_count: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config_toml: String,
    pub end: TrueTime,
    pub convergence: Option<TrueTime>,
    /// Post-convergence |error| by node class.
    pub errors: BTreeMap<NodeClass, ErrorStats>,
    /// Per-cycle count of the configured kinds, in complete cycles.
    pub steady_messages: BTreeMap<Level, Option<u64>>,
    pub total_messages: BTreeMap<Level, u64>,
    pub energy: BTreeMap<NodeClass, EnergyStats>,
    pub diagnostics: Diagnostics,
}

impl RunReport {
    pub fn from_output(out: &RunOutput) -> Self {
        let cfg = &out.config;
        let convergence = convergence_time(
            &out.samples,
            |n| out.topology.node(n).map(|s| s.tier) == Some(Tier::Router),
            cfg.run.router_bound_ns,
            cfg.run.leaf_bound_ns,
        );
        let mut errors = BTreeMap::new();
        if let Some(c) = convergence {
            for class in NodeClass::ALL {
                let errs = out
                    .samples
                    .iter()
                    .filter(|s| s.t >= c && out.class_of(s.node) == class)
                    .map(|s| s.error_ns);
                if let Some(st) = ErrorStats::from_errors(errs) {
                    errors.insert(class, st);
                }
            }
        }
        let mut steady_messages = BTreeMap::new();
        let mut total_messages = BTreeMap::new();
        for level in Level::ALL {
            let kinds = cfg.counted_kinds(level == Level::Upper);
            steady_messages.insert(level, out.counter.steady_per_cycle(level, &kinds));
            total_messages.insert(level, out.counter.total(level, &kinds));
        }
        let mut energy = BTreeMap::new();
        for class in NodeClass::ALL {
            let nodes = out.nodes_of(class);
            if nodes.is_empty() {
                continue;
            }
            let e: Vec<_> = nodes.iter().map(|&n| out.ledger.node(n).expect("known node")).collect();
            let consumed: Vec<f64> = e.iter().map(|x| x.consumed().as_joules()).collect();
            let k = nodes.len() as f64;
            energy.insert(
                class,
                EnergyStats {
                    nodes: nodes.len(),
                    mean_consumed_j: consumed.iter().sum::<f64>() / k,
                    min_consumed_j: consumed.iter().copied().fold(f64::INFINITY, f64::min),
                    max_consumed_j: consumed.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean_tx_count: e.iter().map(|x| x.tx_count as f64).sum::<f64>() / k,
                    mean_rx_count: e.iter().map(|x| x.rx_count as f64).sum::<f64>() / k,
                },
            );
        }
        RunReport {
            config_toml: cfg.to_toml(),
            end: out.end,
            convergence,
            errors,
            steady_messages,
            total_messages,
            energy,
            diagnostics: out.diagnostics,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "simulated until: {:.3} s", self.end.as_secs_f64());
        match self.convergence {
            Some(t) => {
                let _ = writeln!(s, "convergence time: {:.3} s", t.as_secs_f64());
            }
            None => {
                let _ = writeln!(s, "convergence time: not converged");
            }
        }
        let _ = writeln!(s, "\n[post-convergence |error|, ns]");
        let _ = writeln!(s, "class,samples,min,max,mean,p99");
        for (c, e) in &self.errors {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.3},{}",
                c, e.samples, e.min_abs_ns, e.max_abs_ns, e.mean_abs_ns, e.p99_abs_ns
            );
        }
        let _ = writeln!(s, "\n[messages, counted kinds]");
        let _ = writeln!(s, "level,per_cycle,total");
        for (l, n) in &self.steady_messages {
            let per = n.map_or("irregular".to_string(), |n| n.to_string());
            let _ = writeln!(s, "{},{},{}", l.as_str(), per, self.total_messages[l]);
        }
        let _ = writeln!(s, "\n[energy, J]");
        let _ = writeln!(s, "class,nodes,mean,min,max,mean_tx,mean_rx");
        for (c, e) in &self.energy {
            let _ = writeln!(
                s,
                "{},{},{:.6},{:.6},{:.6},{:.3},{:.3}",
                c,
                e.nodes,
                e.mean_consumed_j,
                e.min_consumed_j,
                e.max_consumed_j,
                e.mean_tx_count,
                e.mean_rx_count
            );
        }
        let d = &self.diagnostics;
        let _ = writeln!(s, "\n[diagnostics]");
        let _ = writeln!(s, "events_dispatched = {}", d.events_dispatched);
        let _ = writeln!(s, "exchanges_completed = {}", d.exchanges_completed);
        let _ = writeln!(s, "exchanges_aborted = {}", d.exchanges_aborted);
        let _ = writeln!(s, "slave_discards = {}", d.slave_discards);
        let _ = writeln!(s, "listener_discards = {}", d.listener_discards);
        let _ = writeln!(s, "deferred_requests = {}", d.deferred_requests);
        let _ = writeln!(s, "lost_deliveries = {}", d.lost_deliveries);
        let _ = writeln!(s, "negative_delays = {}", d.negative_delays);
        let _ = writeln!(s, "ignored_charges = {}", d.ignored_charges);
        let _ = writeln!(s, "\n[config]");
        s.push_str(&self.config_toml);
        s
    }
}

pub fn write_errors_csv<W: Write>(samples: &[ErrorSample], mut w: W) -> io::Result<()> {
    writeln!(w, "true_time_ns,node_id,reference_id,error_ns")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", s.t.0, s.node, s.reference, s.error_ns)?;
    }
    Ok(())
}

/// Writes `errors.csv`, `energy.csv`, `messages.csv` and `report.txt`.
pub fn write_outputs(out: &RunOutput, report: &RunReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("errors.csv"))?);
    write_errors_csv(&out.samples, &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("energy.csv"))?);
    out.ledger
        .write_csv(&mut w, |n| out.class_of(n).as_str().to_string())?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("messages.csv"))?);
    out.counter.write_csv(&mut w)?;
    w.flush()?;
    fs::write(dir.join("report.txt"), report.render())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub a: RunReport,
    pub b: RunReport,
    /// Mean consumption of a leaf listener.
    pub pbs_node_j: f64,
    /// Mean consumption of a leaf running the two-way exchange, taken from
    /// the run with more such leaves.
    pub ieee_node_j: f64,
    /// Per-cycle radio cost difference, 1588 slave minus listener.
    pub per_cycle_delta_j: f64,
    /// Steady per-cycle counts, b over a, per level.
    pub message_ratio: BTreeMap<Level, Option<f64>>,
}

impl ComparisonReport {
    pub fn delta_j(&self) -> f64 {
        self.ieee_node_j - self.pbs_node_j
    }

    pub fn saving_pct(&self) -> f64 {
        100.0 * self.delta_j() / self.ieee_node_j
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[energy comparison]");
        let _ = writeln!(s, "pbs_node_j = {:.6}", self.pbs_node_j);
        let _ = writeln!(s, "ieee1588_node_j = {:.6}", self.ieee_node_j);
        let _ = writeln!(s, "delta_j = {:.6}", self.delta_j());
        let _ = writeln!(s, "saving_pct = {:.3}", self.saving_pct());
        let _ = writeln!(s, "per_cycle_delta_j = {:.6}", self.per_cycle_delta_j);
        let _ = writeln!(
            s,
            "reference_claim = {REFERENCE_SAVING_PCT}% saving, {REFERENCE_DELTA_J} J delta \
             (not derivable from per-message costs; measured values above)"
        );
        let _ = writeln!(s, "\n[message ratio b/a per cycle]");
        for (l, r) in &self.message_ratio {
            let r = r.map_or("n/a".to_string(), |r| format!("{r:.4}"));
            let _ = writeln!(s, "{} = {}", l.as_str(), r);
        }
        let _ = writeln!(s, "\n===== run a =====");
        s.push_str(&self.a.render());
        let _ = writeln!(s, "\n===== run b =====");
        s.push_str(&self.b.render());
        s
    }
}

/// Runs both configs and compares their energy and message counts. Both must
/// describe the same network and seed.
pub fn compare_protocols(
    a: &ScenarioConfig,
    b: &ScenarioConfig,
) -> Result<(RunOutput, RunOutput, ComparisonReport), SimError> {
    if a.seed != b.seed {
        return Err(SimError::Mismatch(format!(
            "seeds differ ({} vs {})",
            a.seed, b.seed
        )));
    }
    let out_a = run_scenario(a)?;
    let out_b = run_scenario(b)?;
    if out_a.topology != out_b.topology {
        return Err(SimError::Mismatch("topologies differ".into()));
    }
    let ra = RunReport::from_output(&out_a);
    let rb = RunReport::from_output(&out_b);
    let mean = |r: &RunReport, c: NodeClass| r.energy.get(&c).map(|e| (e.nodes, e.mean_consumed_j));
    let pbs_node_j = mean(&ra, NodeClass::LeafListener)
        .or_else(|| mean(&rb, NodeClass::LeafListener))
        .map_or(0.0, |(_, j)| j);
    let ieee_node_j = match (mean(&ra, NodeClass::LeafSlave), mean(&rb, NodeClass::LeafSlave)) {
        (Some(x), Some(y)) => {
            if y.0 > x.0 {
                y.1
            } else {
                x.1
            }
        }
        (Some(x), None) | (None, Some(x)) => x.1,
        (None, None) => 0.0,
    };
    let model = a.energy.cost_model();
    let per_cycle_delta_j = model.tx_charge().as_joules() - model.rx_charge().as_joules();
    let message_ratio = Level::ALL
        .into_iter()
        .map(|l| {
            let r = match (ra.steady_messages[&l], rb.steady_messages[&l]) {
                (Some(x), Some(y)) if x > 0 => Some(y as f64 / x as f64),
                _ => None,
            };
            (l, r)
        })
        .collect();
    let report = ComparisonReport {
        a: ra,
        b: rb,
        pbs_node_j,
        ieee_node_j,
        per_cycle_delta_j,
        message_ratio,
    };
    Ok((out_a, out_b, report))
}
