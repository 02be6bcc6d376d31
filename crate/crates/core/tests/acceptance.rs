//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion.
//!
//! Statistical criteria report instead of aborting, so an unmet target shows
//! up as a `FAIL` line while the target still exits 0. Set
//! `LATNET_ACCEPT_STRICT=1` to exit 1 on any `FAIL`, and
//! `LATNET_ACCEPT_ONLY=ordering,support` to run a subset.

use std::process::{Command, ExitCode};
use std::time::Instant;

use latnet_core::layered::LayeredEdgeKind;
use latnet_core::lp::{max_scaling, min_cost};
use latnet_core::matching::MatcherConfig;
use latnet_core::sim::RunSummary;
use latnet_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Bisection tolerance on θ*, in multiples of the base rate.
const BISECTION_TOL: f64 = 1e-3;
/// Agreement between the single θ program and the frozen values.
const THETA_LP_TOL: f64 = 1e-6;
/// Boundary θ* at a base rate of 10 Mbps per client, frozen from the LP
/// oracle and matching the compute-budget count in `compute_bound`.
const GOLDEN_THETA: [(usize, f64); 3] = [(5, 100.0 / 3.0), (6, 500.0 / 9.0), (7, 550.0 / 9.0)];
/// h* at 100 Mbps per client, in cost per slot, frozen from the LP oracle.
const GOLDEN_H_STAR: [(usize, f64); 2] = [(6, 4.4), (7, 4.4)];
const H_STAR_TOL: f64 = 1e-6;

const KNEE_HORIZON: usize = 200_000;
const KNEE_BASE: f64 = 0.8;
const KNEE_FACTOR: f64 = 10.0;
const KNEE_TOL: f64 = 0.05;
const KNEE_GRID: [f64; 19] = [
    0.85, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 1.0, 1.01, 1.02, 1.03, 1.04, 1.05, 1.06, 1.07, 1.08,
    1.09, 1.1, 1.2,
];

const RATE_MBPS: f64 = 100.0;
const LONG_HORIZON: usize = 1_000_000;
const EPSILON: f64 = 0.005;
/// Large V, in Mbit-scaled units before conversion.
const V_LARGE: f64 = 5e7;
const THROUGHPUT_TARGET_MBPS: f64 = 180.0;
const THROUGHPUT_TOL: f64 = 0.02;

/// Geometric V grid (Mbit-scaled) and its horizon.
const V_GRID: [f64; 5] = [
    1e5,
    3.162_277_660_168_379e5,
    1e6,
    3.162_277_660_168_379e6,
    1e7,
];
const V_GRID_HORIZON: usize = 3_000_000;
const SLOPE_RANGE: (f64, f64) = (0.5, 1.5);
const COST_GAP_MAX: f64 = 0.03;

const DCNC_HORIZON: usize = 1_000_000;
const DCNC_SMALL_V: f64 = 1e2;
const DCNC_RATIO_L7: f64 = 0.30;
const DCNC_RATIO_L15: f64 = 0.50;

const MATCH_GAP_MAX: f64 = 0.05;
const GROUP_LOAD_MAX: f64 = 1.01;

const PROPERTY_BUDGET_SECS: f64 = 60.0;
const SUPPORT_MAJORITY: f64 = 0.5;
/// Processing sites the L = 6 optimum may use (1-based).
const CHEAP_SITES: [usize; 2] = [5, 6];
const PATH_CLIENT_1: [usize; 5] = [1, 3, 6, 8, 9];
const PROC_CLIENT_1: usize = 6;
const PATH_CLIENT_2: [usize; 6] = [3, 6, 5, 7, 10, 11];
const PROC_CLIENT_2: usize = 5;

const SEED: u64 = 1;

struct Report {
    only: Option<Vec<String>>,
    results: Vec<(&'static str, bool)>,
}

impl Report {
    fn wants(&self, name: &str) -> bool {
        self.only
            .as_ref()
            .is_none_or(|o| o.iter().any(|n| n == name))
    }

    fn line(&mut self, name: &'static str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((name, pass));
    }
}

fn units() -> UnitSystem {
    UnitSystem::new(10.0).unwrap()
}

fn abilene(lifetime: usize, rate_mbps: f64) -> LayeredGraph {
    build_layered_graph(&builtin::abilene(&units(), lifetime, rate_mbps).unwrap()).unwrap()
}

fn simulate(model: &NetworkModel, policy: Policy, v: f64, horizon: usize) -> RunOutput {
    let cfg = SimConfig {
        policy,
        horizon,
        seed: SEED,
        controller: ControllerConfig::with_v(units().controller_v(v)),
        matcher: MatcherConfig::default(),
        ..SimConfig::default()
    };
    run(model, &cfg).unwrap()
}

fn mbps(units_per_slot: f64) -> f64 {
    units().to_mbps(units_per_slot)
}

fn second_half_cost(out: &RunOutput) -> f64 {
    let n = out.metrics.cost.len();
    MetricsRecord::window_mean(&out.metrics.cost, n / 2..n)
}

/// θ* from counting compute: a node can host a client's function when
/// `hops(s, n) + 1 + hops(n, d) ≤ L`, every site offers 2 × 50 Mbps, and
/// links never bind. Hall's condition over the two clients gives the bound.
fn compute_bound(lifetime: usize) -> f64 {
    let s = builtin::abilene(&units(), lifetime, 10.0).unwrap();
    let site = s.compute[0].budget_cpus * s.cpu_rate;
    let usable: Vec<Vec<bool>> = s
        .clients
        .iter()
        .map(|c| {
            let from = s.physical.hops_from(c.source);
            let to = s.physical.hops_to(c.destination);
            (0..s.physical.node_count())
                .map(|n| match (from[n], to[n]) {
                    (Some(a), Some(b)) => a + 1 + b <= lifetime,
                    _ => false,
                })
                .collect()
        })
        .collect();
    let count = |pick: &dyn Fn(usize) -> bool| {
        (0..s.physical.node_count()).filter(|&n| pick(n)).count() as f64
    };
    let need = |k: usize| s.clients[k].gamma * s.clients[k].total_rate();
    let one = count(&|n| usable[0][n]) * site / need(0);
    let two = count(&|n| usable[1][n]) * site / need(1);
    let both = count(&|n| usable[0][n] || usable[1][n]) * site / (need(0) + need(1));
    one.min(two).min(both)
}

fn ordering(r: &mut Report) {
    let mut theta = Vec::new();
    for l in 5..=15 {
        let lg = abilene(l, 10.0);
        theta.push((l, region_boundary(lg.model(), BISECTION_TOL).unwrap().theta));
    }
    let th = |l: usize| theta[l - 5].1;
    let mut ok = th(5) < th(6) && th(6) < th(7);
    ok &= (8..=15).all(|l| (th(l) - th(7)).abs() <= BISECTION_TOL);
    let mut notes = Vec::new();
    for &(l, golden) in &GOLDEN_THETA {
        let direct = max_scaling(abilene(l, 10.0).model()).unwrap();
        let bound = compute_bound(l);
        ok &= th(l) <= golden + 1e-9 && th(l) >= golden - BISECTION_TOL;
        ok &= (direct - golden).abs() <= THETA_LP_TOL;
        ok &= (bound - golden).abs() <= THETA_LP_TOL;
        notes.push(format!(
            "L={l} bisect {:.5} direct {:.5} count {:.5}",
            th(l),
            direct,
            bound
        ));
    }
    let plateau = (8..=15).map(|l| (th(l) - th(7)).abs()).fold(0.0, f64::max);
    r.line(
        "capacity-ordering",
        ok,
        format!(
            "{}; plateau spread L=8..15 {:.1e} (tol {BISECTION_TOL:.0e})",
            notes.join(", "),
            plateau
        ),
    );
}

/// Final ‖U‖₁/T of the virtual network alone.
fn virtual_backlog(model: &NetworkModel, horizon: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    rng.set_stream(0);
    let mut arrivals = ArrivalGenerator::new(model, ArrivalProcess::Poisson, rng);
    let mut ctl = Controller::new(model, ControllerConfig::with_v(0.0));
    let mut a = ArrivalSample::zeros(model);
    for _ in 0..horizon {
        arrivals.sample(&mut a);
        ctl.step(model, &a);
    }
    ctl.queues().l1() / horizon as f64
}

fn knee(r: &mut Report) {
    let mut ok = true;
    let mut notes = Vec::new();
    for &(l, golden) in &GOLDEN_THETA {
        let base = abilene(l, 10.0).into_model();
        let at = |m: f64| virtual_backlog(&base.scaled(m * golden).unwrap(), KNEE_HORIZON);
        let reference = at(KNEE_BASE);
        let found = KNEE_GRID
            .iter()
            .map(|&m| (m, at(m)))
            .find(|&(_, u)| u > KNEE_FACTOR * reference);
        match found {
            Some((m, u)) => {
                let err = (m - 1.0).abs();
                ok &= err <= KNEE_TOL + 1e-9;
                notes.push(format!(
                    "L={l} knee {m:.2}θ* (ratio {:.1}, off {:.0}%)",
                    u / reference,
                    100.0 * err
                ));
            }
            None => {
                ok = false;
                notes.push(format!(
                    "L={l} no knee up to {:.2}θ*",
                    KNEE_GRID[KNEE_GRID.len() - 1]
                ));
            }
        }
    }
    r.line(
        "stability-knee",
        ok,
        format!("{} (tol {:.0}%)", notes.join(", "), 100.0 * KNEE_TOL),
    );
}

struct LongRuns {
    v0: RunOutput,
    v_large: RunOutput,
}

fn long_runs() -> LongRuns {
    let m = abilene(7, RATE_MBPS).into_model();
    LongRuns {
        v0: simulate(&m, Policy::Proposed, 0.0, LONG_HORIZON),
        v_large: simulate(&m, Policy::Proposed, V_LARGE, LONG_HORIZON),
    }
}

fn reliability(r: &mut Report, runs: &LongRuns) {
    let m = abilene(7, RATE_MBPS).into_model();
    let target = m.required_rate();
    let eps = EPSILON * m.total_rate();
    let t = detect_convergence(&runs.v0.metrics.delivered, target, eps);
    let achieved = runs.v0.summary.delivered_mean / m.total_rate();
    r.line(
        "reliability",
        t.is_some(),
        format!(
            "t_0.005 = {t:?} over {LONG_HORIZON} slots; achieved {:.2}% vs {:.2}% needed",
            100.0 * achieved,
            100.0 * (target - eps) / m.total_rate()
        ),
    );
}

fn throughput(r: &mut Report, runs: &LongRuns) {
    let got = mbps(runs.v_large.summary.delivered_mean);
    let n = runs.v_large.metrics.delivered.len();
    let tail = mbps(MetricsRecord::window_mean(
        &runs.v_large.metrics.delivered,
        n / 2..n,
    ));
    let ok = (got - THROUGHPUT_TARGET_MBPS).abs() <= THROUGHPUT_TOL * THROUGHPUT_TARGET_MBPS;
    r.line(
        "timely-throughput",
        ok,
        format!(
            "{got:.2} Mbps over {LONG_HORIZON} slots (second half {tail:.2}) vs {THROUGHPUT_TARGET_MBPS} ± {:.0}%",
            100.0 * THROUGHPUT_TOL
        ),
    );
}

fn tradeoff(r: &mut Report) {
    let m = abilene(7, RATE_MBPS).into_model();
    let h_star = min_cost(&m).unwrap().1.objective;
    let target = m.required_rate();
    let eps = EPSILON * m.total_rate();
    let mut t = Vec::new();
    let mut gaps = Vec::new();
    for &v in &V_GRID {
        let out = simulate(&m, Policy::Proposed, v, V_GRID_HORIZON);
        t.push(detect_convergence(&out.metrics.delivered, target, eps));
        gaps.push((second_half_cost(&out) - h_star) / h_star);
    }
    // Missing convergence counts as infinite time.
    let tv = |i: usize| t[i].map_or(f64::INFINITY, |x| x as f64);
    let monotone_t = (1..V_GRID.len()).all(|i| tv(i) >= tv(i - 1));
    let finite: Vec<(f64, f64)> = V_GRID
        .iter()
        .zip(&t)
        .filter_map(|(&v, t)| t.map(|t| (v.ln(), (t.max(1) as f64).ln())))
        .collect();
    let slope = log_slope(&finite);
    let slope_ok = slope.is_some_and(|s| (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&s));
    let monotone_gap = gaps.windows(2).all(|w| w[1] <= w[0]);
    let last_gap = *gaps.last().unwrap();
    let ok = monotone_t && slope_ok && monotone_gap && last_gap < COST_GAP_MAX;
    let row: Vec<String> = V_GRID
        .iter()
        .zip(t.iter().zip(&gaps))
        .map(|(v, (t, g))| {
            format!(
                "V={v:.2e} t={} gap={:+.1}%",
                t.map_or("none".into(), |t| t.to_string()),
                100.0 * g
            )
        })
        .collect();
    r.line(
        "v-tradeoff",
        ok,
        format!(
            "{}; slope {} (want {:?}), t monotone {monotone_t}, gap monotone {monotone_gap}, last gap < {:.0}% {}",
            row.join(", "),
            slope.map_or("undefined".into(), |s| format!("{s:.2}")),
            SLOPE_RANGE,
            100.0 * COST_GAP_MAX,
            last_gap < COST_GAP_MAX
        ),
    );
}

/// Least-squares slope over the points where `t` increases; `None` with
/// fewer than two such points.
fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let start = points.windows(2).position(|w| w[1].1 > w[0].1)?;
    let seg = &points[start..];
    let n = seg.len() as f64;
    let mx = seg.iter().map(|p| p.0).sum::<f64>() / n;
    let my = seg.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = seg.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = seg.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn dcnc(r: &mut Report, runs: &LongRuns, l15: &RunOutput) {
    let m7 = abilene(7, RATE_MBPS).into_model();
    let m15 = abilene(15, RATE_MBPS).into_model();
    let d7 = simulate(&m7, Policy::Dcnc, V_LARGE, DCNC_HORIZON);
    let d15 = simulate(&m15, Policy::Dcnc, V_LARGE, DCNC_HORIZON);
    let small = simulate(&m7, Policy::Dcnc, DCNC_SMALL_V, DCNC_HORIZON);
    let ratio7 = d7.summary.delivered_mean / runs.v_large.summary.delivered_mean;
    let ratio15 = d15.summary.delivered_mean / l15.summary.delivered_mean;
    let proposed_cost = second_half_cost(&runs.v_large);
    let ok = ratio7 < DCNC_RATIO_L7
        && ratio15 < DCNC_RATIO_L15
        && small.summary.cost_mean > proposed_cost;
    r.line(
        "dcnc-contrast",
        ok,
        format!(
            "L=7 {:.1} vs {:.1} Mbps ({:.0}% < {:.0}%), L=15 {:.1} vs {:.1} Mbps ({:.0}% < {:.0}%), \
             small-V raw cost {:.2} vs {:.2}",
            mbps(d7.summary.delivered_mean),
            mbps(runs.v_large.summary.delivered_mean),
            100.0 * ratio7,
            100.0 * DCNC_RATIO_L7,
            mbps(d15.summary.delivered_mean),
            mbps(l15.summary.delivered_mean),
            100.0 * ratio15,
            100.0 * DCNC_RATIO_L15,
            small.summary.cost_mean,
            proposed_cost
        ),
    );
}

fn matching(r: &mut Report, runs: &[(&str, &RunSummary)]) {
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, s) in runs {
        let gap = s.flow_matching_gap.unwrap_or(f64::INFINITY);
        let load = s.group_utilization.iter().copied().fold(0.0, f64::max);
        ok &= gap <= MATCH_GAP_MAX && load <= GROUP_LOAD_MAX;
        notes.push(format!(
            "{name} gap {:.2}% peak load {:.3}",
            100.0 * gap,
            load
        ));
    }
    r.line(
        "flow-matching",
        ok,
        format!(
            "{} (gap ≤ {:.0}%, load ≤ {GROUP_LOAD_MAX})",
            notes.join(", "),
            100.0 * MATCH_GAP_MAX
        ),
    );
}

fn properties(r: &mut Report) {
    let cargo = std::env::var("CARGO").unwrap_or_else(|_| "cargo".into());
    let args = [
        "test",
        "--quiet",
        "-p",
        "latnet-core",
        "--lib",
        "--test",
        "properties",
    ];
    let cargo_test = |extra: &[&str]| {
        Command::new(&cargo)
            .args(args)
            .args(extra)
            .current_dir(env!("CARGO_MANIFEST_DIR"))
            .status()
    };
    // The budget covers running the tests, not compiling them.
    let built = cargo_test(&["--no-run"]);
    let start = Instant::now();
    let status = match built {
        Ok(s) if s.success() => cargo_test(&[]),
        other => other,
    };
    let secs = start.elapsed().as_secs_f64();
    let ok = status.as_ref().is_ok_and(|s| s.success()) && secs < PROPERTY_BUDGET_SECS;
    r.line(
        "unit-and-property",
        ok,
        format!(
            "module tests and property suite {} in {secs:.1}s (budget {PROPERTY_BUDGET_SECS}s)",
            match status {
                Ok(s) if s.success() => "passed".to_string(),
                Ok(s) => format!("failed ({s})"),
                Err(e) => format!("could not start ({e})"),
            }
        ),
    );
}

/// Flow carried by commodity `k` over the physical hop `a → b` in `stage`,
/// summed over lifetimes.
fn hop_flow(
    lg: &LayeredGraph,
    x: &FlowDecision,
    k: usize,
    a: usize,
    b: usize,
    stage: usize,
) -> f64 {
    let e = lg
        .graph()
        .find_edge(lg.node(a - 1, stage), lg.node(b - 1, stage))
        .expect("link exists");
    (1..=x.max_lifetime(k)).map(|l| x.get(k, e, l)).sum()
}

fn proc_flow(lg: &LayeredGraph, x: &FlowDecision, k: usize, node: usize) -> f64 {
    let e = lg.processing_edge(node - 1, 0).expect("site exists");
    (1..=x.max_lifetime(k)).map(|l| x.get(k, e, l)).sum()
}

/// Smallest flow on the path's hops, with stage 1 after `proc`.
fn path_flow(lg: &LayeredGraph, x: &FlowDecision, k: usize, path: &[usize], proc: usize) -> f64 {
    let split = path.iter().position(|&n| n == proc).unwrap();
    let mut least = proc_flow(lg, x, k, proc);
    for (i, w) in path.windows(2).enumerate() {
        let stage = usize::from(i >= split);
        least = least.min(hop_flow(lg, x, k, w[0], w[1], stage));
    }
    least
}

fn support(r: &mut Report) {
    let lg = abilene(6, RATE_MBPS);
    let m = lg.model();
    let (lp, sol) = min_cost(m).unwrap();
    let x = lp.to_flows(m, &sol.x);
    let mut ok = true;
    let mut notes = Vec::new();
    for (k, (path, proc)) in [
        (&PATH_CLIENT_1[..], PROC_CLIENT_1),
        (&PATH_CLIENT_2[..], PROC_CLIENT_2),
    ]
    .into_iter()
    .enumerate()
    {
        let need = m.commodities()[k].required_rate();
        let on_path = path_flow(&lg, &x, k, path, proc);
        let processed: f64 = (1..=11).map(|n| proc_flow(&lg, &x, k, n)).sum();
        let cheap: f64 = CHEAP_SITES.iter().map(|&n| proc_flow(&lg, &x, k, n)).sum();
        ok &=
            on_path > SUPPORT_MAJORITY * need && (processed - cheap).abs() <= 1e-9 * need.max(1.0);
        notes.push(format!(
            "client {} carries {on_path:.3} of {need:.3} on {:?} (processing only at nodes {CHEAP_SITES:?}: {})",
            k + 1,
            path,
            (processed - cheap).abs() <= 1e-9 * need.max(1.0)
        ));
    }
    let kinds_ok = x.nonzeros().all(|(_, e, _, _)| match lg.kind(e) {
        LayeredEdgeKind::Processing { node, .. } => CHEAP_SITES.contains(&(node + 1)),
        LayeredEdgeKind::Transmission { .. } => true,
    });
    ok &= kinds_ok;
    let mut h_ok = true;
    for &(l, golden) in &GOLDEN_H_STAR {
        let h = min_cost(abilene(l, RATE_MBPS).model()).unwrap().1.objective;
        h_ok &= (h - golden).abs() <= H_STAR_TOL;
        notes.push(format!("h*(L={l}) {h:.6}"));
    }
    ok &= h_ok;
    r.line("cost-path-support", ok, notes.join("; "));
}

fn main() -> ExitCode {
    let only = std::env::var("LATNET_ACCEPT_ONLY")
        .ok()
        .map(|s| s.split(',').map(|x| x.trim().to_string()).collect());
    let mut r = Report {
        only,
        results: Vec::new(),
    };
    let start = Instant::now();
    if r.wants("unit-and-property") {
        properties(&mut r);
    }
    if r.wants("capacity-ordering") {
        ordering(&mut r);
    }
    if r.wants("cost-path-support") {
        support(&mut r);
    }
    if r.wants("stability-knee") {
        knee(&mut r);
    }
    let long = [
        "reliability",
        "timely-throughput",
        "dcnc-contrast",
        "flow-matching",
    ];
    if long.iter().any(|n| r.wants(n)) {
        let runs = long_runs();
        if r.wants("reliability") {
            reliability(&mut r, &runs);
        }
        if r.wants("timely-throughput") {
            throughput(&mut r, &runs);
        }
        let l15 = (r.wants("dcnc-contrast") || r.wants("flow-matching")).then(|| {
            simulate(
                &abilene(15, RATE_MBPS).into_model(),
                Policy::Proposed,
                V_LARGE,
                LONG_HORIZON,
            )
        });
        if let (true, Some(l15)) = (r.wants("dcnc-contrast"), &l15) {
            dcnc(&mut r, &runs, l15);
        }
        if r.wants("flow-matching") {
            let mut list = vec![
                ("L=7 V=0", &runs.v0.summary),
                ("L=7 V=large", &runs.v_large.summary),
            ];
            if let Some(l15) = &l15 {
                list.push(("L=15 V=large", &l15.summary));
            }
            matching(&mut r, &list);
        }
    }
    if r.wants("v-tradeoff") {
        tradeoff(&mut r);
    }
    let passed = r.results.iter().filter(|x| x.1).count();
    println!(
        "acceptance: {passed}/{} passed in {:.0}s",
        r.results.len(),
        start.elapsed().as_secs_f64()
    );
    let strict = std::env::var("LATNET_ACCEPT_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < r.results.len() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
