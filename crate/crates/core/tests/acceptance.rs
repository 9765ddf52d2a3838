//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails. Run with `cargo test --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::Mutex;
use std::time::Instant;

use common::{gf2_solve, mean_cv};
use ltcds::cli::{execute, Command, ExperimentConfig, Invocation};
use ltcds::experiment::{build_network, run_storage, CellSpec};
use ltcds::ltcodec::{central_lt_encode, peel_decode, random_sources, Payload};
use ltcds::netmodel::generate_connected_rgg;
use ltcds::query::{cell_seed, evaluate_ps, QueryPlan};
use ltcds::seeding::Stream;
use ltcds::soliton::{ideal_soliton, robust_shape, robust_soliton, storage_degree_pmf, DistributionKind};
use ltcds::walksim::{
    counter_threshold, measure_walk_statistics, run_ltcds_i, run_update, Algorithm, StorageSnapshot,
};
use rayon::prelude::*;

const MASTER_SEED: u64 = 20_240_601;

/// Counter record of one known-size run made by the suite.
struct KnownSizeRun {
    n: usize,
    c1: f64,
    final_counters: Vec<u64>,
    transmissions: u64,
}

static KNOWN_SIZE_RUNS: Mutex<Vec<KnownSizeRun>> = Mutex::new(Vec::new());

type Check = fn() -> Verdict;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn cell(algorithm: Algorithm, n: usize, k: usize, side_length: f64) -> CellSpec {
    CellSpec {
        algorithm,
        n,
        k,
        side_length,
        distribution: DistributionKind::Ideal,
        c1: 3.0,
        c2: 50,
        c3: 10.0,
        payload_len: 16,
    }
}

fn record_known_size(cell: &CellSpec, snap: &StorageSnapshot) {
    KNOWN_SIZE_RUNS
        .lock()
        .unwrap()
        .push(KnownSizeRun {
            n: cell.n,
            c1: cell.c1,
            final_counters: snap.final_counters.clone(),
            transmissions: snap.transmissions,
        });
}

/// Mean decoding success over `seeds` realizations of `cell`.
fn mean_ps(cell: &CellSpec, seeds: usize, eta: f64, trials: usize) -> f64 {
    let values: Vec<f64> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let seed = cell_seed(MASTER_SEED, cell, s);
            let (g, _, sources) = build_network(cell, seed).unwrap();
            let snap = run_storage(cell, &g, &sources, seed).unwrap();
            if cell.algorithm == Algorithm::LtcdsI {
                record_known_size(cell, &snap);
            }
            let plan = QueryPlan::for_ratio(eta, cell.k, trials).unwrap();
            evaluate_ps(&snap, sources.payloads(), &plan, &mut Stream::Query.rng(seed, &[])).unwrap().p_s
        })
        .collect();
    values.iter().sum::<f64>() / seeds as f64
}

fn soliton_exactness() -> Verdict {
    let worst = (1..=200)
        .map(|k| (ideal_soliton(k).unwrap().pmf().iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let r = robust_shape(40, 0.1, 0.5).unwrap().r;
    let hand = 0.1 * 40f64.sqrt() * (40.0f64 / 0.5).ln();
    let six_sig = |x: f64| (x * 1e5).round() / 1e5;
    let robust_sum = robust_soliton(40, 0.1, 0.5).unwrap().pmf().iter().sum::<f64>();
    verdict(
        worst <= 1e-12 && six_sig(r) == 2.77144 && six_sig(r) == six_sig(hand) && (robust_sum - 1.0).abs() <= 1e-12,
        format!("max |sum-1| over k=1..200 = {worst:.1e}; R = {r:.6} (hand {hand:.6})"),
    )
}

fn storage_degree_agreement() -> Verdict {
    let (n, k, seeds) = (500, 40, 20);
    let side = (n as f64 * 9.0 / 40.0).sqrt();
    let spec = cell(Algorithm::LtcdsI, n, k, side);
    let histograms: Vec<Vec<u64>> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            let seed = cell_seed(MASTER_SEED, &spec, s);
            let (g, _, sources) = build_network(&spec, seed).unwrap();
            let snap = run_storage(&spec, &g, &sources, seed).unwrap();
            record_known_size(&spec, &snap);
            let mut hist = vec![0u64; k + 1];
            for d in snap.storage_degrees() {
                hist[d] += 1;
            }
            hist
        })
        .collect();
    let total = (n * seeds) as f64;
    let theory = storage_degree_pmf(&ideal_soliton(k).unwrap());
    let tv = 0.5
        * (0..=k)
            .map(|d| (histograms.iter().map(|h| h[d]).sum::<u64>() as f64 / total - theory.pmf()[d]).abs())
            .sum::<f64>();
    verdict(tv <= 0.03, format!("TV = {tv:.4} over {seeds} runs (n={n}, k={k}, L={side:.3}, C1=3)"))
}

fn decoder_oracle() -> Verdict {
    let k = 20;
    let dist = robust_soliton(k, 0.1, 0.5).unwrap();
    let mut peeled = 0;
    let mut violations = 0;
    for instance in 0..100u64 {
        let mut rng = Stream::Payloads.rng(MASTER_SEED, &[instance]);
        let sources = random_sources(k, 16, &mut rng);
        let m = k + 5 + (instance as usize % 16);
        let packets = central_lt_encode(&sources, &dist, m, &mut rng).unwrap();
        let peel = peel_decode(&packets, k).unwrap();
        let partial_ok = peel.recovered.iter().all(|(id, p)| &sources[*id] == p);
        if peel.success {
            peeled += 1;
            let gauss = gf2_solve(&packets, k);
            if !peel.matches(&sources) || gauss.as_deref() != Some(sources.as_slice()) {
                violations += 1;
            }
        }
        if !partial_ok {
            violations += 1;
        }
    }
    verdict(
        violations == 0 && peeled > 0,
        format!("{peeled}/100 peeled, {violations} disagreements with elimination or ground truth"),
    )
}

fn centralized_lt_bound() -> Verdict {
    let (k, delta) = (100usize, 0.5);
    let dist = robust_soliton(k, 0.1, delta).unwrap();
    let ln = (k as f64 / delta).ln();
    let m = k + (2.0 * (k as f64).sqrt() * ln * ln).ceil() as usize;
    let successes = (0..200u64)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = Stream::Payloads.rng(MASTER_SEED, &[1, t]);
            let sources = random_sources(k, 16, &mut rng);
            let packets = central_lt_encode(&sources, &dist, m, &mut rng).unwrap();
            peel_decode(&packets, k).unwrap().matches(&sources)
        })
        .count();
    let rate = successes as f64 / 200.0;
    verdict(rate >= 1.0 - delta, format!("m = {m}, success rate {rate:.3} over 200 trials"))
}

fn small_network_decoding() -> Verdict {
    let mut spec = cell(Algorithm::LtcdsI, 200, 20, 5.0);
    spec.c1 = 5.0;
    let ps = mean_ps(&spec, 10, 2.0, 200);
    let mut small = cell(Algorithm::LtcdsI, 100, 10, 5.0);
    small.c1 = 5.0;
    let ps_small = mean_ps(&small, 10, 2.0, 200);
    verdict(
        ps >= 0.9,
        format!("p_s = {ps:.3} at n=200, k=20, L=5, C1=5, eta=2 (n=100, k=10: {ps_small:.3})"),
    )
}

fn c1_plateau() -> Verdict {
    let (n, k, eta, seeds, trials) = (500, 50, 1.8, 12, 400);
    let spec = cell(Algorithm::LtcdsI, n, k, 15.0);
    let dist = ideal_soliton(k).unwrap();
    // This density sits near the connectivity threshold; seeds whose graph
    // stays disconnected after every retry are skipped.
    let networks: Vec<_> = (0..4 * seeds)
        .into_par_iter()
        .filter_map(|s| {
            let seed = cell_seed(MASTER_SEED, &spec, s);
            build_network(&spec, seed).ok().map(|(g, _, sources)| (s, seed, g, sources))
        })
        .collect();
    let skipped = networks[seeds - 1].0 + 1 - seeds;
    let pairs: Vec<(f64, f64)> = networks[..seeds]
        .par_iter()
        .map(|&(_, seed, ref g, ref sources)| {
            let plan = QueryPlan::for_ratio(eta, k, trials).unwrap();
            let ps_at = |c1: f64| {
                let mut run_spec = spec;
                run_spec.c1 = c1;
                let snap = run_ltcds_i(g, sources, &dist, c1, &mut Stream::Simulation.rng(seed, &[])).unwrap();
                record_known_size(&run_spec, &snap);
                evaluate_ps(&snap, sources.payloads(), &plan, &mut Stream::Query.rng(seed, &[])).unwrap().p_s
            };
            (ps_at(3.0), ps_at(5.0))
        })
        .collect();
    let p3 = pairs.iter().map(|p| p.0).sum::<f64>() / seeds as f64;
    let p5 = pairs.iter().map(|p| p.1).sum::<f64>() / seeds as f64;
    verdict(
        (p3 - p5).abs() < 0.05,
        format!(
            "p_s(C1=3) = {p3:.3}, p_s(C1=5) = {p5:.3}, |diff| = {:.3} over {seeds} networks ({skipped} disconnected seeds skipped; n={n}, k={k}, L=15, eta={eta})",
            (p3 - p5).abs()
        ),
    )
}

fn counter_bounds() -> Verdict {
    let runs = KNOWN_SIZE_RUNS.lock().unwrap();
    let mut bad = 0;
    for run in runs.iter() {
        let t = counter_threshold(run.c1, run.n as f64);
        let n = run.n as u64;
        bad += run.final_counters.iter().filter(|&&c| c < t || c > t + n).count();
        let k = run.final_counters.len() as u64;
        if run.transmissions < k * t || run.transmissions > k * (t + n) {
            bad += 1;
        }
    }
    verdict(
        bad == 0 && !runs.is_empty(),
        format!("{} known-size runs checked, {bad} out-of-window counters or totals", runs.len()),
    )
}

fn walk_invariants() -> Verdict {
    let mut checked = 0;
    let mut worst_freq: f64 = 0.0;
    let mut worst_return: f64 = 0.0;
    for (i, (n, side)) in [(200usize, 5.0), (100, 6.0)].into_iter().enumerate() {
        let (g, _) = generate_connected_rgg(n, side, |a| Stream::Graph.rng(MASTER_SEED, &[100 + i as u64, u64::from(a)]))
            .unwrap();
        let stats = measure_walk_statistics(&g, 2_000_000, &mut Stream::Simulation.rng(MASTER_SEED, &[i as u64])).unwrap();
        let two_e = 2.0 * g.edge_count() as f64;
        let mu = two_e / n as f64;
        for u in 0..n {
            let d = g.degree(u) as f64;
            if stats.visits[u] >= 100 {
                worst_freq = worst_freq.max((stats.frequency[u] / (d / two_e) - 1.0).abs());
                checked += 1;
            }
            if stats.returns[u] >= 100 {
                let r = stats.mean_return_time[u].unwrap();
                worst_return = worst_return.max((r / (mu * n as f64 / d) - 1.0).abs());
            }
        }
    }
    verdict(
        worst_freq <= 0.15 && worst_return <= 0.15 && checked > 0,
        format!("{checked} nodes; worst frequency error {worst_freq:.3}, worst return-time error {worst_return:.3}"),
    )
}

fn estimate_accuracy() -> Verdict {
    let (n, k) = (200usize, 20usize);
    let spec = cell(Algorithm::LtcdsII, n, k, 5.0);
    let estimates: Vec<(f64, f64)> = (0..10)
        .into_par_iter()
        .flat_map_iter(|s| {
            let seed = cell_seed(MASTER_SEED, &spec, s);
            let (g, _, sources) = build_network(&spec, seed).unwrap();
            let snap = run_storage(&spec, &g, &sources, seed).unwrap();
            snap.estimates
                .into_iter()
                .flatten()
                .map(|e| (e.k_hat as f64 / k as f64, e.n_hat / n as f64))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut errors: Vec<f64> = estimates.iter().map(|(kr, _)| (kr - 1.0).abs()).collect();
    errors.sort_by(f64::total_cmp);
    let median = errors[errors.len() / 2];
    let (_, cv_k) = mean_cv(&estimates.iter().map(|e| e.0).collect::<Vec<_>>());
    let (_, cv_n) = mean_cv(&estimates.iter().map(|e| e.1).collect::<Vec<_>>());
    verdict(
        median <= 0.2 && cv_k < cv_n,
        format!(
            "{} nodes over 10 runs: median |k_hat-k|/k = {median:.3}, CV(k_hat/k) = {cv_k:.3}, CV(n_hat/n) = {cv_n:.3}",
            estimates.len()
        ),
    )
}

fn inferred_size_decoding() -> Verdict {
    let (n, k, seeds, trials) = (200, 20, 10, 200);
    let mut known = cell(Algorithm::LtcdsI, n, k, 5.0);
    known.c1 = 5.0;
    let inferred = CellSpec {
        algorithm: Algorithm::LtcdsII,
        ..known
    };
    let pairs: Vec<(f64, f64)> = (0..seeds)
        .into_par_iter()
        .map(|s| {
            // Both protocols run on the same network and sources.
            let seed = cell_seed(MASTER_SEED, &known, s);
            let (g, _, sources) = build_network(&known, seed).unwrap();
            let plan = QueryPlan::for_ratio(2.0, k, trials).unwrap();
            let ps = |spec: &CellSpec| {
                let snap = run_storage(spec, &g, &sources, seed).unwrap();
                evaluate_ps(&snap, sources.payloads(), &plan, &mut Stream::Query.rng(seed, &[])).unwrap().p_s
            };
            (ps(&known), ps(&inferred))
        })
        .collect();
    let p1 = pairs.iter().map(|p| p.0).sum::<f64>() / seeds as f64;
    let p2 = pairs.iter().map(|p| p.1).sum::<f64>() / seeds as f64;
    verdict(
        (p1 - p2).abs() <= 0.1,
        format!("known-size p_s = {p1:.3} (C1=5), inferred-size p_s = {p2:.3} (C2=50, C3=10), eta=2, n={n}, k={k}"),
    )
}

fn update_protocol() -> Verdict {
    let mut spec = cell(Algorithm::LtcdsI, 200, 20, 5.0);
    spec.c1 = 5.0;
    let bound = 3 * (counter_threshold(5.0, 200.0) + 1);
    let mut failures = Vec::new();
    let mut worst_tx = 0;
    for s in 0..5 {
        let seed = cell_seed(MASTER_SEED, &spec, s);
        let (g, _, sources) = build_network(&spec, seed).unwrap();
        let snap = run_storage(&spec, &g, &sources, seed).unwrap();
        let mut truth = sources.payloads().to_vec();
        let mut rng = Stream::Update.rng(seed, &[]);
        let mut updates = BTreeMap::new();
        for id in [2, 9, 15] {
            let new = Payload::random(16, &mut rng);
            updates.insert(id, (truth[id].clone(), new.clone()));
            truth[id] = new;
        }
        let updated = run_update(&snap, &g, &updates, 5.0, &mut rng).unwrap();
        worst_tx = worst_tx.max(updated.transmissions);
        let decoded = peel_decode(&updated.packets, spec.k).unwrap();
        if !decoded.matches(&truth) || updated.transmissions > bound {
            failures.push(s);
        }
    }
    verdict(
        failures.is_empty(),
        format!("5 runs, 3 updates each; max update transmissions {worst_tx} <= {bound}; failing runs {failures:?}"),
    )
}

fn determinism() -> Verdict {
    let invocation = |command, text: &str| Invocation {
        command,
        config: ExperimentConfig::parse(text).unwrap(),
        config_text: text.to_string(),
        seed: Some(99),
        out: None,
    };
    let sweep = invocation(
        Command::Sweep,
        "algorithm = [\"ltcds1\", \"ltcds2\"]\nn = 100\nk_fraction = 0.1\nL = 5\nc1 = 5\nc2 = 30\neta = [1.5, 2.0]\ntrials = 100\nseeds = 3\nper_seed_rows = true\n",
    );
    let run = invocation(Command::Run, "algorithm = \"ltcds2\"\nn = 100\nk = 10\nL = 5\n");
    let first = (execute(&sweep).unwrap(), execute(&run).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let second = pool.install(|| (execute(&sweep).unwrap(), execute(&run).unwrap()));
    let same = first == second;
    verdict(
        same,
        format!(
            "sweep ({} bytes) and run ({} bytes) outputs identical across reruns and thread counts",
            first.0.output.len(),
            first.1.output.len()
        ),
    )
}

fn main() -> ExitCode {
    // Criteria that record known-size runs come before the counter check.
    let criteria: [(&str, Check); 12] = [
        ("soliton exactness", soliton_exactness),
        ("storage-degree law vs simulation", storage_degree_agreement),
        ("peeling vs GF(2) elimination", decoder_oracle),
        ("centralized LT decode bound", centralized_lt_bound),
        ("small-network decoding (eta=2)", small_network_decoding),
        ("C1 plateau", c1_plateau),
        ("counter and transmission window", counter_bounds),
        ("random-walk stationary invariants", walk_invariants),
        ("estimate accuracy and concentration", estimate_accuracy),
        ("inferred-size vs known-size decoding", inferred_size_decoding),
        ("update protocol", update_protocol),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let v = std::panic::catch_unwind(check).unwrap_or_else(|_| verdict(false, "check panicked".into()));
        failed += usize::from(!v.pass);
        println!(
            "{} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
