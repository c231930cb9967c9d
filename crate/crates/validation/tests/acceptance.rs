//! Acceptance criteria 1 to 12. Prints one line per criterion and exits
//! nonzero if any of them fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use aggnet::commands::{self, SweepReport};
use aggnet::config::Experiment;
use aggnet::core::game::{CournotGame, Permutation, StrategyBox};
use aggnet::core::graph::{Graph, MixingMatrix};
use aggnet::core::numerics;
use aggnet::core::privacy::{self, build_transfer_system, check_structural, rank_certify};
use aggnet::core::protocol::{
    gen_obfuscation, run_baseline, run_private, verify_consensus_summability, Mode, StepSchedule,
};
use aggnet::{CliError, Preset};
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn resolve(cfg: aggnet::ExperimentConfig) -> Experiment {
    Experiment::resolve(cfg, Path::new(".")).expect("preset resolves")
}

fn preset(p: Preset, edit: impl FnOnce(&mut aggnet::ExperimentConfig)) -> Experiment {
    let mut cfg = p.config();
    edit(&mut cfg);
    resolve(cfg)
}

/// Hand-derived first-order residual of a Cournot profile.
fn foc_residual(g: &CournotGame, x: &[f64]) -> f64 {
    let total: f64 = x.iter().sum();
    (0..x.len())
        .map(|i| (2.0 * g.zeta2[i] * x[i] + g.zeta1[i] - g.a + g.b * total + g.b * x[i]).abs())
        .fold(0.0, f64::max)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|a, b| v[*a].total_cmp(&v[*b]));
    let mut r = vec![0.0; v.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
            e += 1;
        }
        let avg = (s + e) as f64 / 2.0 + 1.0;
        for t in s..=e {
            r[idx[t]] = avg;
        }
        s = e + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn non_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

fn c1_reduction() -> Outcome {
    let exp = preset(Preset::Canonical5, |c| c.rounds = 500);
    let base = commands::simulate(&exp, Mode::Baseline, 0.0, 1).unwrap();
    let private = commands::simulate(&exp, Mode::Private, 0.0, 1).unwrap();
    let same = base.rounds == private.rounds && base.rounds.len() == 500;
    outcome(same, format!("{} rounds compared field by field", base.rounds.len()))
}

fn c2_aggregate_tracking() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    for s in 0..24u64 {
        let n = 3 + (s as usize % 8);
        let g = Graph::random_connected_nonbipartite(n, (s as usize) % 5, s).unwrap();
        let delta = 0.9 / n as f64;
        let w = MixingMatrix::new(&g, delta).unwrap();
        let zeta2: Vec<f64> = (0..n).map(|i| 0.05 + ((i as u64 * 7 + s) % 10) as f64 * 0.05).collect();
        let zeta1: Vec<f64> = (0..n).map(|i| ((i as u64 * 3 + s) % 10) as f64 * 0.1).collect();
        let game = CournotGame::new(
            6.0,
            0.1 + 0.05 * (s % 4) as f64,
            zeta2,
            zeta1,
            vec![StrategyBox::interval(0.0, 5.0).unwrap(); n],
        )
        .unwrap();
        let spec = game.to_spec();
        let sched = StepSchedule::new(0.5 + 0.25 * (s % 3) as f64, 0.51 + 0.1 * (s % 4) as f64).unwrap();
        let x0 = [(s % 5) as f64];
        let trace = if s % 3 == 0 {
            run_baseline(&spec, &g, &w, sched, &x0, 300).unwrap()
        } else {
            let obf = gen_obfuscation(&g, 5.0 * (s % 4) as f64, 300, 1, s).unwrap();
            run_private(&spec, &g, &w, sched, &x0, 300, &obf).unwrap()
        };
        for r in &trace.rounds {
            let ny: f64 = r.v.iter().sum();
            let xbar: f64 = r.x.iter().sum();
            worst = worst.max((ny - xbar).abs() / (1.0 + xbar.abs()));
            worst = worst.max((r.xbar[0] - xbar).abs() / (1.0 + xbar.abs()));
        }
        instances += 1;
    }
    outcome(
        worst <= 1e-9,
        format!("{instances} instances, worst scaled gap {worst:.2e}"),
    )
}

fn c3_convergence() -> Outcome {
    let game = CournotGame::new(
        6.0,
        1.0,
        vec![1.0, 1.0],
        vec![0.0, 0.0],
        vec![StrategyBox::interval(0.0, 5.0).unwrap(); 2],
    )
    .unwrap();
    // 2x + x̄ + x − 6 = 0 with x̄ = 2x.
    let xstar = [1.2, 1.2];
    let g = Graph::complete(2).unwrap();
    let w = MixingMatrix::new(&g, 0.3).unwrap();
    let sched = StepSchedule::new(0.5, 0.51).unwrap();
    let spec = game.to_spec();
    let base = run_baseline(&spec, &g, &w, sched, &[1.0], 5000).unwrap();
    let obf = gen_obfuscation(&g, 5.0, 5000, 1, 1).unwrap();
    let private = run_private(&spec, &g, &w, sched, &[1.0], 5000, &obf).unwrap();
    let dist = |t: &aggnet::core::protocol::Trace| {
        let last = t.rounds.last().unwrap();
        // State after the final update.
        let x: Vec<f64> = (0..2)
            .map(|i| (last.x[i] - last.alpha * last.grad[i]).clamp(0.0, 5.0))
            .collect();
        x.iter().zip(&xstar).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0
    };
    let (db, dp) = (dist(&base), dist(&private));
    outcome(db < 1e-3 && dp < 1e-3, format!("baseline {db:.2e}, private {dp:.2e}"))
}

fn c4_breach() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let exp = preset(Preset::Canonical5, |_| {});
    let ne = exp.game.nash_equilibrium().unwrap();
    let interior = ne.interior && foc_residual(&exp.game, &ne.profile) < 1e-9;
    commands::run(&exp, tmp.path()).unwrap();
    let report = commands::attack(&exp, tmp.path(), None).unwrap();
    let errs: Vec<f64> = report.result.targets.iter().filter_map(|t| t.error()).collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    outcome(
        interior && errs.len() == 4 && worst < 1e-2,
        format!(
            "interior NE {interior}, {} targets, worst relative error {worst:.2e}",
            errs.len()
        ),
    )
}

fn sweep(exp: &Experiment, deltas: &[f64], seeds: &[u64]) -> SweepReport {
    let tmp = TempDir::new().unwrap();
    commands::sweep(exp, tmp.path(), deltas, seeds, None).unwrap()
}

fn c5_degradation() -> Outcome {
    let exp = preset(Preset::Canonical5, |c| c.mode = Mode::Private);
    let deltas = [0.0, 10.0, 20.0, 30.0, 50.0];
    let seeds: Vec<u64> = (1..=10).collect();
    let report = sweep(&exp, &deltas, &seeds);
    let errs: Vec<f64> = deltas
        .iter()
        .map(|d| {
            report
                .rows
                .iter()
                .find(|r| r.mode == Mode::Private && r.bound == *d)
                .and_then(|r| r.mean_attack_error)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let rho = spearman(&deltas, &errs);
    let pass = non_decreasing(&errs) && rho >= 0.9 && errs[4] > 0.25 && errs[0] < 1e-2;
    let shown: Vec<String> = errs.iter().map(|e| format!("{e:.3e}")).collect();
    outcome(pass, format!("mean errors [{}], Spearman {rho:.3}", shown.join(", ")))
}

fn with_adversary(residual: &Graph) -> (Graph, BTreeSet<usize>) {
    let m = residual.node_count();
    let mut edges: Vec<(usize, usize)> = residual.edges().collect();
    edges.push((0, m));
    (Graph::new(m + 1, edges).unwrap(), [m].into_iter().collect())
}

fn random_tree(m: usize, seed: u64) -> Graph {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let edges = (1..m).map(|t| {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 33) as usize % t, t)
    });
    Graph::new(m, edges.collect::<Vec<_>>()).unwrap()
}

fn c6_rank_law() -> Outcome {
    let tols = [1e-12, 1e-9, 1e-6];
    let mut bad = Vec::new();
    let mut nonbip = 0;
    for s in 0..60u64 {
        let m = 3 + (s as usize % 10);
        let residual = Graph::random_connected_nonbipartite(m, (s as usize * 7) % (m + 2), 100 + s).unwrap();
        let (g, adv) = with_adversary(&residual);
        let ts = build_transfer_system(&g, &adv).unwrap();
        for tol in tols {
            let r = rank_certify(&ts, tol).unwrap().rank;
            if r != 2 * m - 1 {
                bad.push(format!("non-bipartite M={m} rank {r}"));
            }
        }
        nonbip += 1;
    }
    let mut bip = 0;
    for s in 0..24u64 {
        let m = 3 + (s as usize % 10);
        let residual = if s % 2 == 0 {
            random_tree(m, s)
        } else {
            Graph::cycle(2 * (m / 2).max(2)).unwrap()
        };
        assert!(residual.is_bipartite() && residual.is_connected());
        let mm = residual.node_count();
        let (g, adv) = with_adversary(&residual);
        let ts = build_transfer_system(&g, &adv).unwrap();
        for tol in tols {
            let r = rank_certify(&ts, tol).unwrap().rank;
            if r != 2 * mm - 2 {
                bad.push(format!("bipartite M={mm} rank {r}"));
            }
        }
        bip += 1;
    }
    outcome(
        bad.is_empty(),
        format!("{nonbip} non-bipartite, {bip} bipartite graphs, 3 tolerances; mismatches {bad:?}"),
    )
}

fn c7_xi_consistency() -> Outcome {
    let exp = preset(Preset::K5Cert, |_| {});
    let adv: BTreeSet<usize> = [4].into_iter().collect();
    let perm = Permutation::swap(5, 0, 1).unwrap();
    let permuted = exp.game.permute(&perm).unwrap();
    let ts = build_transfer_system(&exp.graph, &adv).unwrap();
    let m = ts.nodes();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in 1..=5u64 {
        let obf = gen_obfuscation(&exp.graph, 10.0, 50, 1, seed).unwrap();
        let trace = run_private(&permuted.to_spec(), &exp.graph, &exp.w, exp.schedule, &[1.0], 50, &obf).unwrap();
        for k in 0..50 {
            for xi in privacy::build_xi(&ts, &trace, &obf, &perm, &adv, k).unwrap() {
                let s1: f64 = xi[..m].iter().sum();
                let s2: f64 = xi[m..].iter().sum();
                worst = worst.max((s1 - s2).abs() / (1.0 + numerics::norm(&xi)));
                checked += 1;
            }
        }
    }
    outcome(
        worst < 1e-8 && checked == 250,
        format!("{checked} rounds, worst scaled gap {worst:.2e}"),
    )
}

fn c8_indistinguishability() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let exp = preset(Preset::K5Cert, |_| {});
    let clean = commands::certify(&exp, tmp.path(), false).unwrap();
    let c = &clean.certificate;
    let corrupted = commands::certify(&exp, tmp.path(), true).unwrap();
    let detected = matches!(corrupted.verdict(), Err(CliError::Numeric(_)));
    let pass = c.passed && c.max_observable_deviation < 1e-8 && c.hidden_difference > 1e-3 && detected;
    outcome(
        pass,
        format!(
            "observable deviation {:.2e}, hidden difference {:.3}, corruption detected {detected} (deviation {:.2e})",
            c.max_observable_deviation, c.hidden_difference, corrupted.certificate.max_observable_deviation
        ),
    )
}

fn c9_structural_gate() -> Outcome {
    let adv: BTreeSet<usize> = [4].into_iter().collect();
    let canonical = check_structural(&Graph::canonical_five(), &adv).unwrap();
    let star = check_structural(&Graph::star(5).unwrap(), &[0].into_iter().collect()).unwrap();
    let tmp = TempDir::new().unwrap();
    let exp = preset(Preset::Canonical5, |c| c.mode = Mode::Private);
    let cli = commands::certify(&exp, tmp.path(), false).unwrap().verdict();
    let pass = !canonical.ok
        && canonical.reasons.iter().any(|r| r == "bipartite residual graph")
        && !star.ok
        && star.reasons.iter().any(|r| r.contains("disconnected"))
        && matches!(cli, Err(CliError::Structural(_)));
    outcome(
        pass,
        format!("canonical {:?}, star {:?}", canonical.reasons, star.reasons),
    )
}

fn c10_summability() -> Outcome {
    let exp = preset(Preset::PaperFig3, |_| {});
    let spec = exp.game.to_spec();
    let mut parts = Vec::new();
    let mut pass = true;
    for bound in [0.0, 10.0] {
        let trace = commands::simulate(&exp, Mode::Private, bound, 1).unwrap();
        let rep = verify_consensus_summability(&trace, &spec).unwrap();
        pass &= rep.summable;
        parts.push(format!("Δ={bound}: tail max increment {:.2e}", rep.tail_max_increment));
    }
    outcome(pass, format!("{} (threshold 1e-6)", parts.join(", ")))
}

fn c11_fig3() -> Outcome {
    let exp = preset(Preset::PaperFig3, |_| {});
    let deltas = [10.0, 20.0, 30.0, 50.0];
    let seeds: Vec<u64> = (1..=10).collect();
    let report = sweep(&exp, &deltas, &seeds);
    let finals: Vec<f64> = deltas
        .iter()
        .map(|d| {
            report
                .rows
                .iter()
                .find(|r| r.mode == Mode::Private && r.bound == *d)
                .and_then(|r| r.mean_final_distance)
                .unwrap_or(f64::NAN)
        })
        .collect();
    let private: Vec<_> = report.cells.iter().filter(|c| c.mode == Mode::Private).collect();
    let all_converged = private.iter().all(|c| c.converged == Some(true));
    let shown: Vec<String> = finals.iter().map(|e| format!("{e:.3e}")).collect();
    outcome(
        non_decreasing(&finals) && all_converged,
        format!(
            "mean final distances [{}], {} private cells all converged {all_converged}",
            shown.join(", "),
            private.len()
        ),
    )
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn c12_determinism() -> Outcome {
    let tmp = TempDir::new().unwrap();
    let canonical = preset(Preset::Canonical5, |_| {});
    let canonical_private = preset(Preset::Canonical5, |c| {
        c.mode = Mode::Private;
        c.rounds = 400;
    });
    let fig3 = preset(Preset::PaperFig3, |_| {});
    let k5 = preset(Preset::K5Cert, |_| {});
    let mut snaps = Vec::new();
    for rep in ["a", "b"] {
        let root = tmp.path().join(rep);
        commands::run(&canonical, &root.join("canonical")).unwrap();
        commands::attack(&canonical, &root.join("canonical"), None).unwrap();
        commands::run(&fig3, &root.join("fig3")).unwrap();
        commands::certify(&k5, &root.join("k5"), false).unwrap();
        commands::sweep(&canonical_private, &root.join("sweep"), &[10.0, 50.0], &[1, 2], Some(2)).unwrap();
        commands::sweep(&k5, &root.join("sweep-k5"), &[10.0], &[3], None).unwrap();
        snaps.push(snapshot(&root));
    }
    let files = snaps[0].len();
    outcome(
        files > 0 && snaps[0] == snaps[1],
        format!("{files} artifacts compared byte for byte"),
    )
}

type Criterion = (usize, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let s = Duration::from_secs;
    let criteria: [Criterion; 12] = [
        (1, "reduction identity", s(1), c1_reduction),
        (2, "aggregate tracking", s(10), c2_aggregate_tracking),
        (3, "convergence", s(5), c3_convergence),
        (4, "breach reproduction", s(5), c4_breach),
        (5, "privacy degradation", s(120), c5_degradation),
        (6, "rank law", s(30), c6_rank_law),
        (7, "xi consistency", s(10), c7_xi_consistency),
        (8, "constructive indistinguishability", s(10), c8_indistinguishability),
        (9, "structural gate", s(1), c9_structural_gate),
        (10, "consensus-error summability", s(30), c10_summability),
        (11, "convergence under obfuscation sweep", s(180), c11_fig3),
        (12, "determinism", s(600), c12_determinism),
    ];
    let mut failed = Vec::new();
    for (n, name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let in_time = took <= budget;
        let pass = result.pass && in_time;
        println!(
            "criterion {n:>2} {:<4} {name} ({:.2}s, budget {}s): {}",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64(),
            budget.as_secs(),
            result.detail
        );
        if !pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 12 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
