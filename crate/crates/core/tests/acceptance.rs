//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//!
//! The expensive per-scenario analyses and verify reports are computed once
//! and shared across criteria; the first test to run pays for them.

use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use sisamp_core::pipeline::{cmd_verify, identity_ensemble, verify_analysis, Analysis};
use sisamp_core::report::{to_json_string, VerifyReport};
use sisamp_core::scenario::load_scenario;

const GOLDEN: [&str; 5] = [
    "classical",
    "oversampled",
    "averaging",
    "rank_deficient",
    "quincunx",
];

const FRAME_SCENARIOS: [&str; 4] = ["classical", "oversampled", "averaging", "quincunx"];

struct Run {
    name: &'static str,
    analysis: Arc<Analysis>,
    report: VerifyReport,
}

struct Suite {
    runs: Vec<Run>,
    verify_wall: Duration,
}

fn scenario_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"))
}

fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let t0 = Instant::now();
        let runs = GOLDEN
            .iter()
            .map(|name| {
                let sc = load_scenario(&scenario_path(name)).expect("golden scenario loads");
                let analysis = Arc::new(Analysis::build(sc).expect("analysis builds"));
                let report = verify_analysis(&analysis).expect("verify runs");
                Run {
                    name,
                    analysis,
                    report,
                }
            })
            .collect();
        Suite {
            runs,
            verify_wall: t0.elapsed(),
        }
    })
}

fn run(name: &str) -> &'static Run {
    suite().runs.iter().find(|r| r.name == name).unwrap()
}

fn criterion(n: u32, desc: &str, pass: bool, detail: String) {
    eprintln!(
        "acceptance {n} ({desc}): {} [{detail}]",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({desc}) failed: {detail}");
}

#[test]
fn criterion_1_cell_partition() {
    // direct lattice-level checks, timed; quincunx cells have area 1/2
    let t0 = Instant::now();
    use rand::Rng;
    use sisamp_core::lattice::SamplingLattice;
    let mut all_ok = true;
    let mut detail = String::new();
    for (mat, n_sub, label) in [
        (vec![vec![1i64]], 1usize, "classical"),
        (vec![vec![2]], 1, "oversampled"),
        (vec![vec![1, 1], vec![-1, 1]], 1, "quincunx"),
    ] {
        let lat = SamplingLattice::new(mat, n_sub).unwrap();
        let mut rng = sisamp_core::exec::member_rng(1, 0);
        let mc_ok = (0..10_000).all(|_| {
            let y: Vec<f64> = (0..lat.dim)
                .map(|_| rng.random::<f64>() / lat.n_sub as f64)
                .collect();
            (0..lat.m)
                .filter(|&k| lat.in_cell_mod_period(k, &y))
                .count()
                == 1
        });
        let cells = lat.cells();
        let n_pow = (lat.n_sub as u64).pow(lat.dim as u32);
        let vol_ok = cells.len() as u64 * n_pow == cells[0].vol_denom;
        if label == "quincunx" {
            all_ok &= cells.iter().all(|c| c.vol_denom == 2);
        }
        all_ok &= mc_ok && vol_ok;
        detail.push_str(&format!("{label}: mc={mc_ok} vol={vol_ok}; "));
    }
    let elapsed = t0.elapsed();
    all_ok &= elapsed < Duration::from_secs(1);
    detail.push_str(&format!("runtime {elapsed:?}"));
    criterion(1, "cell partition", all_ok, detail);
}

#[test]
fn criterion_2_identity_oracle() {
    // 50 random smooth F per scenario, rel err <= 1e-3, < 30 s per scenario
    let mut pass = true;
    let mut detail = String::new();
    for name in GOLDEN {
        let r = run(name);
        let t0 = Instant::now();
        let line = identity_ensemble(&r.analysis, 50).unwrap();
        let elapsed = t0.elapsed();
        let in_budget = !cfg!(feature = "parallel") || elapsed < Duration::from_secs(30);
        let ok = line.pass && line.tolerance == 1e-3 && in_budget;
        pass &= ok;
        detail.push_str(&format!(
            "{name}: worst {:.2e} in {:.1?}; ",
            line.worst, elapsed
        ));
    }
    criterion(2, "coset identity", pass, detail);
}

#[test]
fn criterion_3_sampling_identity() {
    let mut pass = true;
    let mut detail = String::new();
    for name in GOLDEN {
        let s = &run(name).report.sampling;
        pass &= s.pass && s.n == 30 && s.tolerance == 1e-6;
        detail.push_str(&format!("{name}: worst {:.2e}; ", s.worst));
    }
    criterion(3, "sampling identity", pass, detail);
}

#[test]
fn criterion_4_riesz_sandwich() {
    let mut pass = true;
    let mut detail = String::new();
    for name in GOLDEN {
        let s = &run(name).report.sandwich;
        pass &= s.pass && s.draws == 50 && s.slack == 0.02;
        detail.push_str(&format!(
            "{name}: [{:.3},{:.3}] in [{:.3},{:.3}]; ",
            s.min_ratio, s.max_ratio, s.a_lo, s.b_hi
        ));
    }
    // hat generator: Gram eigen-range within 5% of [1/3, 1]
    let s = &run("classical").report.sandwich;
    let hat_ok = (s.gram_min - 1.0 / 3.0).abs() <= 0.05 / 3.0 && (s.gram_max - 1.0).abs() <= 0.05;
    pass &= hat_ok;
    detail.push_str(&format!(
        "hat gram range ({:.4}, {:.4}) vs (1/3, 1)",
        s.gram_min, s.gram_max
    ));
    criterion(4, "riesz sandwich", pass, detail);
}

#[test]
fn criterion_5_classification_fixtures() {
    let classical = &run("classical").analysis;
    let c_ok = (classical.bounds.a_g - 1.0).abs() <= 1e-6
        && (classical.bounds.b_g - 1.0).abs() <= 1e-6
        && classical.classification.riesz;

    let rank = &run("rank_deficient").analysis;
    let r_ok = !rank.classification.complete && !rank.classification.frame;

    let avg = &run("averaging").analysis;
    // A_G = min |g|^2 = 1/4 since min |g| = 1/2
    let a_ok = avg.classification.frame && (avg.bounds.a_g - 0.25).abs() <= 1e-3;

    criterion(
        5,
        "classification fixtures",
        c_ok && r_ok && a_ok,
        format!(
            "classical A_G={:.8} B_G={:.8} riesz={}; rank_deficient complete={}; averaging A_G={:.6}",
            classical.bounds.a_g,
            classical.bounds.b_g,
            classical.classification.riesz,
            rank.classification.complete,
            avg.bounds.a_g
        ),
    );
}

#[test]
fn criterion_6_bessel_bound() {
    let mut pass = true;
    let mut detail = String::new();
    for name in GOLDEN {
        let b = &run(name).report.bessel;
        let ok =
            b.draws == 100 && b.max_ratio <= b.bound * (1.0 + 1e-3) && b.tightness.fraction >= 0.9;
        pass &= ok;
        detail.push_str(&format!(
            "{name}: max {:.4}/{:.4}, probe {:.1}%; ",
            b.max_ratio,
            b.bound,
            100.0 * b.tightness.fraction
        ));
    }
    criterion(6, "bessel bound", pass, detail);
}

#[test]
fn criterion_7_dual_residual() {
    let mut pass = true;
    let mut detail = String::new();
    for name in FRAME_SCENARIOS {
        let d = run(name).report.dual.as_ref();
        let ok = d.map(|d| d.residual <= 1e-8).unwrap_or(false);
        pass &= ok;
        detail.push_str(&format!(
            "{name}: residual {:.2e}; ",
            d.map(|d| d.residual).unwrap_or(f64::NAN)
        ));
    }
    criterion(7, "dual residual", pass, detail);
}

#[test]
fn criterion_8_end_to_end() {
    let mut pass = true;
    let mut detail = String::new();
    for name in FRAME_SCENARIOS {
        let r = run(name).report.reconstruction.as_ref();
        let ok = r
            .map(|r| r.pass && r.n == 20 && r.tolerance == 1e-3)
            .unwrap_or(false);
        pass &= ok;
        detail.push_str(&format!(
            "{name}: worst {:.2e}; ",
            r.map(|r| r.worst).unwrap_or(f64::NAN)
        ));
    }
    let nw = run("rank_deficient").report.null_witness.as_ref();
    let null_ok = nw
        .map(|n| n.witness.sample_ratio <= 1e-6 && n.witness.recon_error > 0.1)
        .unwrap_or(false);
    pass &= null_ok;
    detail.push_str(&format!(
        "rank_deficient null ratio {:.2e}, err {:.3}; ",
        nw.map(|n| n.witness.sample_ratio).unwrap_or(f64::NAN),
        nw.map(|n| n.witness.recon_error).unwrap_or(f64::NAN)
    ));
    for name in GOLDEN {
        pass &= run(name).report.equivalence.agree;
    }
    let wall = suite().verify_wall;
    if cfg!(feature = "parallel") {
        pass &= wall < Duration::from_secs(300);
    }
    detail.push_str(&format!("verdicts agree everywhere; full suite {wall:.1?}"));
    criterion(8, "end-to-end equivalence", pass, detail);
}

#[test]
fn criterion_9_determinism() {
    // two fresh verify runs, byte-identical serialized reports
    let mut pass = true;
    let mut detail = String::new();
    for name in ["classical", "averaging", "rank_deficient"] {
        let a = to_json_string(&cmd_verify(load_scenario(&scenario_path(name)).unwrap()).unwrap());
        let b = to_json_string(&cmd_verify(load_scenario(&scenario_path(name)).unwrap()).unwrap());
        let same = a == b;
        pass &= same;
        detail.push_str(&format!("{name}: identical={same}; "));
    }
    criterion(9, "determinism", pass, detail);
}
