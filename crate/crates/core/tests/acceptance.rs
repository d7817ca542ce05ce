//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when any
//! criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use csm::data::Dataset;
use csm::harness::config::all_presets as presets;
use csm::harness::{load_dataset, preset, RunConfig, Trainer, TABLE_HEADER};
use csm::learning::AlgorithmKind;
use csm::linear::{run_linear_demo, LinearDemoConfig};
use csm::net::{init_params, NetworkTopology, Sample, WeightInit};
use csm::structured::StructureMasks;
use csm::verify::{
    check_beta_limit, check_energy_descent, check_lateral_sign_opposition, duality_battery, interior_instance,
    ry_battery, BetaLimitConfig,
};

const DUALITY_TOL: f64 = 1e-10;
const RY_TOL: f64 = 1e-12;
const BETA_LIMIT_TOL: f64 = 0.05;
const BETA_LIMIT_BUDGET: Duration = Duration::from_secs(5 * 60);
const DESCENT_SLACK: f64 = 1e-10;
const LINEAR_REDUCTION: f64 = 100.0;
const LINEAR_CORRELATION: f64 = 0.99;
const LINEAR_BUDGET: Duration = Duration::from_secs(60);
const DESK_VAL_ERR: f64 = 12.0;
const DESK_EP_GAP: f64 = 3.0;
const DESK_EPOCHS: usize = 30;
const DESK_BUDGET: Duration = Duration::from_secs(15 * 60);

struct Line {
    id: u8,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: u8, title: &'static str, pass: bool, detail: String) -> Line {
    Line {
        id,
        title,
        pass,
        detail,
    }
}

fn oracle_battery() -> Line {
    let duality = duality_battery(100, 11);
    let worst_duality = duality.iter().map(|r| r.measured).fold(0.0, f64::max);
    let ry = ry_battery(50, 12).expect("ry battery");
    let worst_ry = ry
        .iter()
        .filter(|r| r.name == "ry_full_rank")
        .map(|r| r.measured)
        .fold(0.0, f64::max);
    let conclusive = duality.iter().all(|r| !r.inconclusive);
    line(
        1,
        "oracle battery",
        conclusive && worst_duality <= DUALITY_TOL && worst_ry <= RY_TOL,
        format!(
            "duality max {worst_duality:.1e} (<= {DUALITY_TOL:.0e}, 100 instances), \
             R^y full rank max {worst_ry:.1e} (<= {RY_TOL:.0e})"
        ),
    )
}

fn gradient_equivalence() -> Line {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = BetaLimitConfig::default();
    let mut worst_small: f64 = 0.0;
    let mut ordered = 0;
    let mut conclusive = 0;
    let nets = 20;
    for k in 0..nets {
        let depth = 2 + k % 2;
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.gen_range(2..=8)).collect();
        let t = rng.gen_range(1..=4);
        let (topo, params, batch) = interior_instance(&sizes, 1.0, t, rng.gen()).expect("instance");
        let reps = check_beta_limit(&params, &topo, &batch, &[1e-3, 1e-1], &cfg);
        if reps.iter().any(|r| r.inconclusive) {
            continue;
        }
        conclusive += 1;
        worst_small = worst_small.max(reps[0].measured);
        ordered += usize::from(reps[0].measured < reps[1].measured);
    }
    let elapsed = start.elapsed();
    line(
        2,
        "gradient equivalence",
        conclusive == nets
            && worst_small <= BETA_LIMIT_TOL
            && ordered == nets
            && elapsed <= BETA_LIMIT_BUDGET,
        format!(
            "{conclusive}/{nets} interior nets, max rel. error {worst_small:.2e} at beta=1e-3 (<= {BETA_LIMIT_TOL}), \
             smaller than at beta=1e-1 on {ordered}/{nets}, {:.0}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn energy_descent() -> Line {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut violations = 0.0;
    for k in 0..10 {
        let sizes = [12, 8, 6, 4];
        let gamma = [1.0, 0.5, 0.8][k % 3];
        let topo = NetworkTopology::new(&sizes, gamma).unwrap();
        let params = init_params(&topo, rng.gen(), WeightInit::Uniform(1.0)).unwrap();
        let x = ndarray::Array1::from_shape_fn(sizes[0], |_| rng.gen_range(0.0..1.0));
        let sample = Sample::new(x, ndarray::Array1::zeros(4));
        let reps = check_energy_descent(&params, &topo, &sample, &[0.01], 500, DESCENT_SLACK).unwrap();
        violations += reps[0].measured;
    }
    line(
        3,
        "energy descent",
        violations == 0.0,
        format!("{violations} increases beyond {DESCENT_SLACK:.0e} over 10 nets x 500 steps at eps=0.01"),
    )
}

fn sign_opposition() -> Line {
    let r = check_lateral_sign_opposition(100, 41).unwrap();
    line(
        4,
        "CSM/EP lateral sign opposition",
        r.measured == 0.0 && r.pass,
        format!("{} same-sign entries ({})", r.measured, r.instance),
    )
}

fn linear_demo() -> Line {
    let start = Instant::now();
    let report = run_linear_demo(&LinearDemoConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let reduction = report.initial_mse() / report.final_mse();
    let corr = report.correlation();
    line(
        5,
        "linear demo",
        reduction >= LINEAR_REDUCTION && corr >= LINEAR_CORRELATION && elapsed <= LINEAR_BUDGET,
        format!(
            "test MSE down {reduction:.0}x (>= {LINEAR_REDUCTION}), correlation {corr:.4} (>= {LINEAR_CORRELATION}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

struct DeskRuns {
    csm: Trainer,
    ep_pos: Trainer,
    ep_lateral: Trainer,
    elapsed: Duration,
}

fn desk_config(algorithm: AlgorithmKind) -> RunConfig {
    let mut cfg = preset("mnist-desk").unwrap().config;
    cfg.data_dir = Some(common::mnist_dir());
    cfg.algorithm = algorithm;
    cfg.epochs = DESK_EPOCHS;
    cfg
}

fn desk_runs() -> DeskRuns {
    let start = Instant::now();
    let ds = load_dataset(&desk_config(AlgorithmKind::Csm)).expect("MNIST fixture");
    let run = |a| {
        let mut t = Trainer::new(desk_config(a), &ds).unwrap();
        t.run(&ds).unwrap();
        t
    };
    let csm = run(AlgorithmKind::Csm);
    let csm_time = start.elapsed();
    let ep_pos = run(AlgorithmKind::EpBetaPositive);
    let ep_lateral = run(AlgorithmKind::EpLateral);
    eprintln!("desk runs: CSM {:.0}s, all three {:.0}s", csm_time.as_secs_f64(), start.elapsed().as_secs_f64());
    DeskRuns {
        csm,
        ep_pos,
        ep_lateral,
        elapsed: start.elapsed(),
    }
}

fn mnist_desk(runs: &DeskRuns) -> Line {
    let csm = &runs.csm.metrics;
    let ep = &runs.ep_pos.metrics;
    let reached = csm.iter().find(|m| m.epoch <= DESK_EPOCHS && m.val_err <= DESK_VAL_ERR);
    let (csm_final, ep_final) = (csm.last().unwrap().val_err, ep.last().unwrap().val_err);
    let gap = (csm_final - ep_final).abs();
    line(
        6,
        "MNIST desk scale",
        reached.is_some() && gap <= DESK_EP_GAP && runs.elapsed <= DESK_BUDGET,
        format!(
            "784-64-10 on 5k/1k: CSM reaches <= {DESK_VAL_ERR}% at epoch {}, final CSM {csm_final:.2}% vs EP+beta \
             {ep_final:.2}% (gap {gap:.2} <= {DESK_EP_GAP}), {:.0}s for CSM, EP+beta and EP lateral",
            reached.map_or("never".into(), |m| m.epoch.to_string()),
            runs.elapsed.as_secs_f64()
        ),
    )
}

fn mean_hidden_fraction(t: &Trainer) -> f64 {
    let s = &t.metrics.last().unwrap().sparsity;
    let hidden = &s[..s.len() - 1];
    hidden.iter().sum::<f64>() / hidden.len() as f64
}

fn sparsity(runs: &DeskRuns) -> Line {
    let (c, e) = (mean_hidden_fraction(&runs.csm), mean_hidden_fraction(&runs.ep_lateral));
    line(
        7,
        "sparsity",
        c < e,
        format!("mean hidden fraction active (> 0.01): CSM {c:.4} < EP lateral {e:.4}"),
    )
}

fn masked_entries_zero(t: &Trainer) -> (usize, usize) {
    let masks = t.topology.masks().unwrap();
    let mut masked = 0;
    let mut nonzero = 0;
    let pairs = t.params.weights.iter().zip(&masks.feedforward).chain(t.params.laterals.iter().zip(&masks.lateral));
    for (a, m) in pairs {
        for (&v, &s) in a.iter().zip(m.iter()) {
            if s == 0.0 {
                masked += 1;
                nonzero += usize::from(v.to_bits() != 0);
            }
        }
    }
    (masked, nonzero)
}

fn bitwise_equal(a: &csm::Parameters, b: &csm::Parameters) -> bool {
    let bits = |p: &csm::Parameters| -> Vec<u64> {
        p.weights
            .iter()
            .chain(&p.laterals)
            .flat_map(|m| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .chain(p.biases.iter().flat_map(|b| b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
            .collect()
    };
    bits(a) == bits(b)
}

fn structured_masks() -> Line {
    let mut cfg = desk_config(AlgorithmKind::Csm);
    cfg.crop = true;
    cfg.structured = Some("4:4:4".into());
    cfg.epochs = 5;
    let ds = load_dataset(&cfg).unwrap();
    let mut t = Trainer::new(cfg, &ds).unwrap();
    t.run(&ds).unwrap();
    let (masked, nonzero) = masked_entries_zero(&t);

    let mut cfg = desk_config(AlgorithmKind::Csm);
    cfg.subset_train = Some(1000);
    cfg.subset_val = Some(200);
    cfg.epochs = 3;
    let ds = load_dataset(&cfg).unwrap();
    let mut plain = Trainer::new(cfg.clone(), &ds).unwrap();
    plain.run(&ds).unwrap();
    let mut ones = Trainer::new(cfg, &ds).unwrap();
    ones.topology = ones
        .topology
        .clone()
        .with_masks(StructureMasks::all_ones(ones.topology.sizes()))
        .unwrap();
    ones.run(&ds).unwrap();
    let same = bitwise_equal(&plain.params, &ones.params);
    line(
        8,
        "structured masks",
        masked > 0 && nonzero == 0 && same,
        format!(
            "{nonzero} of {masked} masked entries nonzero after 5 epochs of grid 4:4:4 on cropped 5k/1k; \
             all-ones masks bitwise equal to unstructured run: {same}"
        ),
    )
}

fn preset_smoke(dir: &Path) -> Line {
    let cifar = dir.join("cifar");
    fs::create_dir_all(&cifar).unwrap();
    common::synthetic_cifar(&cifar, 20, 5);
    let mut failures = Vec::new();
    let mut ran = 0;
    let start = Instant::now();
    for p in presets() {
        let mut cfg = p.config.clone();
        cfg.data_dir = Some(match cfg.dataset {
            csm::harness::DatasetKind::Mnist => common::mnist_dir(),
            csm::harness::DatasetKind::Cifar10 => cifar.clone(),
        });
        cfg.epochs = 1;
        cfg.subset_train = Some(10);
        cfg.subset_val = Some(10);
        cfg.out_dir = Some(dir.join(p.name));
        let outcome = (|| -> csm::Result<bool> {
            let ds: Dataset = load_dataset(&cfg)?;
            let mut t = Trainer::new(cfg.clone(), &ds)?;
            t.run(&ds)?;
            let summary = fs::read_to_string(dir.join(p.name).join("summary.txt"))?;
            let mut lines = summary.lines();
            let header_ok = lines.next() == Some(TABLE_HEADER);
            let row_ok = lines.next().is_some_and(|r| r.starts_with(p.label) && r.split(" | ").count() == 5);
            let annotated = p.expected.is_some() || p.name == "mnist-desk";
            Ok(header_ok && row_ok && annotated && t.metrics.len() == 2)
        })();
        match outcome {
            Ok(true) => ran += 1,
            Ok(false) => failures.push(format!("{}: bad log", p.name)),
            Err(e) => failures.push(format!("{}: {e}", p.name)),
        }
    }
    line(
        9,
        "full-scale presets",
        failures.is_empty(),
        format!(
            "{ran} presets ran one epoch and logged a table row ({:.0}s){}",
            start.elapsed().as_secs_f64(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failures.join("; "))
            }
        ),
    )
}

fn reproducibility(dir: &Path) -> Line {
    let mut cfg = desk_config(AlgorithmKind::Csm);
    cfg.subset_train = Some(1000);
    cfg.subset_val = Some(200);
    cfg.epochs = 5;
    let ds = load_dataset(&cfg).unwrap();
    let run = |name: &str, epochs: usize| {
        let mut c = cfg.clone();
        c.epochs = epochs;
        c.out_dir = Some(dir.join(name));
        let mut t = Trainer::new(c, &ds).unwrap();
        t.run(&ds).unwrap();
        t
    };
    let read = |name: &str| common::without_seconds(&fs::read_to_string(dir.join(name).join("metrics.csv")).unwrap());
    let a = run("a", 5);
    let _b = run("b", 5);
    let identical = read("a") == read("b");

    run("c", 3);
    let mut ck = csm::harness::Checkpoint::load(&dir.join("c").join("checkpoint.bin")).unwrap();
    ck.config.epochs = 5;
    let mut resumed = Trainer::resume(ck, &ds).unwrap();
    resumed.run(&ds).unwrap();
    let resumed_same = read("c") == read("a") && bitwise_equal(&resumed.params, &a.params);
    line(
        10,
        "reproducibility",
        identical && resumed_same,
        format!(
            "two identical runs give equal metrics.csv (seconds column excluded): {identical}; \
             resume at epoch 3 of 5 matches the straight run: {resumed_same}"
        ),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let mut lines = vec![oracle_battery(), gradient_equivalence(), energy_descent(), sign_opposition(), linear_demo()];
    let desk = desk_runs();
    lines.push(mnist_desk(&desk));
    lines.push(sparsity(&desk));
    lines.push(structured_masks());
    lines.push(preset_smoke(tmp.path()));
    lines.push(reproducibility(tmp.path()));

    println!();
    for l in &lines {
        println!(
            "criterion {:>2}  {}  {}: {}",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.title,
            l.detail
        );
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!("\nacceptance: {} passed, {failed} failed", lines.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
