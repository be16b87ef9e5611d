//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p seedsched --test acceptance`.

mod common;

use std::collections::HashSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seedsched::experiment::{effectiveness, reusability, train_model, transferability, CampaignTemplate};
use seedsched::learning::{
    ensemble_predict, load_model, save_model, ForestParams, ModelBundle, OnlineLinearModel, RandomForestModel,
    TrainingExample,
};
use seedsched::lineage::{LineageIndex, Origin, Seed, SeedId};
use seedsched::program::{preset, BranchId, ProgramModel};
use seedsched::sim::{write_dispatch_csv, write_stats_csv};
use seedsched::{extract_features, run_campaign, CoverageStore, FeatureVector, FuzzerStateView, PolicyKind};

const BASE_SEED: u64 = 1;
const REPS: u32 = 5;
const TICKS: u64 = 200;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

fn program(name: &str) -> Arc<ProgramModel> {
    Arc::new(preset(name).unwrap().generate().unwrap())
}

fn template() -> CampaignTemplate {
    CampaignTemplate {
        ticks: TICKS,
        ..CampaignTemplate::default()
    }
}

fn rls_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let d = 10;
    let mut worst = 0.0f64;
    for stream in 0..50 {
        let lambda = [0.1, 1.0, 10.0][stream % 3];
        let n = rng.gen_range(1..=200);
        let truth: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut m = OnlineLinearModel::with_weights(vec![0.0; d], lambda).map_err(|e| e.to_string())?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = x.iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.1..0.1);
            m.update(&x, y).map_err(|e| e.to_string())?;
            xs.push(x);
            ys.push(y);
            let oracle = common::ridge(&xs, &ys, lambda, &vec![0.0; d]);
            let err = m
                .weights()
                .iter()
                .zip(oracle.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err);
        }
    }
    ensure(worst < 1e-8, || format!("max inf-norm gap {worst:e}"))?;
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "max inf-norm gap {worst:.2e} in {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn woodbury() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let d = 10;
    let lambda = 1.0;
    let mut m = OnlineLinearModel::new(d, lambda, 7).map_err(|e| e.to_string())?;
    let mut gram = DMatrix::<f64>::identity(d, d) * lambda;
    let id = DMatrix::<f64>::identity(d, d);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        m.update(&x, rng.gen_range(-5.0..5.0)).map_err(|e| e.to_string())?;
        let v = DVector::from_column_slice(&x);
        gram += &v * v.transpose();
        let c_inv = DMatrix::from_row_slice(d, d, m.c_inv());
        worst = worst.max((c_inv * &gram - &id).norm());
    }
    ensure(worst < 1e-7, || format!("max Frobenius deviation {worst:e}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "max Frobenius deviation {worst:.2e} in {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn feature_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut vectors = 0;
    for p in 0..200 {
        let m = common::random_program(&mut rng, 64);
        let labels: Vec<u64> = m.branches().iter().map(|a| u64::from(a.reachable_labels)).collect();
        ensure(labels == common::reachable_labels(&m), || {
            format!("program {p}: reachable labels differ")
        })?;
        let covered: Vec<bool> = (0..m.branch_count()).map(|_| rng.gen_bool(0.4)).collect();
        let mut cov = CoverageStore::new(&m);
        let ids: Vec<BranchId> = (0..m.branch_count() as u32)
            .filter(|i| covered[*i as usize])
            .map(BranchId)
            .collect();
        cov.mark_covered(&ids).map_err(|e| e.to_string())?;
        let queue_size = rng.gen_range(1..500);
        let state = FuzzerStateView {
            queue_size,
            coverage: &cov,
        };
        for _ in 0..5 {
            let s = Seed {
                id: SeedId(0),
                parent: None,
                origin: Origin::Initial,
                size: rng.gen_range(1..10_000),
                trace: common::random_trace(&m, &mut rng),
                first_new_cov: rng.gen(),
                created_at: 0,
            };
            let got = extract_features(&s, &m, &state).map_err(|e| e.to_string())?;
            let want = common::features(&s, &m, &covered, queue_size);
            ensure(got == want, || format!("program {p}: got {got:?}, want {want:?}"))?;
            vectors += 1;
        }
    }
    Ok(format!("{vectors} vectors on 200 programs match"))
}

fn label_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut checks = 0;
    for f in 0..1000 {
        let n = rng.gen_range(1..=10_000);
        let seeds = common::random_lineage(&mut rng, n);
        let mut idx = LineageIndex::new();
        for s in &seeds {
            idx.record_seed(s).map_err(|e| e.to_string())?;
        }
        let k = rng.gen_range(1..=n.min(50));
        let roots: HashSet<SeedId> = seeds
            .iter()
            .map(|s| s.id)
            .choose_multiple(&mut rng, k)
            .into_iter()
            .collect();
        for r in &roots {
            idx.mark_root(*r).map_err(|e| e.to_string())?;
        }
        let max_tick = seeds.iter().map(|s| s.created_at).max().unwrap();
        let cutoff = rng.gen_range(0..=max_tick + 1);
        let want = common::all_tree_sizes(&seeds, &roots, cutoff);
        for r in &roots {
            let got = idx.descendant_tree_size(*r, cutoff).map_err(|e| e.to_string())?;
            ensure(got == want[r], || {
                format!("forest {f}, root {r:?}: got {got}, want {}", want[r])
            })?;
            checks += 1;
        }
    }
    Ok(format!("{checks} tree sizes on 1000 forests match"))
}

fn forest_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let points = |rng: &mut ChaCha8Rng, n: usize, d: usize| -> Vec<TrainingExample> {
        (0..n)
            .map(|i| {
                let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
                x[0] = i as f64;
                TrainingExample {
                    x,
                    y: rng.gen_range(-10.0..10.0),
                }
            })
            .collect()
    };
    let single = ForestParams {
        n_trees: 1,
        bootstrap: false,
        min_samples_leaf: 1,
        features_per_split: Some(10),
        max_depth: None,
    };
    for trial in 0..10 {
        let data = points(&mut rng, 100, 10);
        let f = RandomForestModel::fit(&data, single.clone(), trial).map_err(|e| e.to_string())?;
        for ex in &data {
            let p = f.predict(&ex.x).map_err(|e| e.to_string())?;
            ensure(p == ex.y, || {
                format!("trial {trial}: predicted {p}, trained on {}", ex.y)
            })?;
        }
        let f = RandomForestModel::fit(&data, ForestParams::default(), trial).map_err(|e| e.to_string())?;
        let imp = f.feature_importance().map_err(|e| e.to_string())?;
        let sum: f64 = imp.iter().sum();
        ensure(imp.iter().all(|v| *v >= 0.0) && (sum - 1.0).abs() < 1e-9, || {
            format!("trial {trial}: importance {imp:?}")
        })?;
    }
    let data: Vec<TrainingExample> = (0..200)
        .map(|_| {
            let mut x = vec![0.5; 10];
            x[0] = rng.gen_range(0.0..1.0);
            TrainingExample { y: x[0], x }
        })
        .collect();
    let f = RandomForestModel::fit(&data, ForestParams::default(), 9).map_err(|e| e.to_string())?;
    let top = f.feature_importance().map_err(|e| e.to_string())?[0];
    ensure(top > 0.99, || format!("true feature importance {top}"))?;
    Ok(format!(
        "memorized 10 fits, importance sums ok, single-signal share {top:.4}"
    ))
}

fn effectiveness_check() -> Outcome {
    let start = Instant::now();
    let t = template();
    let learnable = program("learnable");
    let misleading = program("size-misleading");
    let learned = [PolicyKind::MeuzzOl, PolicyKind::MeuzzEn];
    let a = effectiveness(
        std::slice::from_ref(&learnable),
        &[PolicyKind::MeuzzOl, PolicyKind::MeuzzEn, PolicyKind::Random],
        REPS,
        &t,
        BASE_SEED,
    )
    .map_err(|e| e.to_string())?;
    let b = effectiveness(
        std::slice::from_ref(&misleading),
        &[PolicyKind::MeuzzOl, PolicyKind::MeuzzEn, PolicyKind::HeuristicAfl],
        REPS,
        &t,
        BASE_SEED,
    )
    .map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for policy in learned {
        let c = a.comparison(learnable.name(), policy, PolicyKind::Random).unwrap();
        notes.push(format!(
            "{policy} vs random {:.1}/{:.1} p={:.4}",
            c.mean_coverage, c.baseline_mean_coverage, c.test.p_two_sided
        ));
        ensure(
            c.mean_coverage >= c.baseline_mean_coverage && c.test.p_two_sided < 0.05,
            || notes.join("; "),
        )?;
        let c = b
            .comparison(misleading.name(), policy, PolicyKind::HeuristicAfl)
            .unwrap();
        notes.push(format!("{policy} beats afl {}/{REPS}", c.wins));
        ensure(c.wins >= 4, || notes.join("; "))?;
    }
    within(start.elapsed(), 180.0)?;
    Ok(format!("{} in {:.1}s", notes.join("; "), start.elapsed().as_secs_f64()))
}

fn round_trips_exactly(bundle: &ModelBundle, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("m.model");
    save_model(bundle, &path).map_err(|e| e.to_string())?;
    let back = load_model(&path).map_err(|e| e.to_string())?;
    ensure(back.to_bytes() == bundle.to_bytes(), || {
        "re-encoded bytes differ".into()
    })?;
    let (a, b) = (bundle.linear().unwrap(), back.linear().unwrap());
    for _ in 0..1000 {
        let v = FeatureVector {
            reachable_labels: rng.gen_range(0..500),
            reached_labels: rng.gen_range(0..100),
            undiscovered_neighbors: rng.gen_range(0..50),
            external_calls: rng.gen_range(0..50),
            cmp_count: rng.gen_range(0..200),
            indirect_calls: rng.gen_range(0..20),
            path_length: rng.gen_range(1..400),
            input_size: rng.gen_range(1..5000),
            first_new_cov: rng.gen(),
            queue_size: rng.gen_range(1..2000),
        };
        let x = ensemble_predict(a, bundle.forest(), &v).value;
        let y = ensemble_predict(b, back.forest(), &v).value;
        ensure(x.to_bits() == y.to_bits(), || format!("prediction {x} became {y}"))?;
    }
    Ok(())
}

fn reuse_check(improvements: &mut Vec<f64>) -> Outcome {
    let t = template();
    let (model, report) =
        reusability(&program("learnable"), PolicyKind::MeuzzOl, REPS, &t, BASE_SEED).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    round_trips_exactly(&model, &mut rng)?;
    let en = train_model(&program("learnable"), PolicyKind::MeuzzEn, &t, BASE_SEED).map_err(|e| e.to_string())?;
    round_trips_exactly(&en, &mut rng)?;
    improvements.push(report.mean_improvement);
    let (fresh, reused) = (report.fresh_mean(), report.reused_mean());
    ensure(reused >= fresh, || {
        format!("reused mean {reused:.1} < fresh mean {fresh:.1}")
    })?;
    Ok(format!(
        "fresh {fresh:.1}, reused {reused:.1} ({:+.2}%), save/load exact",
        report.mean_improvement
    ))
}

fn transfer_check(learnable_improvement: Option<f64>) -> Outcome {
    let t = template();
    let names = ["learnable", "size-misleading", "wide"];
    let programs: Vec<_> = names.iter().map(|n| program(n)).collect();
    let (models_a, a) =
        transferability(&programs, PolicyKind::MeuzzOl, REPS, &t, BASE_SEED, None).map_err(|e| e.to_string())?;
    let (models_b, b) =
        transferability(&programs, PolicyKind::MeuzzOl, REPS, &t, BASE_SEED, None).map_err(|e| e.to_string())?;
    let bits = |m: &Vec<Vec<f64>>| m.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
    ensure(bits(&a.cells) == bits(&b.cells), || {
        "matrix differs between runs".into()
    })?;
    ensure(
        models_a
            .iter()
            .zip(&models_b)
            .all(|(x, y)| x.to_bytes() == y.to_bytes()),
        || "trained models differ between runs".into(),
    )?;
    for (i, p) in programs.iter().enumerate() {
        let want = match (i, learnable_improvement) {
            (0, Some(v)) => v,
            _ => {
                reusability(p, PolicyKind::MeuzzOl, REPS, &t, BASE_SEED)
                    .map_err(|e| e.to_string())?
                    .1
                    .mean_improvement
            }
        };
        ensure(a.cells[i][i].to_bits() == want.to_bits(), || {
            format!("diagonal {} is {}, reuse gives {want}", names[i], a.cells[i][i])
        })?;
    }
    let off: Vec<f64> = (0..3)
        .flat_map(|i| (0..3).filter(move |j| *j != i).map(move |j| (i, j)))
        .map(|(i, j)| a.cells[i][j])
        .collect();
    ensure(off.iter().any(|v| *v > 0.0), || {
        format!("no positive off-diagonal: {off:?}")
    })?;
    let rows: Vec<String> = a
        .cells
        .iter()
        .map(|r| r.iter().map(|v| format!("{v:+.2}")).collect::<Vec<_>>().join(" "))
        .collect();
    Ok(format!(
        "deterministic, diagonal matches reuse, cells [{}]",
        rows.join(" | ")
    ))
}

fn timing_check() -> Outcome {
    let cfg = template().config(&program("learnable"), PolicyKind::MeuzzEn, 0, BASE_SEED);
    let s = run_campaign(&cfg).map_err(|e| e.to_string())?;
    let log = &s.timings.log;
    ensure(!log.is_empty(), || "no refit log points".into())?;
    for p in log {
        match (p.online_update_mean_ns, p.offline_refit_mean_ns) {
            (Some(on), Some(off)) => ensure(on < off, || format!("tick {}: online {on}ns >= refit {off}ns", p.tick))?,
            _ => return Err(format!("tick {}: missing stage timing", p.tick)),
        }
    }
    let extraction = s.timings.extraction.mean_ns().ok_or("no extraction timing")?;
    ensure(extraction < 1e6, || format!("extraction {extraction}ns per vector"))?;
    let last = log.last().unwrap();
    Ok(format!(
        "{} log points; last online {:.0}ns, refit {:.0}ns; extraction {extraction:.0}ns",
        log.len(),
        last.online_update_mean_ns.unwrap(),
        last.offline_refit_mean_ns.unwrap()
    ))
}

fn determinism_check() -> Outcome {
    let t = CampaignTemplate {
        ticks: 100,
        ..CampaignTemplate::default()
    };
    let mut runs = 0;
    for name in ["learnable", "size-misleading", "wide"] {
        let p = program(name);
        for policy in PolicyKind::ALL {
            let csv = || -> Result<(Vec<u8>, Vec<u8>), String> {
                let s = run_campaign(&t.config(&p, policy, 2, BASE_SEED)).map_err(|e| e.to_string())?;
                let (mut a, mut b) = (Vec::new(), Vec::new());
                write_stats_csv(&mut a, std::slice::from_ref(&s)).map_err(|e| e.to_string())?;
                write_dispatch_csv(&mut b, &s).map_err(|e| e.to_string())?;
                Ok((a, b))
            };
            let (first, second) = (csv()?, csv()?);
            ensure(first.0 == second.0, || format!("{name}/{policy}: stats CSV differs"))?;
            ensure(first.1 == second.1, || format!("{name}/{policy}: dispatch CSV differs"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} campaign pairs byte-identical"))
}

fn main() {
    let mut reuse_improvement = Vec::new();
    let mut failed = 0;
    let mut report = |id: u32, name: &str, outcome: Outcome| match outcome {
        Ok(detail) => println!("PASS {id:>2} {name}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL {id:>2} {name}: {detail}");
        }
    };
    report(1, "rls-oracle-equivalence", rls_oracle());
    report(2, "woodbury-consistency", woodbury());
    report(3, "feature-extraction-oracle", feature_oracle());
    report(4, "label-oracle", label_oracle());
    report(5, "forest-sanity", forest_sanity());
    report(6, "scheduling-effectiveness", effectiveness_check());
    let reuse = reuse_check(&mut reuse_improvement);
    report(7, "model-reuse", reuse);
    report(8, "transfer-matrix", transfer_check(reuse_improvement.first().copied()));
    report(9, "timing-ordering", timing_check());
    report(10, "determinism", determinism_check());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
