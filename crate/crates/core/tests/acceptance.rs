//! Acceptance criteria 1-9. Runs without the libtest harness so that every
//! criterion prints exactly one `[PASS]`/`[FAIL]` line; the process fails if
//! any criterion does.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bitrans::corpus::Direction;
use bitrans::cycle::{CycleResult, SETUP_BI, SETUP_SCRATCH, SETUP_UNI};
use bitrans::eval::bleu;
use bitrans::experiment::{run_experiment, ExperimentConfig, ExperimentReport};
use bitrans::lm::{ce_difference, lm_from_counts, select, train_lm, train_lm_restricted, LmConfig};
use bitrans::nmt::{
    average_checkpoints, beam_decode, forward_loss, greedy_decode, init_model, train, Batch, Checkpoint, DecodeConfig, ModelConfig, ModelParams, TrainConfig, Vocab,
};
use bitrans::subword::{learn_bpe, merge_bpe};
use bitrans::text::{Lang, Sentence};
use bitrans::toy::{generate, ToyConfig};

// Tolerances and budgets.
const BPE_BUDGET: Duration = Duration::from_secs(5);
const CE_TOL: f64 = 1e-9;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-4;
const GRAD_FLOOR: f64 = 1e-6;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const BP_TOL: f64 = 1e-9;
const B1_MIN_BLEU: f64 = 30.0;
const TREND_SLACK: f64 = 0.5;
const TOY_BUDGET: Duration = Duration::from_secs(30 * 60);

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn sent(t: &str, l: &str) -> Sentence {
    Sentence::from_line(t, Lang::from(l))
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let toy = generate(&ToyConfig {
        real_pairs: 500,
        mono_size: 0,
        ..ToyConfig::default()
    })
    .unwrap();
    let corpus: Vec<Sentence> = toy.train.pairs.iter().flat_map(|p| [p.source.clone(), p.target.clone()]).collect();
    assert_eq!(corpus.len(), 1000);
    let mut failures = 0;
    for ops in [0, 10, 100] {
        let bpe = learn_bpe(&corpus, ops).unwrap();
        failures += corpus.iter().filter(|s| merge_bpe(&bpe.apply(s)).ok().as_ref() != Some(*s)).count();
    }

    // Brute force: count adjacent character pairs weighted by frequency.
    let mut fixture = vec![sent("low", "x"); 5];
    fixture.extend(vec![sent("lower", "x"); 2]);
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for s in &fixture {
        for w in &s.tokens {
            let chars: Vec<String> = w.chars().map(String::from).collect();
            for p in chars.windows(2) {
                *counts.entry((p[0].clone(), p[1].clone())).or_default() += 1;
            }
        }
    }
    let top = counts.values().max().copied().unwrap();
    let expected = counts.iter().find(|(_, &c)| c == top).map(|(p, _)| p.clone()).unwrap();
    let first = learn_bpe(&fixture, 1).unwrap().merges()[0].clone();
    let elapsed = t.elapsed();
    outcome(
        failures == 0 && first == expected && elapsed < BPE_BUDGET,
        format!("round-trip failures {failures}/3000, first merge {first:?} (brute force {expected:?}), {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let cfg = LmConfig {
        order: 1,
        epsilon: 0.0,
        eos_event: false,
        ..LmConfig::default()
    };
    let lm_in = lm_from_counts(&cfg, ["a", "b"], [(vec!["a"], 9), (vec!["b"], 1)]).unwrap();
    let lm_out = lm_from_counts(&cfg, ["a", "b"], [(vec!["a"], 1), (vec!["b"], 9)]).unwrap();
    // Hand derivation: H_in(a) = -ln 0.9, H_out(a) = -ln 0.1.
    let oracle = |p_in: f64, p_out: f64| -p_in.ln() + p_out.ln();
    let da = ce_difference(&lm_in, &lm_out, &sent("a", "x")).unwrap();
    let db = ce_difference(&lm_in, &lm_out, &sent("b", "x")).unwrap();
    let ok_values = (da - oracle(0.9, 0.1)).abs() < CE_TOL && (db - oracle(0.1, 0.9)).abs() < CE_TOL && (da + 9f64.ln()).abs() < CE_TOL;
    let pool = vec![sent("b", "x"), sent("a", "x"), sent("b b", "x"), sent("a a", "x")];
    let order: Vec<usize> = select(&pool, &lm_in, &lm_out, 4).unwrap().iter().map(|s| s.index).collect();
    // Equal scores keep pool order.
    let ok_order = order == [1, 3, 0, 2];

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let words = ["a", "b", "c", "d", "e", "f"];
    let lm_cfg = LmConfig::with_order(2);
    let in_domain: Vec<Sentence> = (0..30)
        .map(|_| {
            let n = rng.gen_range(1..6);
            sent(&(0..n).map(|_| words[rng.gen_range(0..3)]).collect::<Vec<_>>().join(" "), "x")
        })
        .collect();
    let lm_in2 = train_lm(&in_domain, &lm_cfg).unwrap();
    let mut prefix_ok = 0;
    for _ in 0..100 {
        let size = rng.gen_range(2..40);
        let pool: Vec<Sentence> = (0..size)
            .map(|_| {
                let n = rng.gen_range(1..7);
                sent(&(0..n).map(|_| *words.choose(&mut rng).unwrap()).collect::<Vec<_>>().join(" "), "x")
            })
            .collect();
        let lm_out2 = train_lm_restricted(&pool, &lm_cfg, &lm_in2).unwrap();
        let m2 = rng.gen_range(1..=size);
        let m1 = rng.gen_range(0..=m2);
        let a = select(&pool, &lm_in2, &lm_out2, m1).unwrap();
        let b = select(&pool, &lm_in2, &lm_out2, m2).unwrap();
        if a[..] == b[..m1] {
            prefix_ok += 1;
        }
    }
    outcome(
        ok_values && ok_order && prefix_ok == 100,
        format!("ce(a) = {da:.12}, ce(b) = {db:.12} (oracle ∓{:.12}), order {order:?}, prefix property {prefix_ok}/100", 9f64.ln()),
    )
}

fn criterion_3() -> Outcome {
    let t = Instant::now();
    let vocab = Arc::new(Vocab::build([&sent("a b", "x")], &[]));
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (layer_norm, tie) in [(false, true), (true, false)] {
        let cfg = ModelConfig {
            embed_dim: 4,
            hidden_dim: 5,
            attention_dim: 3,
            dropout: 0.0,
            tie_output_embeddings: tie,
            layer_norm,
            init_scale: 1.5,
        };
        let params = init_model(&cfg, vocab.clone(), 13).unwrap();
        let batch = Batch::new(&[(&[3, 4, 4][..], &[4, 3][..]), (&[4][..], &[3, 3, 4][..])]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let analytic = forward_loss(&params, &batch, Some(&mut rng)).unwrap().grads.unwrap();
        let mut p = params.clone();
        for i in 0..p.values().len() {
            let orig = p.values()[i];
            p.values_mut()[i] = orig + GRAD_STEP;
            let up = forward_loss(&p, &batch, None).unwrap().loss;
            p.values_mut()[i] = orig - GRAD_STEP;
            let down = forward_loss(&p, &batch, None).unwrap().loss;
            p.values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * GRAD_STEP);
            let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
            count += 1;
        }
    }
    let elapsed = t.elapsed();
    outcome(
        worst < GRAD_REL_TOL && elapsed < GRAD_BUDGET,
        format!("max relative error {worst:.2e} over {count} parameters (vocab 5, dims ≤ 5), {elapsed:.2?}"),
    )
}

fn criterion_4() -> Outcome {
    let s = ["the cat sat on the mat", "a b c d e"];
    let id = bleu(&s, &s, true).unwrap();
    let clipped = bleu(&["the the the the"], &["the cat sat down"], true).unwrap();
    let short = bleu(&["a b c d e"], &["a b c d e f g h i j"], true).unwrap();
    let bp_err = (short.brevity_penalty - (-1f64).exp()).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let words = ["the", "The", "cat", "CAT", "sat", "on", "mat", ".", ",", "Mat"];
    let mut invariant = 0;
    for _ in 0..50 {
        let n = rng.gen_range(1..15);
        let line = |rng: &mut ChaCha8Rng| (0..rng.gen_range(0..10)).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ");
        let pairs: Vec<(String, String)> = (0..n).map(|_| (line(&mut rng), line(&mut rng))).collect();
        let base = bleu(&pairs.iter().map(|p| &p.0).collect::<Vec<_>>(), &pairs.iter().map(|p| &p.1).collect::<Vec<_>>(), true).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng);
        let perm = bleu(&shuffled.iter().map(|p| &p.0).collect::<Vec<_>>(), &shuffled.iter().map(|p| &p.1).collect::<Vec<_>>(), true).unwrap();
        let upper: Vec<String> = pairs.iter().map(|p| p.0.to_uppercase()).collect();
        let cased = bleu(&upper, &pairs.iter().map(|p| &p.1).collect::<Vec<_>>(), true).unwrap();
        if base == perm && base == cased {
            invariant += 1;
        }
    }
    outcome(
        format!("{:.2}", id.bleu) == "100.00" && clipped.precisions[0] == 0.25 && bp_err < BP_TOL && invariant == 50,
        format!(
            "identity {:.2}, clipped p1 {}, BP {:.12} (|Δ| {bp_err:.1e}), invariances {invariant}/50",
            id.bleu, clipped.precisions[0], short.brevity_penalty
        ),
    )
}

fn criterion_5() -> Outcome {
    let toy = generate(&ToyConfig {
        real_pairs: 300,
        dev_pairs: 50,
        test_pairs: 50,
        mono_size: 0,
        lexicon_size: 20,
        ..ToyConfig::default()
    })
    .unwrap();
    let vocab = Arc::new(Vocab::build(toy.train.pairs.iter().chain(&toy.test.pairs).flat_map(|p| [&p.source, &p.target]), &[]));
    let cfg = ModelConfig {
        embed_dim: 16,
        hidden_dim: 16,
        attention_dim: 16,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        learning_rate: 0.005,
        batch_size: 16,
        checkpoint_interval: 50,
        max_updates: 150,
        ..TrainConfig::default()
    };
    let out = train(init_model(&cfg, vocab.clone(), 5).unwrap(), &toy.train, &toy.dev, &tc).unwrap();
    let m: &ModelParams = &out.best.params;
    let dc1 = DecodeConfig { beam: 1, ..DecodeConfig::default() };
    let dc5 = DecodeConfig::default();
    let (mut same_greedy, mut same_ensemble) = (0, 0);
    for p in &toy.test.pairs {
        let src = vocab.encode(&p.source).unwrap();
        let b1 = beam_decode(&[m], &src, &dc1).unwrap();
        let g = greedy_decode(&[m], &src, dc1.max_len(src.len())).unwrap();
        same_greedy += usize::from(b1 == g);
        let single = beam_decode(&[m], &src, &dc5).unwrap();
        let ens = beam_decode(&[m, m, m], &src, &dc5).unwrap();
        same_ensemble += usize::from(single == ens);
    }
    let ck = Checkpoint {
        params: m.clone(),
        update_count: 1,
        dev_perplexity: 3.0,
        data_hash: String::new(),
    };
    let avg = average_checkpoints(&[ck.clone(), ck.clone(), ck.clone(), ck], 4).unwrap();
    let bitwise = avg.values().iter().zip(m.values()).all(|(a, b)| a.to_bits() == b.to_bits());
    outcome(
        same_greedy == 50 && same_ensemble == 50 && bitwise,
        format!("beam=1 ≡ greedy {same_greedy}/50, 3-model ensemble ≡ single {same_ensemble}/50, averaging identical checkpoints bitwise no-op: {bitwise}"),
    )
}

struct ToyRun {
    report: ExperimentReport,
    elapsed: Duration,
}

fn toy_config(out: &Path) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml");
    let mut cfg = ExperimentConfig::load(&path).expect("shipped toy config loads");
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn medians(r: &ExperimentReport, system: &str) -> [f64; 2] {
    Direction::BOTH.map(|d| r.median_bleu(system, d).unwrap_or(f64::NAN))
}

fn criterion_6(run: &ToyRun) -> Outcome {
    let r = &run.report;
    let (b1, b5, b6) = (medians(r, "B-1"), medians(r, "B-5*"), medians(r, "B-6*"));
    let a = b1.iter().all(|&x| x > B1_MIN_BLEU);
    let b = (0..2).all(|i| b5[i] >= b1[i] - TREND_SLACK) && (0..2).any(|i| b5[i] > b1[i]);
    let c = (0..2).all(|i| b6[i] >= b5[i] - TREND_SLACK);
    let time = run.elapsed < TOY_BUDGET;
    outcome(
        a && b && c && time && r.cycles.len() == 3,
        format!(
            "median BLEU over {} seeds: B-1 {:.2}/{:.2}, B-5* {:.2}/{:.2}, B-6* {:.2}/{:.2}; (a) {a} (b) {b} (c) {c}; experiment {:.0?}",
            r.cycles.len(),
            b1[0],
            b1[1],
            b5[0],
            b5[1],
            b6[0],
            b6[1],
            run.elapsed
        ),
    )
}

fn criterion_7(run: &ToyRun) -> Outcome {
    let c: &CycleResult = &run.report.cycles[0];
    let cost = &c.cost;
    let base = &c.rounds[0];
    let serves_both = base.bleu.len() == 2 && cost.trainings(SETUP_UNI) == 2 && cost.find(SETUP_BI, "B-1").is_some();
    let (ft, scratch) = (cost.find(SETUP_BI, "B-5*"), cost.find(SETUP_SCRATCH, "B-5"));
    let fewer = matches!((ft, scratch), (Some(f), Some(s)) if f.checkpoints < s.checkpoints);
    let totals_ok = run.report.cycles.iter().all(|c| {
        let sum = |setup: &str| c.systems().filter(|s| c.cost.stages.iter().any(|st| st.setup == setup && st.stage == s.system)).map(|s| s.outcome.history.len()).sum::<usize>();
        [SETUP_BI, SETUP_UNI, SETUP_SCRATCH].iter().all(|s| c.cost.total(s) == sum(s))
    });
    let starts_from_snapshot = c.rounds.iter().skip(1).all(|r| r.fine_tuned);
    outcome(
        serves_both && fewer && totals_ok && starts_from_snapshot,
        format!(
            "bi-directional base: 1 training for 2 directions vs {} uni-directional trainings; B-5* {} checkpoints vs B-5 from scratch {}; totals = Σ history: {totals_ok}",
            cost.trainings(SETUP_UNI),
            ft.map_or(0, |s| s.checkpoints),
            scratch.map_or(0, |s| s.checkpoints)
        ),
    )
}

fn criterion_8(run: &ToyRun) -> Outcome {
    let rows = &run.report.sweep;
    let csv = run.report.sweep_csv.clone().unwrap_or_default();
    let feasible = rows.iter().filter(|r| r.feasible).count();
    let well_formed = rows.len() == 6 && feasible == 6 && csv.lines().count() == 7 && rows.iter().all(|r| r.bleu.len() == 3);
    let mut by: HashMap<(usize, String), f64> = HashMap::new();
    for r in rows {
        by.insert((r.k, r.direction.clone()), r.median());
    }
    let dirs: Vec<String> = rows.iter().map(|r| r.direction.clone()).take(2).collect();
    let trend = dirs.iter().all(|d| by[&(4, d.clone())] >= by[&(1, d.clone())] - TREND_SLACK);
    let summary: Vec<String> = dirs
        .iter()
        .map(|d| format!("{d}: k=1 {:.2}, k=2 {:.2}, k=4 {:.2}", by[&(1, d.clone())], by[&(2, d.clone())], by[&(4, d.clone())]))
        .collect();
    outcome(well_formed && trend, format!("{} rows; {}", rows.len(), summary.join("; ")))
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let make = || {
        let mut cfg = toy_config(tmp.path());
        cfg.seeds = 1;
        cfg.sweep_k = vec![1];
        cfg.toy.as_mut().unwrap().real_pairs = 200;
        cfg.toy.as_mut().unwrap().mono_size = 600;
        cfg.plan.rounds = 1;
        cfg.plan.k = 1;
        cfg.plan.train.max_updates = 60;
        cfg.plan.train.checkpoint_interval = 20;
        cfg.plan.finetune.as_mut().unwrap().max_updates = 40;
        cfg.plan.finetune.as_mut().unwrap().checkpoint_interval = 20;
        cfg.plan.compare_scratch = false;
        cfg.plan.compare_unidirectional = false;
        cfg
    };
    let a = run_experiment(&make()).unwrap();
    let b = run_experiment(&make()).unwrap();
    let same_scores = a.scores_tsv == b.scores_tsv && a.cost_tsv == b.cost_tsv && a.sweep_csv == b.sweep_csv;
    let same_hashes = a.manifest == b.manifest;
    let artifacts = a.manifest.lines().count() - 1;
    outcome(
        same_scores && same_hashes && artifacts > 10,
        format!("identical score tables: {same_scores}; identical hashes for {artifacts} artifacts: {same_hashes}"),
    )
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("[{}] criterion {n}: {}", if o.ok { "PASS" } else { "FAIL" }, o.detail);
        if !o.ok {
            failed.push(n);
        }
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());

    let tmp = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let toy = run_experiment(&toy_config(tmp.path()));
    let elapsed = t.elapsed();
    match toy {
        Ok(report_) => {
            let run = ToyRun { report: report_, elapsed };
            report(6, criterion_6(&run));
            report(7, criterion_7(&run));
            report(8, criterion_8(&run));
        }
        Err(e) => {
            for n in 6..=8 {
                report(n, outcome(false, format!("toy experiment failed: {e}")));
            }
        }
    }
    report(9, criterion_9());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
