use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bitrans(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitrans")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bitrans(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn evaluate_identity_is_100() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("h.txt");
    fs::write(&f, "the cat sat on the mat\na b c d\n").unwrap();
    let out = ok(&["evaluate", "--hyp", p(&f), "--ref", p(&f)]);
    assert!(out.starts_with("BLEU = 100.00"), "{out}");
}

#[test]
fn errors_exit_nonzero_with_message() {
    let out = bitrans(&["evaluate", "--hyp", "/nonexistent/h", "--ref", "/nonexistent/r"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "seeds = 0\n[toy]\n").unwrap();
    let out = bitrans(&["run-experiment", "--config", p(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
}

#[test]
fn preprocess_filters_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.en"), dir.path().join("b.tl"));
    fs::write(&a, "Hello,  world\n\none two three\n").unwrap();
    fs::write(&b, "kumusta\nwala\nisa dalawa tatlo apat\n").unwrap();
    let (oa, ob) = (dir.path().join("a.tok"), dir.path().join("b.tok"));
    ok(&[
        "preprocess", "--input", p(&a), "--lang", "en", "--output", p(&oa), "--pair-input", p(&b), "--pair-lang", "tl", "--pair-output", p(&ob), "--max-len", "3",
    ]);
    assert_eq!(fs::read_to_string(&oa).unwrap(), "Hello , world\n");
    assert_eq!(fs::read_to_string(&ob).unwrap(), "kumusta\n");
}

/// Every stage on a tiny toy pair, chained through files.
#[test]
fn stages_chain_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let toy_cfg = d.join("toy.toml");
    fs::write(&toy_cfg, "real_pairs = 120\ndev_pairs = 20\ntest_pairs = 10\nmono_size = 200\nlexicon_size = 12\n").unwrap();
    let data = d.join("data");
    ok(&["make-toy", "--config", p(&toy_cfg), "--out", p(&data)]);
    let f = |n: &str| data.join(n);

    let codes = d.join("bpe.codes");
    ok(&["learn-bpe", "--input", p(&f("train.xa")), p(&f("train.xb")), "--ops", "20", "--output", p(&codes), "--protect", "<2xa>", "<2xb>"]);
    let seg = |name: &str| {
        let out = d.join(format!("{name}.bpe"));
        ok(&["apply-bpe", "--codes", p(&codes), "--input", p(&f(name)), "--output", p(&out), "--learned-on", p(&f("train.xa")), p(&f("train.xb"))]);
        out
    };
    let (tr1, tr2, dv1, dv2, mono2) = (seg("train.xa"), seg("train.xb"), seg("dev.xa"), seg("dev.xb"), seg("mono.xb"));
    // A model learned on other data is refused.
    let stale = bitrans(&["apply-bpe", "--codes", p(&codes), "--input", p(&f("dev.xa")), "--output", p(&d.join("x")), "--learned-on", p(&f("dev.xa"))]);
    assert!(!stale.status.success());

    let (lm_in, lm_out) = (d.join("in.lm"), d.join("out.lm"));
    ok(&["train-lm", "--input", p(&f("train.xb")), "--order", "2", "--output", p(&lm_in)]);
    ok(&["train-lm", "--input", p(&f("mono.xb")), "--order", "2", "--restrict-to", p(&lm_in), "--output", p(&lm_out)]);
    let (sel, sel_txt) = (d.join("sel.tsv"), d.join("sel.txt"));
    ok(&["select", "--pool", p(&f("mono.xb")), "--lm-in", p(&lm_in), "--lm-out", p(&lm_out), "--count", "50", "--output", p(&sel), "--text-output", p(&sel_txt)]);
    assert_eq!(fs::read_to_string(&sel_txt).unwrap().lines().count(), 50);

    let lp = ["--l1", "xa", "--l2", "xb"];
    let corpus = |recipe: &str, a: &Path, b: &Path, extra: &[&str], out: &Path| {
        let mut args = vec!["build-corpus", "--recipe", recipe, "--real-l1", p(a), "--real-l2", p(b), "--output", p(out)];
        args.extend(lp);
        args.extend(extra);
        ok(&args);
    };
    let (train_tsv, dev_tsv) = (d.join("train.tsv"), d.join("dev.tsv"));
    corpus("B-1", &tr1, &tr2, &[], &train_tsv);
    corpus("B-1", &dv1, &dv2, &[], &dev_tsv);

    let cfg = d.join("exp.toml");
    fs::write(
        &cfg,
        "[plan.model]\nembed_dim = 8\nhidden_dim = 8\nattention_dim = 8\n[plan.train]\nbatch_size = 16\nlearning_rate = 0.01\ncheckpoint_interval = 10\nmax_updates = 30\n[plan.finetune]\nbatch_size = 16\ncheckpoint_interval = 10\nmax_updates = 20\n",
    )
    .unwrap();
    let base = d.join("base");
    let mut args = vec!["train", "--train", p(&train_tsv), "--dev", p(&dev_tsv), "--config", p(&cfg), "--out", p(&base), "--vocab-extra", p(&mono2)];
    args.extend(lp);
    ok(&args);
    assert_eq!(fs::read_to_string(base.join("history.tsv")).unwrap().lines().count(), 4);
    let best = base.join("best.ckpt");

    let synth = d.join("synth.tsv");
    let mut args = vec!["backtranslate", "--model", p(&best), "--mono", p(&mono2), "--mono-lang", "xb", "--output", p(&synth), "--beam", "2"];
    args.extend(lp);
    ok(&args);
    let synth_text = fs::read_to_string(&synth).unwrap();
    assert_eq!(synth_text.lines().count(), 200);
    assert!(synth_text.lines().all(|l| l.ends_with("\txa>xb\tsynthetic-source")));

    let aug = d.join("aug.tsv");
    corpus("L1<>L2 L1*>L2", &tr1, &tr2, &["--synthetic-l1", p(&synth)], &aug);
    assert_eq!(fs::read_to_string(&aug).unwrap().lines().count(), 240 + 200);
    let ft = d.join("ft");
    let mut args = vec!["finetune", "--checkpoint", p(&best), "--train", p(&aug), "--dev", p(&dev_tsv), "--config", p(&cfg), "--out", p(&ft)];
    args.extend(lp);
    ok(&args);

    let avg = d.join("avg.ckpt");
    let ckpts: Vec<String> = fs::read_dir(&ft)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|x| x.file_name().unwrap().to_str().unwrap().starts_with("ckpt-"))
        .map(|x| x.to_str().unwrap().to_string())
        .collect();
    let mut args = vec!["avg-checkpoints", "--output", p(&avg), "--input"];
    args.extend(ckpts.iter().map(String::as_str));
    ok(&args);

    let hyp = d.join("hyp.xb");
    ok(&["translate", "--model", p(&avg), p(&best), "--input", p(&f("test.xa")), "--target-lang", "xb", "--bpe", p(&codes), "--output", p(&hyp), "--beam", "3"]);
    assert_eq!(fs::read_to_string(&hyp).unwrap().lines().count(), 10);
    let out = ok(&["evaluate", "--hyp", p(&hyp), "--ref", p(&f("test.xb"))]);
    assert!(out.starts_with("BLEU = "));
    let mut args = vec!["evaluate", "--model", p(&best), "--corpus", p(&dev_tsv)];
    args.extend(lp);
    assert!(ok(&args).starts_with("perplexity = "));
}

#[test]
fn run_experiment_writes_score_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        r#"out_dir = "out"
seeds = 1
[toy]
real_pairs = 100
dev_pairs = 20
test_pairs = 10
mono_size = 300
lexicon_size = 12
[preprocess]
mono_min_exclusive = 0
[plan]
k = 1
bpe_ops = 20
[plan.model]
embed_dim = 8
hidden_dim = 8
attention_dim = 8
[plan.train]
batch_size = 16
checkpoint_interval = 10
max_updates = 20
[plan.decode]
beam = 2
"#,
    )
    .unwrap();
    let out = ok(&["--threads", "1", "run-experiment", "--config", p(&cfg)]);
    for sys in ["\tB-1\t", "\tB-5*\t", "\tB-6*\t"] {
        assert!(out.contains(sys), "{sys} missing from\n{out}");
    }
    let root = dir.path().join("out");
    for f in ["scores.tsv", "cost.tsv", "manifest.tsv", "seed-1/round-2/synthetic.tsv", "seed-1/B-6s/decoder.ckpt"] {
        assert!(root.join(f).is_file(), "{f}");
    }
    let sweep = ok(&["sweep-k", "--config", p(&cfg), "--k", "1,50"]);
    assert_eq!(sweep.lines().count(), 5);
    assert!(sweep.lines().filter(|l| l.ends_with(",infeasible")).count() == 2);
}
