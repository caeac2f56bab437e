//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::E;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use calibrec::calib::{
    item_bias, log_balance, realized_distribution, smooth, target_distribution, user_bias, Balance, BiasParams,
    Distribution, Divergence, LambdaPolicy, SmoothingParams, TradeOffSpec,
};
use calibrec::ingest::Domain;
use calibrec::metrics::{average_precision, evaluate_user, EvaluationConfig};
use calibrec::model::{CandidateItem, GenreSet, GenreUniverse};
use calibrec::pipeline::{run_all, DatasetConfig, ExperimentConfig, Layout};
use calibrec::protocol::{decide, performance, read_decision_input, DecisionInput};
use calibrec::recommend::{Algorithm, CandidateList, RecommenderConfig};
use calibrec::selector::{brute_force_select, greedy_select, greedy_step_certificate, RankedList, SelectionProblem};

use common::{random_distribution, random_genre_set, random_instance};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

// ---------------------------------------------------------------------------------------
// 1. reference decision tables

fn table_rows(path: &Path) -> Vec<(String, String, String, f64, f64, f64)> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            let num = |i: usize| r[i].parse::<f64>().unwrap();
            (
                r[0].to_string(),
                r[1].to_string(),
                r[2].to_string(),
                num(4),
                num(5),
                num(6),
            )
        })
        .collect()
}

fn check_table(name: &str, winner: &str, s: f64) -> Outcome {
    let path = fixture(name);
    let DecisionInput::Scores(scores) = read_decision_input(&path).map_err(|e| e.to_string())? else {
        return Err(format!("{name}: not read as a score table"));
    };
    let (w, ws) = decide(scores.iter().map(|(id, s)| (id, *s))).map_err(|e| e.to_string())?;
    ensure!(
        w.label() == winner && ws == s,
        "{name}: winner {} s={ws}, expected {winner} s={s}",
        w.label()
    );
    let mut checked = 0;
    for (rec, div, bal, cce, cmc, s) in table_rows(&path) {
        if div == "KL" {
            continue;
        }
        let sum = performance(cce, cmc);
        ensure!(
            (sum - s).abs() <= 0.01 + 1e-9,
            "{name}: {div}-{bal}-{rec}: {cce} + {cmc} = {sum} != {s}"
        );
        checked += 1;
    }
    Ok(format!("{winner} s={s}, {checked} CHI/HE rows consistent"))
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let ml = check_table("movielens_decision.csv", "CHI-LOG-SVD++", 12.14)?;
    let tp = check_table("tasteprofile_decision.csv", "CHI-LIN-Item-KNN", 91.75)?;
    let spent = start.elapsed();
    ensure!(spent < Duration::from_secs(1), "took {spent:?}");
    Ok(format!("Movielens {ml}; Taste Profile {tp}"))
}

// ---------------------------------------------------------------------------------------
// 2. divergences against an independent evaluation

/// Compensated (Neumaier) sum.
fn nsum(terms: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for t in terms {
        let s = sum + t;
        comp += if sum.abs() >= t.abs() {
            (sum - s) + t
        } else {
            (t - s) + sum
        };
        sum = s;
    }
    sum + comp
}

fn oracle_kl(p: &[f64], q: &[f64]) -> f64 {
    nsum(
        p.iter()
            .zip(q)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, b)| a * (a.ln() - b.ln())),
    ) / 2f64.ln()
}

fn oracle_he(p: &[f64], q: &[f64]) -> f64 {
    // √p − √q = (p − q)/(√p + √q) avoids cancelling nearly equal roots
    let s = nsum(p.iter().zip(q).filter(|(a, b)| **a + **b > 0.0).map(|(a, b)| {
        let d = (a - b) / (a.sqrt() + b.sqrt());
        d * d
    }));
    (2.0 * s).sqrt()
}

fn oracle_chi(p: &[f64], q: &[f64]) -> f64 {
    nsum(
        p.iter()
            .zip(q)
            .filter(|(_, b)| **b > 0.0)
            .map(|(a, b)| (a - b) * (a - b) / b),
    )
}

fn criterion_2() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = r.gen_range(2..25);
        let p = Distribution::new(random_distribution(&mut r, n, 0.3)).unwrap();
        let q = Distribution::new(random_distribution(&mut r, n, 0.4)).unwrap();
        let q_s = smooth(&q, &p, SmoothingParams::default()).unwrap();
        let cases = [
            (Divergence::Kl, &q_s, oracle_kl(p.probs(), q_s.probs())),
            (Divergence::He, &q, oracle_he(p.probs(), q.probs())),
            (Divergence::He, &q_s, oracle_he(p.probs(), q_s.probs())),
            (Divergence::Chi, &q_s, oracle_chi(p.probs(), q_s.probs())),
        ];
        for (d, qq, want) in cases {
            let got = d.between(&p, qq).map_err(|e| e.to_string())?;
            let err = (got - want).abs();
            ensure!(err <= 1e-9, "{d}: {got} vs oracle {want}");
            worst = worst.max(err);
        }
        for d in Divergence::ALL {
            ensure!(d.between(&p, &p).unwrap() == 0.0, "{d}(p, p) != 0");
        }
        let he = Divergence::He.between(&p, &q).unwrap();
        ensure!(he <= 2.0, "HE = {he} > 2");

        // disjoint supports: p on the first k genres, q on the rest
        let k = r.gen_range(1..n);
        let mut a = random_distribution(&mut r, k, 0.0);
        a.resize(n, 0.0);
        let mut b = vec![0.0; k];
        b.extend(random_distribution(&mut r, n - k, 0.0));
        let he = Divergence::He
            .between(&Distribution::new(a).unwrap(), &Distribution::new(b).unwrap())
            .unwrap();
        ensure!((he - 2.0).abs() <= 1e-12, "HE on disjoint supports = {he}");
    }
    Ok(format!(
        "1000 pairs, max deviation {worst:.1e}; F(p,p)=0; HE ≤ 2, = 2 on disjoint supports"
    ))
}

// ---------------------------------------------------------------------------------------
// 3. normalization

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n_genres = r.gen_range(1..=20);
        let items: Vec<(GenreSet, f64)> = (0..r.gen_range(1..60))
            .map(|_| (random_genre_set(&mut r, n_genres, 5), r.gen_range(0.5..5.0)))
            .collect();
        let pairs: Vec<(&GenreSet, f64)> = items.iter().map(|(g, w)| (g, *w)).collect();
        let split = r.gen_range(1..=pairs.len());
        for d in [
            target_distribution(&pairs, n_genres).unwrap(),
            realized_distribution(&pairs[..split], n_genres).unwrap(),
        ] {
            worst = worst.max((d.probs().iter().sum::<f64>() - 1.0).abs());
        }
    }
    ensure!(worst <= 1e-9, "sum deviates by {worst}");

    let universe = GenreUniverse::new(["Pop", "Rock", "Pagode", "Funk"]);
    let set = |labels: &[&str]| {
        let owned: Vec<String> = labels.iter().map(|l| l.to_string()).collect();
        universe.genre_set(&owned).unwrap()
    };
    let (i1, i2, i8) = (
        set(&["Pop", "Rock"]),
        set(&["Pop"]),
        set(&["Pop", "Rock", "Pagode", "Funk"]),
    );
    let p = target_distribution(&[(&i1, 1.0), (&i2, 4.0), (&i8, 5.0)], universe.len()).unwrap();
    let pop = p.get(universe.index_of("Pop").unwrap());
    ensure!((pop - 0.42073).abs() <= 1e-5, "U-001 Pop = {pop}");
    Ok(format!("1000 profiles, max |Σ−1| {worst:.1e}; U-001 Pop = {pop:.5}"))
}

// ---------------------------------------------------------------------------------------
// 4. greedy certificate

fn problem<'a>(
    inst: &common::RandomInstance,
    bias: &'a BiasParams,
    div: Divergence,
    bal: Balance,
    n: usize,
    lambda: f64,
) -> SelectionProblem<'a> {
    let spec = TradeOffSpec::new(bal, div, LambdaPolicy::Constant(lambda));
    SelectionProblem::new(&inst.list, &inst.genres, inst.p.clone(), spec, bias, n, lambda).unwrap()
}

fn random_bias(r: &mut impl Rng, inst: &common::RandomInstance) -> BiasParams {
    let mut bias = BiasParams::new(r.gen_range(2.5..4.0));
    for c in &inst.list.items {
        bias.item_bias.insert(c.item_id.clone(), r.gen_range(-0.5..0.5));
    }
    bias
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let mut per_pair: BTreeMap<String, usize> = BTreeMap::new();
    for k in 0..500 {
        let (div, bal) = (Divergence::ALL[k % 3], Balance::ALL[(k / 3) % 2]);
        let (n_cand, n_genres) = (r.gen_range(1..40), r.gen_range(2..19));
        let inst = random_instance(&mut r, n_cand, n_genres);
        let bias = random_bias(&mut r, &inst);
        let (n, lambda) = (r.gen_range(1..15), r.gen_range(0.0..=1.0));
        let prob = problem(&inst, &bias, div, bal, n, lambda);
        let ranked = greedy_select(&prob).map_err(|e| e.to_string())?;
        ensure!(
            greedy_step_certificate(&prob, &ranked),
            "certificate failed on instance {k} ({div}-{bal})"
        );
        *per_pair.entry(format!("{div}-{bal}")).or_default() += 1;
    }
    for _ in 0..100 {
        let (n_cand, n_genres) = (r.gen_range(1..40), r.gen_range(2..19));
        let inst = random_instance(&mut r, n_cand, n_genres);
        let bias = BiasParams::new(3.0);
        let n = r.gen_range(1..15);
        for div in Divergence::ALL {
            let ranked = greedy_select(&problem(&inst, &bias, div, Balance::Lin, n, 0.0)).unwrap();
            let prefix = &inst.list.items[..n.min(inst.list.items.len())];
            ensure!(ranked.items == prefix, "λ=0 LIN list differs from the candidate prefix");
        }
    }
    let counts: Vec<String> = per_pair.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    Ok(format!(
        "500 certificates ({}); λ=0 LIN = prefix on 300 lists",
        counts.join(" ")
    ))
}

// ---------------------------------------------------------------------------------------
// 5. greedy versus exhaustive optimum

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut r = rng(5);
    let (mut ratios, mut exact, mut max_gap) = (Vec::new(), 0, 0.0f64);
    for k in 0..200 {
        let (div, bal) = (Divergence::ALL[k % 3], Balance::ALL[(k / 3) % 2]);
        let n_genres = r.gen_range(3..12);
        let inst = random_instance(&mut r, 8, n_genres);
        let bias = random_bias(&mut r, &inst);
        let lambda = r.gen_range(0.0..=1.0);
        let prob = problem(&inst, &bias, div, bal, 3, lambda);
        let greedy = *greedy_select(&prob).unwrap().objective_trace.last().unwrap();
        let best = brute_force_select(&prob).map_err(|e| e.to_string())?.value;
        ensure!(
            greedy <= best + 1e-9 * best.abs().max(1.0),
            "greedy {greedy} above optimum {best}"
        );
        let gap = best - greedy;
        max_gap = max_gap.max(gap);
        if gap <= 1e-12 * best.abs().max(1.0) {
            exact += 1;
        }
        if best > 0.0 && greedy > 0.0 {
            ratios.push(greedy / best);
        }
    }
    let spent = start.elapsed();
    ensure!(spent < Duration::from_secs(30), "took {spent:?}");
    ratios.sort_by(f64::total_cmp);
    let q = |f: f64| ratios[((ratios.len() - 1) as f64 * f) as usize];
    Ok(format!(
        "200 instances in {:.2}s; optimal {exact}/200; greedy/optimum over {} positive cases: min {:.4} p10 {:.4} median {:.4}; max gap {max_gap:.3e}",
        spent.as_secs_f64(),
        ratios.len(),
        q(0.0),
        q(0.1),
        q(0.5)
    ))
}

// ---------------------------------------------------------------------------------------
// 6. more weight on calibration gives better calibrated lists

fn criterion_6() -> Outcome {
    let mut r = rng(6);
    let users: Vec<_> = (0..150).map(|_| random_instance(&mut r, 60, 18)).collect();
    let bias = BiasParams::new(3.0);
    let smoothing = SmoothingParams::default();
    let mut report = Vec::new();
    for div in Divergence::ALL {
        let mut means = Vec::new();
        for lambda in [0.0, 0.5, 1.0] {
            let mut total = 0.0;
            for inst in &users {
                let ranked = greedy_select(&problem(inst, &bias, div, Balance::Lin, 10, lambda)).unwrap();
                let pairs: Vec<(&GenreSet, f64)> = ranked
                    .items
                    .iter()
                    .map(|c| (&inst.genres[&c.item_id], c.predicted_weight))
                    .collect();
                let q = realized_distribution(&pairs, inst.p.len()).unwrap();
                total += div.between(&inst.p, &smooth(&q, &inst.p, smoothing).unwrap()).unwrap();
            }
            means.push(total / users.len() as f64);
        }
        ensure!(
            means[0] >= means[1] && means[1] >= means[2] && means[2] < means[0],
            "{div}: means at λ=0, 0.5, 1 are {means:?}"
        );
        report.push(format!("{div} {:.4}→{:.4}→{:.4}", means[0], means[1], means[2]));
    }
    Ok(format!("150 users; {}", report.join(", ")))
}

// ---------------------------------------------------------------------------------------
// 7. end-to-end desk run

fn desk_config(data: &Path) -> ExperimentConfig {
    let (ratings, movies) = common::write_movielens(data, 640, 1000, 77);
    let mut cfg = ExperimentConfig {
        dataset: DatasetConfig {
            domain: Domain::Movie,
            interactions: ratings,
            genres: movies,
        },
        recommenders: vec![
            RecommenderConfig::new(Algorithm::ItemKnn),
            RecommenderConfig::new(Algorithm::FunkSvd),
        ],
        repetitions: 1,
        seed: 2024,
        ..Default::default()
    };
    cfg.preprocess.min_profile_size = 20;
    cfg
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let data = TempDir::new().unwrap();
    let cfg = desk_config(data.path());
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let manifest = run_all(&cfg, &Layout::new(a.path())).map_err(|e| e.to_string())?;
    let spent = start.elapsed();
    ensure!(spent < Duration::from_secs(15 * 60), "run took {spent:?}");
    ensure!(
        manifest.combinations.len() == 2 * 78,
        "{} combinations",
        manifest.combinations.len()
    );
    ensure!(
        manifest.done() == manifest.combinations.len(),
        "failed: {:?}",
        manifest.combinations.iter().find(|c| c.error.is_some())
    );

    let layout = Layout::new(a.path());
    let users = fs::read_to_string(layout.split(0))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect::<HashSet<_>>()
        .len();
    ensure!(users >= 500, "only {users} users survived filtering");
    let mut rdr = csv::Reader::from_path(layout.metrics()).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (map, mace, mrmc): (f64, f64, f64) = (
            rec[5].parse().unwrap(),
            rec[6].parse().unwrap(),
            rec[7].parse().unwrap(),
        );
        ensure!(
            (0.0..=1.0).contains(&map) && mace >= 0.0 && mrmc >= 0.0,
            "bad metrics row {rec:?}"
        );
        rows += 1;
    }
    ensure!(rows == 156, "{rows} metrics rows");
    let DecisionInput::Computed(protocol, failed) = read_decision_input(&layout.metrics()).unwrap() else {
        return Err("metrics file not recognized".into());
    };
    ensure!(failed.is_empty(), "undefined protocol rows: {failed:?}");
    ensure!(protocol.iter().all(|p| p.s == p.cce + p.cmc), "s != cce + cmc");

    run_all(&cfg, &Layout::new(b.path())).map_err(|e| e.to_string())?;
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let manifest_name = Path::new("manifest.json");
    ensure!(fa.keys().eq(fb.keys()), "reruns wrote different file sets");
    for (name, bytes) in &fa {
        if name != manifest_name {
            ensure!(*bytes == fb[name], "{} differs between reruns", name.display());
        }
    }
    let winner = manifest
        .winner
        .as_ref()
        .map(|w| format!("{} s={:.3}", w.system, w.s))
        .unwrap_or_default();
    Ok(format!(
        "{users} users, 156 combinations in {:.1}s; {} files byte-identical on rerun; winner {winner}",
        spent.as_secs_f64(),
        fa.len() - 1
    ))
}

// ---------------------------------------------------------------------------------------
// 8. metric identities

fn criterion_8() -> Outcome {
    let universe = GenreUniverse::new(["Pop", "Rock", "Jazz", "Funk"]);
    let all = universe.genre_set(universe.labels()).unwrap();
    let pop = universe.genre_set(&["Pop".to_string()]).unwrap();
    let genres: HashMap<String, GenreSet> = (0..12)
        .map(|i| (format!("all{i}"), all.clone()))
        .chain((0..12).map(|i| (format!("pop{i}"), pop.clone())))
        .collect();
    let fixtures = [
        ("all", Distribution::uniform(4)),
        ("pop", Distribution::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap()),
    ];
    let relevant: HashSet<&str> = HashSet::new();
    for (prefix, p) in fixtures {
        ensure!(
            p.get(universe.index_of("Pop").unwrap()) > 0.0,
            "fixture target misses Pop"
        );
        let ranked = RankedList {
            user_id: "u".into(),
            items: (0..12)
                .map(|i| CandidateItem::new(format!("{prefix}{i}"), 5.0 - i as f64 * 0.3))
                .collect(),
            objective_trace: vec![0.0; 12],
        };
        for div in Divergence::ALL {
            let cfg = EvaluationConfig {
                eval_divergence: div,
                ..Default::default()
            };
            let e = evaluate_user(&ranked, &genres, &relevant, &p, &cfg).map_err(|e| e.to_string())?;
            ensure!(
                e.ace.abs() <= 1e-12 && e.rmc.abs() <= 1e-12,
                "{prefix}/{div}: ACE {} RMC {}",
                e.ace,
                e.rmc
            );
        }
    }

    let ranked = ["a", "b", "c"];
    let cases: [(&[&str], f64); 4] = [
        (&["a", "c"], 5.0 / 6.0),
        (&["a", "b", "c"], 1.0),
        (&["x"], 0.0),
        (&["c", "z"], 1.0 / 6.0),
    ];
    for (rel, want) in cases {
        let rel: HashSet<&str> = rel.iter().copied().collect();
        let ap = average_precision(&ranked, &rel, 3).unwrap();
        ensure!((ap - want).abs() <= 1e-9, "AP {rel:?} = {ap}, expected {want}");
    }
    let ap = average_precision(&ranked, &["a", "c"].into_iter().collect(), 3).unwrap();
    ensure!((ap - 0.83333).abs() <= 1e-5, "AP ranks {{1,3}} = {ap}");
    Ok(format!(
        "ACE = RMC = 0 on calibrated fixtures; AP ranks {{1,3}} = {ap:.5}"
    ))
}

// ---------------------------------------------------------------------------------------
// 9. logarithmic balance

fn criterion_9() -> Outcome {
    let mut r = rng(9);
    for _ in 0..1000 {
        let t: f64 = r.gen_range(-1e4..1e4);
        ensure!(log_balance(-t, 0.0, E) == -log_balance(t, 0.0, E), "not odd at t={t}");
    }
    let at = log_balance(E - 1.0, 0.0, E);
    ensure!((at - 1.0).abs() <= 1e-12, "f(e−1) = {at}");

    let mut bp = BiasParams::new(4.0);
    let b_i = item_bias(&[5.0, 5.0], &bp);
    ensure!((b_i - 2.0 / 2.01).abs() <= 1e-9, "b_i = {b_i}");
    ensure!(format!("{b_i:.6}") == "0.995025", "b_i rounds to {b_i:.6}");
    bp.item_bias.insert("x".into(), 0.2);
    let list = CandidateList {
        user_id: "u".into(),
        items: vec![CandidateItem::new("x", 4.5)],
    };
    let b_u = user_bias(&list.items, &bp);
    ensure!((b_u - 0.3 / 1.01).abs() <= 1e-9, "b_u = {b_u}");
    ensure!(format!("{b_u:.6}") == "0.297030", "b_u rounds to {b_u:.6}");
    Ok(format!(
        "odd over 1000 t; f(e−1) = {at}; b_i = {b_i:.6}; b_u = {b_u:.6}"
    ))
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("protocol table consistency", criterion_1),
        ("divergence correctness", criterion_2),
        ("distribution normalization", criterion_3),
        ("greedy certificate", criterion_4),
        ("oracle comparison", criterion_5),
        ("directional calibration effect", criterion_6),
        ("end-to-end desk run", criterion_7),
        ("metric identities", criterion_8),
        ("log balance contract", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let tag = format!("{}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| *f == tag || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{tag}] {name} ({secs:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL [{tag}] {name} ({secs:.2}s): {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
