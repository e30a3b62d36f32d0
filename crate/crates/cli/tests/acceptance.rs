//! End-to-end acceptance checks. Runs every criterion, prints one
//! `PASS`/`FAIL` line each, and exits non-zero if any failed.

mod support;

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::{HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use cidx_core::corpus::demo_lexicon;
use cidx_core::evaluate::summarize_values;
use cidx_core::normalize::NormalizedDiagnosis;
use cidx_core::simulate::{run_seed, simulation_table};
use cidx_core::solvers::synthetic::pseudo_term;
use cidx_core::{
    aggregate, build_prompt, enumerate_groups, individual_score, normalize, parse_response, run_simulation, Corpus, Differential,
    ExactScore, Rank, SimulationConfig, SolverId, SolverKind, SynonymTable, TopK,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::{files_under, offline, read, Workspace, SYNTHETIC_ROSTER};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn solver(name: &str) -> SolverId {
    SolverId::new(name, SolverKind::Synthetic).unwrap()
}

fn diff(name: &str, terms: &[&str]) -> Differential {
    Differential::from_entries(
        solver(name),
        "case",
        terms.iter().map(|t| NormalizedDiagnosis { term: t.to_string(), original: t.to_string() }),
        terms.join("\n"),
    )
    .unwrap()
}

fn aggregation_oracle() -> Check {
    let d1 = diff("d1", &["alpha", "bravo", "charlie"]);
    let d2 = diff("d2", &["bravo", "alpha", "delta"]);
    let fixture = aggregate::<ExactScore>(&[&d1, &d2]).map_err(|e| e.to_string())?;
    ensure!(fixture == oracle::aggregate_oracle(&[&d1, &d2]).unwrap(), "fixture disagrees with oracle");
    let got: Vec<(&str, ExactScore)> = fixture.entries.iter().map(|e| (e.term.as_str(), e.aggregate_score)).collect();
    let want = [
        ("alpha", ExactScore::new(3, 2)),
        ("bravo", ExactScore::new(3, 2)),
        ("charlie", ExactScore::new(1, 3)),
        ("delta", ExactScore::new(1, 3)),
    ];
    ensure!(got == want, "fixture gave {got:?}");

    let pool: Vec<String> = (0..10).map(|i| format!("term{i}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for instance in 0..2000 {
        let n = rng.random_range(1..=4);
        let ds: Vec<Differential> = (0..n)
            .map(|s| {
                let len = rng.random_range(1..=5);
                let terms: Vec<&str> = pool.choose_multiple(&mut rng, len).map(String::as_str).collect();
                diff(&format!("s{s}"), &terms)
            })
            .collect();
        let refs: Vec<&Differential> = ds.iter().collect();
        let fast = aggregate::<ExactScore>(&refs).map_err(|e| e.to_string())?;
        let slow = oracle::aggregate_oracle(&refs).map_err(|e| e.to_string())?;
        ensure!(fast == slow, "instance {instance} differs: {fast:?} vs {slow:?}");
    }
    Ok(())
}

fn reciprocal_ranks() -> Check {
    for r in 1..=5 {
        let got = individual_score::<ExactScore>(Rank::new(r).unwrap());
        ensure!(got == ExactScore::new(1, r as i64), "rank {r} scored {got}");
    }
    Ok(())
}

fn table_one() -> Check {
    let rows: [(&str, &[f64], f64, f64); 7] = [
        ("size 1", &[39.5, 66.0, 58.5, 72.0], 59.0, 6.1),
        ("size 2", &[58.0, 64.5, 68.0, 73.5, 77.0, 73.5], 69.1, 2.6),
        ("size 3", &[70.0, 75.5, 79.0, 77.0], 75.3, 1.6),
        ("size 1 without gpt-4", &[39.5, 66.0, 58.5], 54.6, 6.4),
        ("size 2 without gpt-4", &[58.0, 64.5, 68.0], 63.5, 2.3),
        ("size 3 without gpt-4", &[70.0], 70.0, 0.0),
        ("size 4", &[80.0], 80.0, 0.0),
    ];
    for (label, values, mean, sem) in rows {
        let s = summarize_values(values, 1, TopK::Five).map_err(|e| e.to_string())?;
        ensure!((s.mean - mean).abs() <= 0.1 + 1e-9, "{label}: mean {} vs {mean}", s.mean);
        ensure!((s.sem - sem).abs() <= 0.1 + 1e-9, "{label}: sem {} vs {sem}", s.sem);
    }
    Ok(())
}

fn combination_counts() -> Check {
    let roster = |n: usize| -> Vec<SolverId> { (0..n).map(|i| solver(&format!("s{i}"))).collect() };
    let counts: Vec<usize> = (1..=4).map(|s| enumerate_groups(&roster(4), &[s]).len()).collect();
    ensure!(counts == [4, 6, 4, 1], "four solvers gave {counts:?}");
    for n in 0..=8usize {
        for s in 1..=n {
            let c = (0..s).fold(1, |acc, i| acc * (n - i) / (i + 1));
            let got = enumerate_groups(&roster(n), &[s]).len();
            ensure!(got == c, "C({n},{s}) = {c}, got {got}");
        }
    }
    Ok(())
}

fn trend_property() -> Check {
    let default = SimulationConfig::default();
    let report = run_simulation(&default).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for k in [TopK::Five, TopK::Three] {
        let f = report.monotone.iter().find(|m| m.k == k).ok_or("no monotone fraction")?;
        notes.push(format!("top-{} {}/{}", k.get(), f.monotone_seeds, f.n_seeds));
        ensure!(f.fraction >= 0.95, "top-{} monotone in {:.0}% of seeds", k.get(), f.fraction * 100.0);
    }
    let without = default.without_solver("sim-d");
    let report = run_simulation(&without).map_err(|e| e.to_string())?;
    let f = report.monotone.iter().find(|m| m.k == TopK::Five).ok_or("no monotone fraction")?;
    notes.push(format!("without sim-d {}/{}", f.monotone_seeds, f.n_seeds));
    ensure!(f.fraction >= 0.95, "without sim-d monotone in {:.0}% of seeds", f.fraction * 100.0);
    println!("      {}", notes.join(", "));
    Ok(())
}

fn messy(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 14] =
        ["Barré", "Ölfaktorisch", "ﬁbrosis", "of", "THE", "Syndrome", "heart attack", "MI", "-", "'s", "(", ".", "\t", "ǅ"];
    let n = rng.random_range(0..8);
    let mut s = String::new();
    for _ in 0..n {
        match rng.random_range(0..4) {
            0 => s.push_str(PIECES.choose(rng).unwrap()),
            1 => {
                let len = rng.random_range(1..8);
                s.push_str(&pseudo_term(rng, len));
            }
            2 => s.push(' '),
            _ => s.push(rng.random::<char>()),
        }
    }
    s
}

fn normalization_suite() -> Check {
    let tables = [SynonymTable::default(), demo_lexicon()];
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..20_000 {
        let raw = messy(&mut rng);
        let table = &tables[i % 2];
        let once = normalize(&raw, table).term;
        let twice = normalize(&once, table).term;
        ensure!(once == twice, "not idempotent on {raw:?}: {once:?} then {twice:?}");
    }
    let t = SynonymTable::parse("").unwrap();
    let goldens = [
        ("Guillain-Barré Syndrome", "guillain barre"),
        ("of with by", ""),
        ("  Acute   Myocardial\tInfarction. ", "acute myocardial infarction"),
        ("Crohn's disease", "crohn s"),
        ("Disorder of the thyroid", "thyroid"),
        ("Sjögren syndrome", "sjogren"),
        ("ﬁbrosis", "fibrosis"),
    ];
    for (raw, want) in goldens {
        let got = normalize(raw, &t).term;
        ensure!(got == want, "{raw:?} gave {got:?}");
    }
    let lex = SynonymTable::parse("[synonyms]\n\"heart attack\" = \"myocardial infarction\"\n").unwrap();
    ensure!(normalize("Heart-Attack!", &lex).term == "myocardial infarction", "synonym not applied");
    ensure!(normalize("silent heart attack", &lex).term == "silent heart attack", "synonym matched a sub-phrase");
    Ok(())
}

fn top_k_monotone() -> Check {
    let config = SimulationConfig::default();
    let run = run_seed(&config, 11, &simulation_table()).map_err(|e| e.to_string())?;
    // Matches are grouped per (group, case) with k ascending.
    for triple in run.evaluation.matches.chunks(3) {
        let [m1, m3, m5] = triple else {
            return Err("match matrix is not a multiple of three".into());
        };
        ensure!(m1.k == TopK::One && m3.k == TopK::Three && m5.k == TopK::Five, "unexpected k order");
        ensure!((!m1.matched || m3.matched) && (!m3.matched || m5.matched), "{} {}: not monotone", m1.group.label(), m1.case_id);
    }
    for acc in run.evaluation.accuracies.chunks(3) {
        ensure!(
            acc[0].accuracy <= acc[1].accuracy && acc[1].accuracy <= acc[2].accuracy,
            "{}: accuracy falls with k",
            acc[0].group.label()
        );
    }
    Ok(())
}

fn parser_robustness() -> Check {
    let table = demo_lexicon();
    let id = solver("fuzz");
    let lines = ["1. Gout", "2) Heart attack", "- MI", "* Septic arthritis", "Here is my answer:", "", "of the", "•"];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut corpus: Vec<String> = (0..12_000)
        .map(|i| {
            let n = rng.random_range(0..12);
            (0..n)
                .map(|_| match (i % 2, rng.random_range(0..3)) {
                    (0, 0) => lines.choose(&mut rng).unwrap().to_string(),
                    (0, _) => {
                        let (num, len) = (rng.random_range(0..9), rng.random_range(1..12));
                        format!("{num}. {}", pseudo_term(&mut rng, len))
                    }
                    _ => (0..rng.random_range(0..30)).map(|_| rng.random::<char>()).collect(),
                })
                .collect::<Vec<_>>()
                .join("\n")
        })
        .collect();
    corpus.extend(
        [
            "1. Gout\n2. Cellulitis\n3. Septic arthritis",
            "- Gout\n- Pseudogout",
            "Sure. Here is the differential.\n1. Gout\n2. Gout\n3. Heart attack\n4. MI\n5. Lupus\n6. Sepsis\n7. Anemia",
            "I am not a doctor. Please consult a professional.",
        ]
        .map(String::from),
    );
    for raw in &corpus {
        if let Ok(d) = parse_response(raw, &table, &id, "c") {
            ensure!(!d.is_empty() && d.len() <= 5, "{} entries from {raw:?}", d.len());
            let mut seen = HashSet::new();
            for term in d.terms() {
                ensure!(!term.is_empty(), "empty term from {raw:?}");
                ensure!(seen.insert(term), "duplicate {term:?} from {raw:?}");
            }
        }
    }
    let contaminated = parse_response(&corpus[corpus.len() - 2], &table, &id, "c").map_err(|f| format!("{f:?}"))?;
    let terms: Vec<&str> = contaminated.terms().collect();
    ensure!(terms == ["gout", "myocardial infarction", "lupus", "sepsis", "anemia"], "contaminated response gave {terms:?}");
    Ok(())
}

fn determinism() -> Check {
    let ws = Workspace::new(SYNTHETIC_ROSTER);
    let env = HashMap::new();
    let snapshot = |dir: &std::path::Path| -> Vec<(String, Vec<u8>)> {
        files_under(dir)
            .into_iter()
            .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with("manifest-"))
            .map(|p| (p.display().to_string(), read(&p)))
            .collect()
    };
    ensure!(ws.run(&["query"], &env, offline()).code() == 0, "query failed");
    std::fs::write(ws.path("sim.toml"), "n_cases = 50\nn_seeds = 4\n").unwrap();
    let cfg = ws.path("sim.toml").display().to_string();
    let mut runs = Vec::new();
    for _ in 0..2 {
        ensure!(ws.run(&["evaluate"], &env, offline()).code() == 0, "evaluate failed");
        ensure!(ws.run(&["simulate", "--config", &cfg], &env, offline()).code() == 0, "simulate failed");
        runs.push(snapshot(&ws.out()));
    }
    ensure!(runs[0].len() == 9, "expected 9 report files, found {}", runs[0].len());
    ensure!(runs[0] == runs[1], "reports differ between identical runs");
    Ok(())
}

fn prompt_fidelity() -> Check {
    const TEMPLATE: &str = " What is the differential (list format of common shorthand non-abbreviated diagnoses) for the above case? Respond with ONLY diagnosis names (one per line) up to a max of 5.";
    let table = demo_lexicon();
    for case in &Corpus::demo() {
        let prompt = build_prompt(case);
        ensure!(prompt == format!("{}{TEMPLATE}", case.vignette_text), "{}: template mismatch", case.case_id);
        let lowered = prompt.to_lowercase();
        let normalized = format!(" {} ", table.term(&prompt));
        for accepted in &case.accepted_diagnoses {
            ensure!(!lowered.contains(&accepted.to_lowercase()), "{} leaks {accepted:?}", case.case_id);
            let term = table.term(accepted);
            ensure!(!normalized.contains(&format!(" {term} ")), "{} leaks {term:?} after normalization", case.case_id);
        }
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("aggregation matches the reference oracle", aggregation_oracle),
        ("reciprocal-rank scores are exact", reciprocal_ranks),
        ("published group statistics reproduce", table_one),
        ("group enumeration counts", combination_counts),
        ("accuracy grows with group size in simulation", trend_property),
        ("normalization idempotence and goldens", normalization_suite),
        ("top-k matching is monotone in k", top_k_monotone),
        ("response parser contract", parser_robustness),
        ("reports are byte-identical across reruns", determinism),
        ("prompt template fidelity", prompt_fidelity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(()) => println!("PASS {:>2} {name} ({secs:.1}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
