use std::collections::BTreeMap;

use enercurate_core::bench::{grade_multiple_choice, GradingResult};
use enercurate_core::model::{
    BenchItem, BenchKind, BenchOption, CandidateAnswerSet, CitationGraph, Corpus, Dimension,
    Document, Gold, InstructionSample, PreferencePair, Provenance, QualityReport, RankedAnswerSet,
    Source, Task, Tier, TieredAnswer, WhitespaceTokenizer,
};
use proptest::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn round_trip<T: Serialize + DeserializeOwned + PartialEq + std::fmt::Debug>(
    value: &T,
) -> Result<(), TestCaseError> {
    let text = serde_json::to_string(value).unwrap();
    let back: T = serde_json::from_str(&text).unwrap();
    prop_assert_eq!(&back, value);
    Ok(())
}

fn text() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 ,.\u{e9}\u{4e2d}]{1,40}"
}

fn source() -> impl Strategy<Value = Source> {
    prop::sample::select(vec![
        Source::Oap,
        Source::Oajp,
        Source::Sp,
        Source::DmtAc,
        Source::Iead,
        Source::Synthetic,
    ])
}

fn task() -> impl Strategy<Value = Task> {
    prop::sample::select(Task::ALL.to_vec())
}

fn score() -> impl Strategy<Value = f64> {
    (0u32..=100).prop_map(|s| f64::from(s) / 10.0)
}

fn document() -> impl Strategy<Value = Document> {
    (
        "[a-z0-9/]{1,12}",
        source(),
        "[a-z ]{1,10}",
        text(),
        prop::collection::btree_map("[a-z]{1,5}", text(), 0..3),
    )
        .prop_map(|(id, src, sub, body, meta)| {
            let mut d = Document::new(id, src, sub, body, &WhitespaceTokenizer);
            d.meta = meta;
            d
        })
}

proptest! {
    #[test]
    fn documents_and_corpora(docs in prop::collection::vec(document(), 0..6)) {
        for d in &docs {
            round_trip(d)?;
        }
        round_trip(&Corpus::new(docs))?;
    }

    #[test]
    fn instruction_samples(ins in text(), input in "[a-z ]{0,20}", out in text(), t in task(),
                           prov in prop::sample::select(vec![Provenance::Seed, Provenance::AgentGenerated, Provenance::Optimized])) {
        round_trip(&InstructionSample::new(ins, input, out, t, "power", prov).unwrap())?;
    }

    #[test]
    fn quality_reports(s in prop::array::uniform4(score()), reasons in prop::array::uniform4(text()), round in 1u32..=10) {
        let scores: BTreeMap<Dimension, f64> = Dimension::ALL.into_iter().zip(s).collect();
        let reasons: BTreeMap<Dimension, String> = Dimension::ALL.into_iter().zip(reasons).collect();
        round_trip(&QualityReport::new(scores, reasons, round).unwrap())?;
    }

    #[test]
    fn ranked_sets_and_pairs(q in text(), answers in prop::array::uniform4(text()), rank in 1u8..=3) {
        let set = RankedAnswerSet {
            question_id: "q".into(),
            question: q.clone(),
            tiered_answers: Tier::ORDER.iter().zip(&answers).map(|(&tier, t)| TieredAnswer { tier, text: t.clone() }).collect(),
        };
        round_trip(&set)?;
        round_trip(&PreferencePair { question_id: "q".into(), prompt: q, chosen: answers[0].clone(), rejected: answers[1].clone(), pair_rank: rank })?;
    }

    #[test]
    fn candidate_sets(cands in prop::collection::vec(text(), 1..6), scored in any::<bool>()) {
        let scores = scored.then(|| (0..cands.len()).map(|i| i as f64 * 1.5).collect());
        round_trip(&CandidateAnswerSet { question_id: "c".into(), question: "q".into(), candidates: cands, scores })?;
    }

    #[test]
    fn bench_items_and_grades(n in 2usize..=5, gold_mask in 1u32..32, answer_mask in 0u32..32) {
        let labels: Vec<String> = (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
        let pick = |mask: u32| labels.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, l)| l.clone()).collect();
        let gold: std::collections::BTreeSet<String> = pick(gold_mask);
        prop_assume!(!gold.is_empty());
        let options = labels.iter().map(|l| BenchOption { label: l.clone(), text: format!("option {l}") }).collect();
        let item = BenchItem::new("m", BenchKind::MultipleChoice, "stem", Some(options), Gold::Labels(gold)).unwrap();
        round_trip(&item)?;
        let result: GradingResult = grade_multiple_choice(&item, &pick(answer_mask)).unwrap();
        round_trip(&result)?;
    }

    #[test]
    fn citation_graphs(n in 1usize..8, raw in prop::collection::vec((0usize..8, 0usize..8), 0..20)) {
        let nodes: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let edges = raw.into_iter().filter(|(a, b)| a < &n && b < &n).map(|(a, b)| (nodes[a].clone(), nodes[b].clone()));
        round_trip(&CitationGraph::from_edges_lenient(nodes.clone(), edges))?;
    }
}
