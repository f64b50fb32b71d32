//! Adaptive exemplar selection on the planted archive, compared with a
//! fixed top-3.

use jitflow::corpus::planted_archive;
use jitflow::gateway::{EchoFilterChat, MockEmbedder};
use jitflow::retrieval::{ExemplarSelector, RetrievalMode};

pub fn run_example() {
    let planted = planted_archive();
    let embedder = MockEmbedder::new(7)
        .with_overrides(planted.overrides.clone())
        .unwrap();
    let filter = EchoFilterChat::new();

    let adaptive = ExemplarSelector::new(&embedder, &filter)
        .select(&planted.query, &planted.records)
        .unwrap();
    let top3 = ExemplarSelector::new(&embedder, &filter)
        .with_mode(RetrievalMode::TopK(3))
        .select(&planted.query, &planted.records)
        .unwrap();

    let scores = &adaptive.profile.as_ref().unwrap().scores;
    println!("top similarities: {:.3?}", &scores[..12]);
    println!("adaptive cutoff: {}", adaptive.cutoff);

    let hits = |ids: Vec<String>| {
        planted
            .relevant_ids
            .iter()
            .filter(|id| ids.contains(id))
            .count()
    };
    let a = hits(adaptive.selected_ids());
    let t = hits(top3.selected_ids());
    println!("relevant kept: adaptive {a}/10, top-3 {t}/10");
    assert_eq!(a, 10);
    assert_eq!(t, 3);
}

fn main() {
    run_example();
}
