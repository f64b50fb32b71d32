//! Finds the breakpoint of a similarity profile with a two-segment fit.

use jitflow::retrieval::{adaptive_cutoff, cutoff_objective};

pub fn run_example() {
    // a steep head of five, then a flat tail
    let mut scores: Vec<f64> = (0..5).map(|i| 0.95 - 0.04 * i as f64).collect();
    scores.extend((0..15).map(|i| 0.40 - 0.002 * i as f64));

    for m in 2..=8 {
        println!(
            "m = {m}: objective {:.6}",
            cutoff_objective(&scores, m).unwrap()
        );
    }
    let m = adaptive_cutoff(&scores).unwrap();
    println!("cutoff = {m}");
    assert_eq!(m, 5);

    // too short to split into two segments
    assert!(adaptive_cutoff(&[0.9, 0.8, 0.7]).is_err());
}

fn main() {
    run_example();
}
