//! Unbiased pass@k from n trials with s successes, exact and as a float.

use jitflow::eval::{pass_at_k, pass_at_k_exact, tokens_per_pass1};

pub fn run_example() {
    println!(" n  s   pass@1   pass@3");
    for (n, s) in [(3, 0), (3, 1), (3, 2), (3, 3), (10, 4)] {
        println!(
            "{n:>2} {s:>2}   {:.4}   {:.4}",
            pass_at_k(n, s, 1).unwrap(),
            pass_at_k(n, s, 3).unwrap()
        );
    }
    println!(
        "exact pass@3 for n=10, s=4: {}",
        pass_at_k_exact(10, 4, 3).unwrap()
    );
    println!("tokens per pass@1: {:?}", tokens_per_pass1(120_000, 6, 0.5));
    println!("with no passes:    {:?}", tokens_per_pass1(120_000, 6, 0.0));
}

fn main() {
    run_example();
}
