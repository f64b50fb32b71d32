//! Regenerates the shipped corpus under `fixtures/` (or the directory
//! given as the first argument).

use std::path::PathBuf;

pub fn run_example() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    let files = jitflow::corpus::write_fixtures(&dir).expect("fixture directory is writable");
    for f in files {
        println!("wrote {}", dir.join(f).display());
    }
}

fn main() {
    run_example();
}
