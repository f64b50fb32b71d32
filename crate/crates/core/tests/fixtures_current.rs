use std::path::{Path, PathBuf};

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn shipped_fixtures_match_the_generator() {
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let fresh = tempfile::tempdir().unwrap();
    jitflow::corpus::write_fixtures(fresh.path()).unwrap();
    let names = files(fresh.path());
    assert_eq!(
        names,
        files(&shipped),
        "run `cargo run --example generate_fixtures`"
    );
    for name in names {
        let a = std::fs::read(fresh.path().join(&name)).unwrap();
        let b = std::fs::read(shipped.join(&name)).unwrap();
        assert!(
            a == b,
            "{} is stale; run `cargo run --example generate_fixtures`",
            name.display()
        );
    }
}
