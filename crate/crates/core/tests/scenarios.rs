use std::path::{Path, PathBuf};

use radner::economy::Economy;
use radner::scenario::Scenario;

fn shipped() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    files
}

#[test]
fn six_scenarios_ship() {
    assert_eq!(shipped().len(), 6);
}

#[test]
fn shipped_scenarios_round_trip() {
    for path in shipped() {
        let s = Scenario::load(&path).unwrap();
        assert_eq!(
            Some(s.name.as_str()),
            path.file_stem().and_then(|n| n.to_str())
        );
        let text = s.to_toml().unwrap();
        let back = Scenario::from_toml(&text, "round trip").unwrap();
        assert_eq!(back, s, "{}", path.display());
    }
}

#[test]
fn shipped_scenarios_build_economies() {
    for path in shipped() {
        let s = Scenario::load(&path).unwrap();
        let econ = Economy::new(s.economy_spec(), s.splitter).unwrap();
        assert_eq!(econ.n_agents(), s.agents.len());
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let path = shipped().into_iter().next().unwrap();
    let text = std::fs::read_to_string(path).unwrap() + "\n[grid]\nspace_pts = 10\n";
    assert!(Scenario::from_toml(&text, "typo").is_err());
}
