use std::path::Path;
use std::process::{Command, Output};

fn dynvrp(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_dynvrp")).current_dir(dir).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const QUICK: [&str; 8] = ["--generations", "15", "--mu", "8", "--lambda", "8", "--ls-time-limit-ms", "0"];

#[test]
fn batch_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for (topology, file) in [("uniform", "u.txt"), ("cl3", "c.txt")] {
        dynvrp(dir, &["gen-instance", "--topology", topology, "--n-mandatory", "6", "--n-dynamic", "12", "--eras", "3", "--seed", "4", "--out", file]);
    }
    let header = std::fs::read_to_string(dir.join("c.txt")).unwrap();
    assert!(header.starts_with("18 6 12 cl3 3 "));

    let run = dynvrp(dir, &[&["run", "--instance", "u.txt", "--path", "0.25,0.5,0.75", "--out-dir", "r"][..], &QUICK].concat());
    assert_eq!(String::from_utf8(run.stdout).unwrap().lines().count(), 4);
    assert!(dir.join("r/trace.csv").exists() && dir.join("r/tour.txt").exists());

    let sweep = [&["sweep", "--instances", "u.txt", "c.txt", "--d-set", "0.25,0.75", "--replicates", "2", "--out-dir", "s"][..], &QUICK].concat();
    dynvrp(dir, &sweep);
    let first = std::fs::read(dir.join("s/results.csv")).unwrap();
    let again = dynvrp(dir, &sweep);
    assert!(String::from_utf8_lossy(&again.stderr).contains("1 runs completed, 31 already present"));
    assert_eq!(std::fs::read(dir.join("s/results.csv")).unwrap(), first);

    let table = dynvrp(dir, &["aggregate", "--results", "s/results.csv"]);
    assert_eq!(String::from_utf8(table.stdout).unwrap().lines().count(), 5);
    dynvrp(dir, &[&["clairvoyant", "--instances", "u.txt", "c.txt", "--repeats", "2", "--out", "s/c.csv"][..], &QUICK].concat());
    dynvrp(dir, &["eval", "--results", "s/results.csv", "--clairvoyant", "s/c.csv", "--out", "s/i.csv"]);
    let indicators = std::fs::read_to_string(dir.join("s/i.csv")).unwrap();
    assert_eq!(indicators.lines().next().unwrap(), "instance,topology,path,replicate,bound,i_hv");
    assert_eq!(indicators.lines().count(), 1 + 32 + 2);
}

#[test]
fn rejects_bad_arguments() {
    let tmp = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| Command::new(env!("CARGO_BIN_EXE_dynvrp")).current_dir(tmp.path()).args(args).output().unwrap().status;
    assert!(!status(&["gen-instance", "--topology", "cl7"]).success());
    assert!(!status(&["run", "--instance", "missing.txt"]).success());
    assert!(!status(&["sweep"]).success());
}
