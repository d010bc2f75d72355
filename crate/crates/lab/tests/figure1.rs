use bbmre::env::{save_lattice_environment, LatticeEnvironment};
use lab::table::Table;
use lab::{Config, Experiment};
use toml::Value;

fn short(c: &mut Config) {
    for (k, v) in [("t_end", 20.0), ("stationary_from", 5.0)] {
        c.set(k, Value::Float(v)).unwrap();
    }
    c.set("batches", Value::Integer(5)).unwrap();
    c.set("mc_replicates", Value::Integer(200)).unwrap();
}

fn spread(dir: &std::path::Path, seed: u64) -> Vec<f64> {
    let t = Table::read_csv(dir.join(format!("figure1_seed{seed}.csv"))).unwrap();
    t.column("spread").unwrap()
}

#[test]
fn each_seed_gets_its_own_table() {
    let root = tempfile::tempdir().unwrap();
    let mut c = Config::new(Experiment::Figure1, 1);
    short(&mut c);
    lab::run(&c, root.path()).unwrap();
    let dir = lab::run_dir(&c, root.path());
    let (a, b) = (spread(&dir, 1), spread(&dir, 2));
    assert_eq!(a.len(), 20);
    assert_ne!(a, b);
}

#[test]
fn constant_rates_give_a_monotone_spread() {
    let root = tempfile::tempdir().unwrap();
    let file = root.path().join("flat.json");
    save_lattice_environment(&LatticeEnvironment::constant(1.0, 1.0, -1000, 1600).unwrap(), &file).unwrap();
    let mut c = Config::new(Experiment::Figure1, 1);
    short(&mut c);
    c.set("env_file", Value::String(file.to_string_lossy().into())).unwrap();
    let m = lab::run(&c, root.path()).unwrap();
    let s = spread(&lab::run_dir(&c, root.path()), 0);
    // Relaxation without fluctuation: total variation close to the net change.
    let late = &s[5..];
    let tv: f64 = late.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let net = late[late.len() - 1] - late[0];
    assert!(net > 0.0 && tv < net + 0.2, "spread {late:?}");
    let fluct = m.checks.iter().find(|k| k.name.contains("spread fluctuates")).unwrap();
    assert!(!fluct.passed);
}
