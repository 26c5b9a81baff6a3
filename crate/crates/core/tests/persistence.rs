use provision::{generate_instance, Error, GeneratorParams, Instance};
use tempfile::TempDir;

fn params(seed: u64) -> GeneratorParams {
    GeneratorParams { n_users: 30, n_units: 6, k: 3, capacity: 8, w_max: 10, omega: 10.0, alpha: 0.2, seed }
}

#[test]
fn saved_instances_load_back_identically() {
    let dir = TempDir::new().unwrap();
    for seed in 0..5 {
        let inst = generate_instance(&params(seed)).unwrap();
        let path = dir.path().join(format!("i{seed}.json"));
        inst.save(&path).unwrap();
        let back = Instance::load(&path).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_json(), std::fs::read_to_string(&path).unwrap());
        assert!(back.validate().is_empty());
    }
}

#[test]
fn corrupt_file_is_a_parse_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"version\": 1, \"n_users\": 2").unwrap();
    assert!(matches!(Instance::load(&path), Err(Error::Parse { .. })));
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    assert!(matches!(Instance::load(dir.path().join("absent.json")), Err(Error::Io(_))));
}
