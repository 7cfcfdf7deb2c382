use spillover_core::hashing::{hash_u64, hash_uniform};
use spillover_core::io::Table;

const VECTORS: &str = include_str!("data/hash_vectors.csv");

#[test]
fn matches_reference_vectors() {
    let table = Table::parse(VECTORS).unwrap();
    let salts = table.strings("salt").unwrap();
    let units = table.strings("unit").unwrap();
    let raw = table.column("u64", |s| s.parse::<u64>().ok()).unwrap();
    let uniform = table.column("uniform", |s| s.parse::<f64>().ok()).unwrap();
    assert_eq!(salts.len(), 63);
    for i in 0..salts.len() {
        assert_eq!(hash_u64(&salts[i], &units[i]), raw[i], "row {i}");
        // bit-exact, not approximately equal
        assert_eq!(hash_uniform(&salts[i], &units[i]).to_bits(), uniform[i].to_bits(), "row {i}");
    }
}
