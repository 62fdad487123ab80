use chromacal::color::{delta_e_2000, LabTriple};

#[test]
fn published_pairs() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/ciede2000_pairs.csv");
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let mut n = 0;
    for rec in rdr.records() {
        let v: Vec<f64> = rec.unwrap().iter().map(|s| s.parse().unwrap()).collect();
        let (a, b) = (LabTriple::new(v[0], v[1], v[2]), LabTriple::new(v[3], v[4], v[5]));
        assert!((delta_e_2000(a, b) - v[6]).abs() < 1e-4, "pair {n}");
        assert!((delta_e_2000(b, a) - v[6]).abs() < 1e-4, "pair {n} reversed");
        n += 1;
    }
    assert_eq!(n, 34);
}
