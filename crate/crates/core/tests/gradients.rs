mod common;

use common::gradcheck;

#[test]
fn all_objectives_match_finite_differences() {
    for seed in [3, 7, 11, 19] {
        let reports = gradcheck::run_all(25, seed);
        let total: usize = reports.iter().map(|r| r.checked).sum();
        assert!(total >= 100);
        for r in &reports {
            eprintln!("seed {seed} {}: {} checked, {} kinks, max relative error {:.2e}", r.name, r.checked, r.kinks, r.max_rel);
            assert!(r.kinks <= r.checked, "{}: {} of the draws sit on kinks", r.name, r.kinks);
            assert!(r.max_rel <= 1e-3, "{}: max relative error {:e}", r.name, r.max_rel);
        }
    }
}
