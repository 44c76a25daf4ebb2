use bort_core::training::{grad_check, micro_config};

#[test]
fn every_term_matches_finite_differences() {
    let report = grad_check(&micro_config(30, 4, 3), 0.05, 0.03).unwrap();
    for t in &report.terms {
        println!("{} {:.3e} at {}[{}] over {}", t.term, t.max_rel_error, t.worst_tensor, t.worst_index, t.checked);
    }
    for t in &report.terms {
        assert!(t.max_rel_error < 1e-4, "{} max rel error {}", t.term, t.max_rel_error);
    }
    assert_eq!(report.unused_row_grad_max, 0.0);
}
