use tempgnn_bench::{diffs, fixture};

#[test]
fn fixture_is_usable() {
    let (model, instances) = fixture(8, 1, 20, 0);
    assert!(!instances.is_empty());
    assert_eq!(model.config.n_items, 20);
    model.loss_and_grad(&instances[0]).unwrap();
    assert_eq!(diffs(100).len(), 100);
}
