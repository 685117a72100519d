use super::linalg;
use super::{CoreError, Tape};

#[test]
fn matmul_identity() {
    let mut t = Tape::new();
    let i = t.constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let b = t.constant(&[2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
    let c = t.matmul(i, b).unwrap();
    assert_eq!(t.data(c), &[3.0, 4.0, 5.0, 6.0]);
}

#[test]
fn matmul_hand_value() {
    let mut t = Tape::new();
    let a = t.constant(&[1, 2], vec![1.0, 2.0]).unwrap();
    let b = t.constant(&[2, 1], vec![3.0, 4.0]).unwrap();
    let c = t.matmul(a, b).unwrap();
    assert_eq!(t.data(c), &[11.0]);
}

#[test]
fn matmul_gradient_wrt_lhs() {
    let mut t = Tape::new();
    let a = t.leaf(&[1, 2], vec![1.0, 2.0], true).unwrap();
    let b = t.constant(&[2, 1], vec![3.0, 4.0]).unwrap();
    let c = t.matmul(a, b).unwrap();
    let loss = t.sum(c, None).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(t.grad(a).unwrap(), &[3.0, 4.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut t = Tape::new();
    let a = t.constant(&[2, 3], vec![0.0; 6]).unwrap();
    let b = t.constant(&[2, 2], vec![0.0; 4]).unwrap();
    let err = t.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{msg}");
}

#[test]
fn sigmoid_symmetry_point_and_hand_value() {
    let mut t = Tape::new();
    let x = t.constant(&[2], vec![0.0, 3.0_f64.ln()]).unwrap();
    let s = t.sigmoid(x).unwrap();
    assert!((t.data(s)[0] - 0.5).abs() < 1e-15);
    assert!((t.data(s)[1] - 0.75).abs() < 1e-12);
}

#[test]
fn tanh_at_origin_has_unit_gradient() {
    let mut t = Tape::new();
    let x = t.leaf(&[], vec![0.0], true).unwrap();
    let y = t.tanh(x).unwrap();
    assert_eq!(t.scalar_value(y), 0.0);
    t.backward(y).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[1.0]);
}

#[test]
fn log_rejects_non_positive() {
    let mut t = Tape::new();
    let x = t.constant(&[2], vec![1.0, 0.0]).unwrap();
    assert!(matches!(t.log(x), Err(CoreError::Domain(_))));
}

#[test]
fn elementwise_shape_mismatch_is_dimension_error() {
    let mut t = Tape::new();
    let a = t.constant(&[2], vec![1.0, 2.0]).unwrap();
    let b = t.constant(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    assert!(matches!(t.add(a, b), Err(CoreError::Dimension { .. })));
}

#[test]
fn scalar_broadcast_gradient_sums() {
    let mut t = Tape::new();
    let x = t.constant(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let s = t.leaf(&[], vec![2.0], true).unwrap();
    let y = t.mul(x, s).unwrap();
    let loss = t.sum(y, None).unwrap();
    t.backward(loss).unwrap();
    // d/ds sum(x * s) = sum(x) = 6
    assert_eq!(t.grad(s).unwrap(), &[6.0]);
}

#[test]
fn sum_and_mean_examples() {
    let mut t = Tape::new();
    let x = t.constant(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let s = t.sum(x, None).unwrap();
    assert_eq!(t.scalar_value(s), 6.0);

    let m = t.constant(&[2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
    let col_means = t.mean(m, Some(0)).unwrap();
    assert_eq!(t.data(col_means), &[3.0, 5.0]);
}

#[test]
fn mean_gradient_distributes_uniformly() {
    let mut t = Tape::new();
    let x = t.leaf(&[4], vec![1.0, 2.0, 3.0, 4.0], true).unwrap();
    let m = t.mean(x, None).unwrap();
    t.backward(m).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.25, 0.25, 0.25, 0.25]);
}

#[test]
fn reduction_axis_out_of_range() {
    let mut t = Tape::new();
    let x = t.constant(&[2], vec![1.0, 2.0]).unwrap();
    assert!(matches!(t.sum(x, Some(1)), Err(CoreError::Usage(_))));
}

#[test]
fn empty_tensor_rejected_at_creation() {
    let mut t = Tape::new();
    assert!(matches!(
        t.constant(&[0], vec![]),
        Err(CoreError::Domain(_))
    ));
}

#[test]
fn cross_entropy_uniform_two_classes() {
    let mut t = Tape::new();
    let logits = t.constant(&[1, 2], vec![0.0, 0.0]).unwrap();
    let loss = t.softmax_cross_entropy(logits, &[0]).unwrap();
    assert!((t.scalar_value(loss) - 2.0_f64.ln()).abs() < 1e-12);
}

#[test]
fn cross_entropy_saturated_correct_class_is_stable() {
    let mut t = Tape::new();
    let logits = t.constant(&[1, 2], vec![100.0, 0.0]).unwrap();
    let loss = t.softmax_cross_entropy(logits, &[0]).unwrap();
    let v = t.scalar_value(loss);
    assert!(v.is_finite());
    assert!(v >= 0.0 && v < 1e-12, "loss {v}");
}

#[test]
fn cross_entropy_hand_value() {
    let mut t = Tape::new();
    let logits = t.constant(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    let loss = t.softmax_cross_entropy(logits, &[2]).unwrap();
    // -log(e^3 / (e + e^2 + e^3)) = 1 + ln(1 + e + e^2) - 3
    let expect = 1.0 + (1.0 + 1.0_f64.exp() + 2.0_f64.exp()).ln() - 3.0;
    assert!((t.scalar_value(loss) - expect).abs() < 1e-12);
    assert!((expect - 0.40761).abs() < 1e-5);
}

#[test]
fn cross_entropy_rejects_non_finite_logits() {
    let mut t = Tape::new();
    let logits = t.constant(&[1, 2], vec![f64::NAN, 0.0]).unwrap();
    assert!(matches!(
        t.softmax_cross_entropy(logits, &[0]),
        Err(CoreError::Numeric(_))
    ));
}

#[test]
fn cross_entropy_rejects_out_of_range_class() {
    let mut t = Tape::new();
    let logits = t.constant(&[1, 2], vec![0.0, 0.0]).unwrap();
    assert!(matches!(
        t.softmax_cross_entropy(logits, &[2]),
        Err(CoreError::Data(_))
    ));
}

#[test]
fn softmax_rows_sum_to_one() {
    let p = linalg::softmax_row(&[3.0, -1.0, 0.25, 7.5]);
    let s: f64 = p.iter().sum();
    assert!((s - 1.0).abs() < 1e-12);
}

#[test]
fn concat_and_slice_round_trip() {
    let mut t = Tape::new();
    let a = t.constant(&[2], vec![1.0, 2.0]).unwrap();
    let b = t.constant(&[1], vec![3.0]).unwrap();
    let c = t.concat(&[a, b], 0).unwrap();
    assert_eq!(t.data(c), &[1.0, 2.0, 3.0]);
    let a2 = t.slice(c, 0, 0, 2).unwrap();
    let b2 = t.slice(c, 0, 2, 1).unwrap();
    assert_eq!(t.data(a2), &[1.0, 2.0]);
    assert_eq!(t.data(b2), &[3.0]);
}

#[test]
fn concat_axis1_round_trip() {
    let mut t = Tape::new();
    let a = t.constant(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let b = t.constant(&[2, 1], vec![5.0, 6.0]).unwrap();
    let c = t.concat(&[a, b], 1).unwrap();
    assert_eq!(t.shape(c), &[2, 3]);
    assert_eq!(t.data(c), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
    let b2 = t.slice(c, 1, 2, 1).unwrap();
    assert_eq!(t.data(b2), &[5.0, 6.0]);
}

#[test]
fn concat_gradient_routes_to_segments() {
    let mut t = Tape::new();
    let a = t.leaf(&[2], vec![1.0, 2.0], true).unwrap();
    let b = t.leaf(&[1], vec![3.0], true).unwrap();
    let c = t.concat(&[a, b], 0).unwrap();
    let loss = t.sum(c, None).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(t.grad(a).unwrap(), &[1.0, 1.0]);
    assert_eq!(t.grad(b).unwrap(), &[1.0]);
}

#[test]
fn concat_extent_mismatch() {
    let mut t = Tape::new();
    let a = t.constant(&[2, 2], vec![0.0; 4]).unwrap();
    let b = t.constant(&[3, 1], vec![0.0; 3]).unwrap();
    assert!(matches!(t.concat(&[a, b], 1), Err(CoreError::Dimension { .. })));
}

#[test]
fn power_rule_via_square() {
    let mut t = Tape::new();
    let x = t.leaf(&[], vec![3.0], true).unwrap();
    let y = t.square(x).unwrap();
    t.backward(y).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[6.0]);
}

#[test]
fn sigmoid_gradient_at_zero() {
    let mut t = Tape::new();
    let x = t.leaf(&[], vec![0.0], true).unwrap();
    let y = t.sigmoid(x).unwrap();
    t.backward(y).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.25]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut t = Tape::new();
    let x = t.leaf(&[2], vec![1.0, 2.0], true).unwrap();
    assert!(matches!(t.backward(x), Err(CoreError::Usage(_))));
}

#[test]
fn backward_rejects_empty_tape() {
    let mut t = Tape::new();
    assert!(matches!(t.backward(super::Var(0)), Err(CoreError::Usage(_))));
}

#[test]
fn repeated_backward_accumulates() {
    let mut t = Tape::new();
    let x = t.leaf(&[], vec![3.0], true).unwrap();
    let y = t.square(x).unwrap();
    t.backward(y).unwrap();
    t.backward(y).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[12.0]);
    t.zero_grads();
    t.backward(y).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[6.0]);
}

#[test]
fn backward_is_deterministic_on_the_same_tape() {
    let mut t = Tape::new();
    let x = t.leaf(&[3], vec![0.3, -1.2, 2.7], true).unwrap();
    let w = t.leaf(&[3], vec![0.11, 0.5, -0.9], true).unwrap();
    let p = t.mul(x, w).unwrap();
    let s = t.sigmoid(p).unwrap();
    let loss = t.mean(s, None).unwrap();

    t.backward(loss).unwrap();
    let g1: Vec<f64> = t.grad(w).unwrap().to_vec();
    t.zero_grads();
    t.backward(loss).unwrap();
    let g2: Vec<f64> = t.grad(w).unwrap().to_vec();
    let bits = |g: &[f64]| g.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&g1), bits(&g2));
}

#[test]
fn detach_is_bitwise_value_equal() {
    let mut t = Tape::new();
    let x = t.leaf(&[3], vec![0.1, -2.5, 3.75], true).unwrap();
    let d = t.detach(x);
    let xb: Vec<u64> = t.data(x).iter().map(|v| v.to_bits()).collect();
    let db: Vec<u64> = t.data(d).iter().map(|v| v.to_bits()).collect();
    assert_eq!(xb, db);
    assert!(!t.requires_grad(d));
}

#[test]
fn detach_blocks_upstream_gradient() {
    let mut t = Tape::new();
    let x = t.leaf(&[2], vec![1.0, 2.0], true).unwrap();
    let y = t.square(x).unwrap();
    let d = t.detach(y);
    let loss = t.sum(d, None).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.0, 0.0]);
}

#[test]
fn add_bias_gradient_accumulates_batch() {
    let mut t = Tape::new();
    let x = t.constant(&[4, 2], vec![0.0; 8]).unwrap();
    let b = t.leaf(&[2], vec![0.0, 0.0], true).unwrap();
    let y = t.add_bias(x, b).unwrap();
    let loss = t.sum(y, None).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(t.grad(b).unwrap(), &[4.0, 4.0]);
}

#[test]
fn gather_rows_scatters_gradients_to_looked_up_rows_only() {
    let mut t = Tape::new();
    let table = t
        .leaf(&[4, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], true)
        .unwrap();
    let picked = t.gather_rows(table, &[1, 1, 3]).unwrap();
    assert_eq!(t.data(picked), &[2.0, 3.0, 2.0, 3.0, 6.0, 7.0]);
    let loss = t.sum(picked, None).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(
        t.grad(table).unwrap(),
        &[0.0, 0.0, 2.0, 2.0, 0.0, 0.0, 1.0, 1.0]
    );
}

#[test]
fn gather_rows_rejects_out_of_range() {
    let mut t = Tape::new();
    let table = t.constant(&[2, 2], vec![0.0; 4]).unwrap();
    assert!(matches!(
        t.gather_rows(table, &[2]),
        Err(CoreError::Data(_))
    ));
}

#[test]
fn mul_mask_rows_scales_and_routes() {
    let mut t = Tape::new();
    let x = t.leaf(&[2, 2], vec![1.0, 2.0, 3.0, 4.0], true).unwrap();
    let y = t.mul_mask_rows(x, &[1.0, 0.0]).unwrap();
    assert_eq!(t.data(y), &[1.0, 2.0, 0.0, 0.0]);
    let loss = t.sum(y, None).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[1.0, 1.0, 0.0, 0.0]);
}

#[test]
fn clamp_gradient_zero_outside_bounds() {
    let mut t = Tape::new();
    let x = t.leaf(&[3], vec![-9.0, 0.5, 9.0], true).unwrap();
    let y = t.clamp(x, -8.0, 8.0).unwrap();
    assert_eq!(t.data(y), &[-8.0, 0.5, 8.0]);
    let loss = t.sum(y, None).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[0.0, 1.0, 0.0]);
}

#[test]
fn tape_reset_clears_nodes() {
    let mut t = Tape::new();
    t.scalar(1.0);
    assert_eq!(t.len(), 1);
    t.reset();
    assert!(t.is_empty());
}
