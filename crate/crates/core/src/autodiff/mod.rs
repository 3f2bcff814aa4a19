//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Every operation appends a node to a [`Graph`] tape; node order is a
//! topological order, so [`Graph::backward`] is a single reverse sweep.
//! Broadcasting is limited to adding or multiplying a row vector against
//! the last axis of a matrix.

pub mod gradcheck;
mod graph;
mod params;
pub mod sparsemax;
mod tensor;

pub use graph::{sigmoid, softplus, Gradients, Graph, Var, LAYER_NORM_EPS};
pub use params::{Bound, ParamId, ParamStore};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[0.0, 0.0, 0.0]));
        let y = g.softmax(x, 0).unwrap();
        for v in g.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_clamps_negative() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::scalar(-2.0));
        let y = g.relu(x);
        assert_eq!(g.value(y).item(), 0.0);
    }

    #[test]
    fn identity_matmul() {
        let mut g = Graph::new();
        let i = g.constant(Tensor::eye(3));
        let a = g.constant(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let y = g.matmul(i, a).unwrap();
        assert_eq!(g.value(y), g.value(a));
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = g.constant(Tensor::zeros(&[4]));
        assert!(g.add(a, c).unwrap_err().to_string().contains("add"));
    }

    #[test]
    fn product_rule() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(3.0));
        let y = g.input(Tensor::scalar(4.0));
        let z = g.mul(x, y).unwrap();
        let grads = g.backward(z).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[4.0]);
        assert_eq!(grads.get(y).unwrap(), &[3.0]);
    }

    #[test]
    fn reused_node_accumulates() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(1.5));
        let z = g.add(x, x).unwrap();
        let grads = g.backward(z).unwrap();
        assert_eq!(grads.get(x).unwrap(), &[2.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[2]));
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn softmax_cross_entropy_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let logits = Tensor::vector((0..5).map(|_| rng.random_range(-2.0..2.0)).collect());
        let target = Tensor::vector(vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        let check = gradcheck::check(&[logits], 1e-4, |g, v| {
            let p = g.softmax(v[0], 0)?;
            let lp = g.log(p);
            let y = g.constant(target.clone());
            let picked = g.mul(lp, y)?;
            let s = g.sum(picked);
            Ok(g.affine(s, -1.0, 0.0))
        })
        .unwrap();
        assert!(check.max_rel_error < 1e-6, "{check:?}");
    }

    #[test]
    fn layer_norm_rows_have_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![4, 7], (0..28).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap());
        let y = g.layer_norm(x);
        for r in 0..4 {
            let row = g.value(y).row(r);
            assert!(row.iter().sum::<f64>().abs() / 7.0 < 1e-9);
        }
    }

    #[test]
    fn dropout_is_identity_in_eval_and_seeded_in_train() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::filled(&[50], 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(g.dropout(x, 0.5, false, &mut rng), x);
        let a = g.dropout(x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9));
        let b = g.dropout(x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(g.value(a), g.value(b));
        assert!(g.value(a).data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn embedding_bag_of_nothing_is_zero() {
        let mut g = Graph::new();
        let table = g.input(t(&[3, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let y = g.embedding_bag_mean(table, &[vec![], vec![1], vec![0, 2]]).unwrap();
        assert_eq!(g.value(y).data(), &[0.0, 0.0, 3.0, 4.0, 3.0, 4.0]);
    }
}
