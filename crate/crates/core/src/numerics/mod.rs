//! Dense tensors with reverse-mode automatic differentiation.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckOptions, Stencil, GradCheckReport, Objective, ParamCheck};
pub use graph::{bce_from_logit, sigmoid, Graph, Var};
pub use params::{Bound, ParamStore};
pub use tensor::{Real, Tensor};

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::error::{Error, Result};

    fn t(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    macro_rules! objective {
        (|$g:ident, $p:ident| $body:expr) => {{
            struct O;
            impl Objective for O {
                fn eval<T: Real>(&self, $g: &mut Graph<T>, $p: &Bound) -> Result<Var> {
                    $body
                }
            }
            O
        }};
    }

    fn store(items: &[(&str, Tensor<f64>)]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        for (n, t) in items {
            s.insert(*n, t.clone());
        }
        s
    }

    #[test]
    fn matmul_hand_values() {
        let mut g = Graph::new();
        let a = g.constant(t(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = g.constant(t(&[vec![1.0], vec![1.0]]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[3.0, 7.0]);

        let i = g.constant(t(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let ia = g.matmul(i, a).unwrap();
        assert_eq!(g.value(ia).data(), g.value(a).data());
    }

    #[test]
    fn matmul_rejects_mismatched_inner_dims() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::<f64>::zeros(&[2, 3]));
        let b = g.constant(Tensor::<f64>::zeros(&[2, 3]));
        assert!(matches!(g.matmul(a, b), Err(Error::Dimension { .. })));
    }

    #[test]
    fn add_rejects_incompatible_broadcast() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::<f64>::zeros(&[2, 3]));
        let b = g.constant(Tensor::<f64>::zeros(&[2]));
        assert!(matches!(g.add(a, b), Err(Error::Dimension { .. })));
        let row = g.constant(Tensor::<f64>::zeros(&[3]));
        assert!(g.add(a, row).is_ok());
        let s = g.constant(Tensor::<f64>::scalar(1.0));
        assert!(g.mul(a, s).is_ok());
    }

    #[test]
    fn sigmoid_values() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(&[1, 5], vec![0.0f32, 3.0, -3.0, 40.0, -40.0]).unwrap());
        let y = g.sigmoid(x).unwrap();
        let y = g.value(y).data();
        assert_eq!(y[0], 0.5);
        assert_relative_eq!(y[1] + y[2], 1.0, epsilon = 1e-7);
        assert_relative_eq!(y[3] + y[4], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn layer_norm_edge_rows() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[vec![2.0, 2.0, 2.0], vec![1.0, -1.0, 0.0]]));
        let gamma = g.constant(Tensor::full(&[3], 1.0));
        let beta = g.constant(Tensor::zeros(&[3]));
        let y = g.layer_norm(x, gamma, beta, 1e-5).unwrap();
        assert_eq!(g.value(y).row(0), &[0.0, 0.0, 0.0]);

        let x = g.constant(t(&[vec![1.0, -1.0]]));
        let gamma = g.constant(Tensor::full(&[2], 1.0));
        let beta = g.constant(Tensor::zeros(&[2]));
        let y = g.layer_norm(x, gamma, beta, 1e-12).unwrap();
        assert_relative_eq!(g.value(y).data()[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(g.value(y).data()[1], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn softmax_uniform_and_shift_invariant() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(t(&[vec![0.0, 0.0]]));
        let y = g.softmax_rows(x).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let a = g.constant(t(&[vec![0.3, -1.2, 2.0]]));
        let b = g.constant(t(&[vec![100.3, 98.8, 102.0]]));
        let ya = g.softmax_rows(a).unwrap();
        let yb = g.softmax_rows(b).unwrap();
        for (p, q) in g.value(ya).data().iter().zip(g.value(yb).data()) {
            assert_relative_eq!(p, q, epsilon = 1e-12);
        }
        assert_relative_eq!(g.value(ya).data().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn backward_sum_and_square() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(t(&[vec![1.0, -2.0], vec![0.5, 3.0]]).with_grad());
        let s = g.sum(w).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[1.0; 4]);

        let mut g = Graph::<f64>::new();
        let w = g.leaf(t(&[vec![1.0, -2.0, 0.25]]).with_grad());
        let sq = g.mul(w, w).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[2.0, -4.0, 0.5]);
    }

    #[test]
    fn backward_twice_doubles_grads() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(t(&[vec![0.3, -0.7], vec![1.1, 0.2]]).with_grad());
        let x = g.constant(t(&[vec![1.0, 2.0], vec![-1.0, 0.5]]));
        let y = g.matmul(x, w).unwrap();
        let z = g.gelu(y).unwrap();
        let s = g.sum(z).unwrap();
        g.backward(s).unwrap();
        let once = g.grad(w).unwrap().to_vec();
        g.backward(s).unwrap();
        let twice = g.grad(w).unwrap();
        for (a, b) in once.iter().zip(twice) {
            assert_relative_eq!(2.0 * a, *b, epsilon = 1e-15);
        }
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::<f64>::new();
        let w = g.leaf(Tensor::zeros(&[2, 2]).with_grad());
        assert!(matches!(g.backward(w), Err(Error::Contract { .. })));
    }

    #[test]
    fn ops_do_not_mutate_inputs() {
        let mut g = Graph::<f64>::new();
        let data = t(&[vec![0.5, -1.5, 2.0], vec![0.1, 0.2, -0.3]]);
        let x = g.leaf(data.clone().with_grad());
        let y = g.softmax_rows(x).unwrap();
        let y = g.gelu(y).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.value(x).data(), data.data());
    }

    #[test]
    fn grad_check_quadratic_f64() {
        let obj = objective!(|g, p| {
            let w = p["w"];
            let sq = g.mul(w, w)?;
            g.sum(sq)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = store(&[("w", Tensor::randn(&[3, 4], 1.0, &mut rng))]);
        let report = grad_check::<f64, f64, _>(&obj, &params, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_err() < 1e-6, "{report:?}");
    }

    // Every differentiable op composed on N(0,1) inputs, checked at f64
    // and at f32 (against an f64 oracle).
    #[test]
    fn grad_check_composite_all_ops() {
        let obj = objective!(|g, p| {
            let a = g.matmul(p["x"], p["w"])?;
            let a = g.add(a, p["b"])?;
            let n = g.layer_norm(a, p["gamma"], p["beta"], 1e-5)?;
            let s = g.softmax_rows(n)?;
            let e = g.gelu(a)?;
            let r = g.relu(n)?;
            let m = g.mul(s, e)?;
            let m = g.add(m, r)?;
            let tr = g.transpose(m)?;
            let sq = g.matmul(m, tr)?;
            let sg = g.sigmoid(sq)?;
            let left = g.slice_cols(m, 0, 2)?;
            let right = g.slice_cols(m, 2, 2)?;
            let cat = g.concat_cols(&[right, left])?;
            let rows = g.gather_rows(cat, &[2, 0, 0])?;
            let k = g.scale(rows, T::lit(0.7))?;
            let s1 = g.sum(sg)?;
            let s2 = g.mean(k)?;
            let l = g.bce_with_logits(cat, vec![T::one(), T::zero(), T::one(), T::zero(), T::zero(), T::one(), T::one(), T::zero(), T::zero(), T::one(), T::zero(), T::one()], T::one())?;
            let tot = g.add(s1, s2)?;
            g.add(tot, l)
        });
        let mut checked = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = store(&[
                ("x", Tensor::randn(&[3, 5], 1.0, &mut rng)),
                ("w", Tensor::randn(&[5, 4], 1.0, &mut rng)),
                ("b", Tensor::randn(&[4], 1.0, &mut rng)),
                ("gamma", Tensor::randn(&[4], 1.0, &mut rng)),
                ("beta", Tensor::randn(&[4], 1.0, &mut rng)),
            ]);
            let opts = GradCheckOptions {
                eps: 1e-3,
                stencil: Stencil::Central4,
                abs_floor: 1e-8,
                ..Default::default()
            };
            let r64 = grad_check::<f64, f64, _>(&obj, &params, &opts).unwrap();
            if r64.kink_flagged {
                continue;
            }
            assert!(r64.max_rel_err() < 1e-6, "seed {seed}: {r64:?}");
            let p32: ParamStore<f32> = params.cast();
            let opts = GradCheckOptions { abs_floor: 1e-4, ..opts };
            let r32 = grad_check::<f32, f64, _>(&obj, &p32, &opts).unwrap();
            assert!(r32.max_rel_err() < 1e-3, "seed {seed}: {r32:?}");
            checked += 1;
        }
        assert!(checked >= 10);
    }

    #[test]
    fn grad_check_flags_relu_kink() {
        let obj = objective!(|g, p| {
            let r = g.relu(p["w"])?;
            g.sum(r)
        });
        let params = store(&[("w", t(&[vec![1.0, 1e-7, -2.0]]))]);
        let report = grad_check::<f64, f64, _>(&obj, &params, &GradCheckOptions::default()).unwrap();
        assert!(report.kink_flagged);
        assert!(report.params.is_empty());
    }

    #[test]
    fn grad_check_rejects_nondeterminism() {
        use std::sync::atomic::{AtomicU64, Ordering};
        static CALLS: AtomicU64 = AtomicU64::new(0);
        let obj = objective!(|g, p| {
            let n = CALLS.fetch_add(1, Ordering::SeqCst);
            let mask = vec![T::lit((n % 2) as f64); g.value(p["w"]).len()];
            let m = g.mask(p["w"], mask)?;
            g.sum(m)
        });
        let params = store(&[("w", t(&[vec![1.0, 2.0]]))]);
        let err = grad_check::<f64, f64, _>(&obj, &params, &GradCheckOptions::default());
        assert!(matches!(err, Err(Error::Contract { .. })));
    }

    #[test]
    fn kink_crossing_excludes_only_the_affected_coordinate() {
        let obj = objective!(|g, p| {
            let r = g.relu(p["x"])?;
            let y = g.mul(r, r)?;
            g.sum(y)
        });
        let mut params = ParamStore::new();
        // 1e-6 is crossed by every step (1e-3, 1e-4, 1e-5)
        params.insert("x", Tensor::new(&[3], vec![1e-6f64, 0.7, -0.3]).unwrap());
        let opts = GradCheckOptions { eps: 1e-3, kink_margin: None, ..Default::default() };
        let r = grad_check::<f64, f64, _>(&obj, &params, &opts).unwrap();
        assert_eq!(r.kink_excluded(), 1);
        assert_eq!(r.params[0].checked, 2);
        assert!(r.max_rel_err() < 1e-6);
        // 1e-4 is crossed by 1e-3 and 1e-4 but not by 1e-5, so it is checked
        params.insert("x", Tensor::new(&[3], vec![1e-4f64, 0.7, -0.3]).unwrap());
        let r = grad_check::<f64, f64, _>(&obj, &params, &opts).unwrap();
        assert_eq!(r.kink_excluded(), 0);
        assert_eq!(r.params[0].checked, 3);
        let strict = grad_check::<f64, f64, _>(&obj, &params, &GradCheckOptions { eps: 1e-3, ..Default::default() }).unwrap();
        assert!(strict.kink_flagged);
    }
}
