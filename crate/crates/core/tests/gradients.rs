mod common;

use common::{pair_fd, random_case, rel_err, weight_fd};
use gta_core::gcn::{adjacency_gradient, forward, grad_adjacency, grad_params, loss_ce};
use gta_core::{build_adjacency, DenseMat, GcnParams, LossTarget};

#[test]
fn adjacency_gradient_matches_finite_differences() {
    let mut checked = 0;
    let mut kinks = 0;
    for seed in 0..50 {
        let case = random_case(seed);
        let adj = case.graph.adjacency();
        let ctx = forward(
            adj,
            case.graph.features(),
            &case.params,
            case.target.clone(),
        )
        .unwrap();
        let g = grad_adjacency(&ctx, &case.params).unwrap();
        let n = adj.n();
        for i in 0..n {
            assert_eq!(g.get(i, i), 0.0);
            for j in 0..n {
                assert_eq!(
                    g.get(i, j).to_bits(),
                    g.get(j, i).to_bits(),
                    "asymmetric at seed {seed}"
                );
            }
            for j in i + 1..n {
                let fd = pair_fd(&case, adj, i, j, 1e-4);
                if !fd.smooth {
                    kinks += 1;
                    continue;
                }
                let analytic = g.get(i, j) + g.get(j, i);
                let e = rel_err(analytic, fd.derivative);
                assert!(
                    e < 1e-3,
                    "seed {seed} pair ({i},{j}): {analytic} vs {}",
                    fd.derivative
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 500, "{checked}");
    assert!(kinks * 50 < checked, "{kinks} kinks out of {checked}");
}

#[test]
fn weight_gradients_match_finite_differences() {
    for seed in 0..50 {
        let case = random_case(seed);
        let ctx = forward(
            case.graph.adjacency(),
            case.graph.features(),
            &case.params,
            case.target.clone(),
        )
        .unwrap();
        let (dw1, dw2) = grad_params(&ctx, &case.params).unwrap();
        for (layer, grad) in [(1, &dw1), (2, &dw2)] {
            for r in 0..grad.rows() {
                for c in 0..grad.cols() {
                    let (fd, smooth) = weight_fd(&case, layer, r, c, 1e-5);
                    if smooth {
                        let e = rel_err(grad.get(r, c), fd);
                        assert!(
                            e < 1e-3,
                            "seed {seed} W{layer}[{r},{c}]: {} vs {fd}",
                            grad.get(r, c)
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn factored_and_dense_gradients_agree() {
    let case = random_case(77);
    let ctx = forward(
        case.graph.adjacency(),
        case.graph.features(),
        &case.params,
        case.target.clone(),
    )
    .unwrap();
    let f = adjacency_gradient(&ctx, &case.params).unwrap();
    let d = grad_adjacency(&ctx, &case.params).unwrap();
    for i in 0..f.n() {
        for j in 0..f.n() {
            assert_eq!(f.pair(i, j).to_bits(), d.get(i, j).to_bits());
            assert_eq!(f.coupled(i, j), d.get(i, j) + d.get(j, i));
        }
    }
}

/// A class absent from the target still pulls probability mass, so its W2 column gets gradient.
#[test]
fn absent_class_column_receives_gradient() {
    let adj = build_adjacency(&[(0, 1), (1, 2), (2, 3)], 4).unwrap();
    let x = DenseMat::from_rows(&[
        vec![1.0, 0.2],
        vec![0.3, 1.0],
        vec![-0.5, 0.4],
        vec![0.9, -0.8],
    ]);
    let mut params = GcnParams::seeded(2, 4, 3, 3);
    params.w1 = params.w1.map(|v| v + 0.3);
    let case = common::Case {
        graph: gta_core::Graph::new(adj.clone(), x.clone(), vec![0, 1, 0, 1], 3).unwrap(),
        params: params.clone(),
        target: LossTarget::new(vec![0, 1, 2, 3], vec![0, 1, 0, 1]).unwrap(),
    };
    let ctx = forward(&adj, &x, &params, case.target.clone()).unwrap();
    let (_, dw2) = grad_params(&ctx, &params).unwrap();
    let column: Vec<f64> = (0..dw2.rows()).map(|r| dw2.get(r, 2)).collect();
    assert!(column.iter().any(|v| v.abs() > 1e-6), "{column:?}");
    for r in 0..dw2.rows() {
        let (fd, smooth) = weight_fd(&case, 2, r, 2, 1e-5);
        assert!(smooth);
        assert!(rel_err(dw2.get(r, 2), fd) < 1e-3);
    }
}

/// Overfit a tiny graph: gradient descent until separable, then scale the
/// output layer until the loss is below 1e-7. Both gradients must vanish there.
#[test]
fn gradients_vanish_at_an_overfit_minimum() {
    let adj = build_adjacency(&[(0, 1), (2, 3)], 4).unwrap();
    let x = DenseMat::from_rows(&[
        vec![1.0, 0.0],
        vec![0.9, 0.1],
        vec![0.0, 1.0],
        vec![0.1, 0.9],
    ]);
    let target = LossTarget::new(vec![0, 1, 2, 3], vec![0, 0, 1, 1]).unwrap();
    let mut params = GcnParams::seeded(2, 8, 2, 4);
    let loss_of = |p: &GcnParams| loss_ce(&forward(&adj, &x, p, target.clone()).unwrap()).unwrap();
    for _ in 0..20_000 {
        let ctx = forward(&adj, &x, &params, target.clone()).unwrap();
        if loss_ce(&ctx).unwrap() < 1e-3 {
            break;
        }
        let (d1, d2) = grad_params(&ctx, &params).unwrap();
        params.w1.axpy(-1.0, &d1).unwrap();
        params.w2.axpy(-1.0, &d2).unwrap();
    }
    assert!(loss_of(&params) < 1e-3);
    while loss_of(&params) >= 1e-7 {
        params.w2 = params.w2.map(|v| 1.5 * v);
    }
    let ctx = forward(&adj, &x, &params, target).unwrap();
    let (d1, d2) = grad_params(&ctx, &params).unwrap();
    assert!(d1.frobenius_norm() < 1e-6 && d2.frobenius_norm() < 1e-6);
}
