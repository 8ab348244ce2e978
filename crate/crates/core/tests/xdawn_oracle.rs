mod common;

use nalgebra::DVector;
use xp300::xdawn::{fit_xdawn_matrices, rayleigh_quotient};

#[test]
fn filters_match_generalized_eigenvectors() {
    for seed in 100..110 {
        let (x, d, erp_len) = common::xdawn_problem(seed);
        let c = x.ncols();
        let model = fit_xdawn_matrices(&x, &d, erp_len, c).unwrap();
        let (vectors, values) = common::xdawn_oracle(&x, &d);
        assert_eq!(model.n_f, c.min(erp_len));
        for k in 0..model.n_f {
            let u = model.u.column(k).into_owned();
            assert!((u.norm() - 1.0).abs() < 1e-12);
            assert!(common::line_angle(&u, &vectors[k]) < 1e-6, "seed {seed} component {k}");
            assert!((model.rho[k] - values[k]).abs() < 1e-8);
            assert!((rayleigh_quotient(&x, &d, &u) - values[k]).abs() < 1e-8);
        }
    }
}

#[test]
fn filters_are_scale_invariant() {
    let (x, d, erp_len) = common::xdawn_problem(7);
    let a = fit_xdawn_matrices(&x, &d, erp_len, 3).unwrap();
    let b = fit_xdawn_matrices(&(&x * 250.0), &d, erp_len, 3).unwrap();
    for k in 0..3 {
        assert!((a.u.column(k) - b.u.column(k)).amax() < 1e-9);
        assert!((a.rho[k] - b.rho[k]).abs() < 1e-12);
    }
}

#[test]
fn leading_filter_maximizes_rayleigh_quotient() {
    let (x, d, erp_len) = common::xdawn_problem(21);
    let model = fit_xdawn_matrices(&x, &d, erp_len, 1).unwrap();
    let best = rayleigh_quotient(&x, &d, &model.u.column(0).into_owned());
    for i in 0..x.ncols() {
        let e = DVector::from_fn(x.ncols(), |j, _| if i == j { 1.0 } else { 0.0 });
        assert!(rayleigh_quotient(&x, &d, &e) <= best + 1e-12);
    }
}
