//! Reverse-mode differentiation of real scalar losses with respect to a flat
//! real parameter vector, plus a central-difference checker.

mod check;
mod tape;

pub use check::{
    grad_check, grad_check_against, grad_check_subset, CoordinateCheck, GradCheckReport,
    GRAD_CHECK_ATOL,
};
pub use tape::{Tape, Var, BCE_EPSILON};

use crate::error::Result;

/// Evaluate `loss_fn` on a fresh tape and return the loss and its gradient.
pub fn value_and_grad<F>(params: &[f64], loss_fn: F) -> Result<(f64, Vec<f64>)>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let out = loss_fn(&mut tape)?;
    let grads = tape.gradient(out)?;
    Ok((tape.scalar(out), grads))
}

/// Gradient of `loss_fn` at `params`.
pub fn grad<F>(params: &[f64], loss_fn: F) -> Result<Vec<f64>>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    value_and_grad(params, loss_fn).map(|(_, g)| g)
}

/// Forward evaluation only.
pub fn value<F>(params: &[f64], loss_fn: F) -> Result<f64>
where
    F: FnOnce(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let out = loss_fn(&mut tape)?;
    Ok(tape.scalar(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::linalg::{ComplexMatrix, C_I};
    use crate::pauli::enumerate_generators;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    const PRIMITIVE_RTOL: f64 = 1e-5;

    fn random_params(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Reduce a complex matrix node to a real scalar with fixed random weights
    /// on both the real and imaginary parts of every entry.
    fn probe(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
        let (r, c) = tape.value(v).shape();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let wr: Vec<f64> = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wi: Vec<f64> = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let re = tape.real_part(v);
        let im = tape.imag_part(v);
        let re = tape.flatten(re);
        let im = tape.flatten(im);
        let wr = tape.constant_real(1, r * c, &wr);
        let wi = tape.constant_real(1, r * c, &wi);
        let a = tape.matmul(wr, re)?;
        let b = tape.matmul(wi, im)?;
        tape.add(a, b)
    }

    fn complex_param(tape: &mut Tape, offset: usize, rows: usize, cols: usize) -> Result<Var> {
        let re = tape.param(offset, rows, cols)?;
        let im = tape.param(offset + rows * cols, rows, cols)?;
        let im = tape.scale(im, C_I);
        tape.add(re, im)
    }

    fn check_primitive<F>(n_params: usize, f: F)
    where
        F: Fn(&mut Tape) -> Result<Var>,
    {
        for point in 0..5 {
            let params = random_params(100 + point, n_params);
            let report = grad_check(&f, &params, 1e-5, PRIMITIVE_RTOL).unwrap();
            assert!(report.passed, "point {point}: {report:?}");
        }
    }

    #[test]
    fn quadratic_gradient() {
        let g = grad(&[1.0, 2.0], |t| {
            let p = t.param(0, 2, 1)?;
            let pt = t.adjoint(p);
            let q = t.matmul(pt, p)?;
            Ok(t.real_part(q))
        })
        .unwrap();
        assert_eq!(g, vec![2.0, 4.0]);
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        // (p - 3)^2 minimised at p = 3
        let g = grad(&[3.0], |t| {
            let p = t.param(0, 1, 1)?;
            t.squared_error(p, 3.0)
        })
        .unwrap();
        assert!(g[0].abs() < 1e-8);
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        let r = grad(&[f64::NAN], |t| t.param(0, 1, 1));
        assert!(matches!(r, Err(Error::NonFiniteLoss(_))));
    }

    #[test]
    fn primitive_matmul_add_sub() {
        check_primitive(24, |t| {
            let a = complex_param(t, 0, 2, 3)?;
            let b = complex_param(t, 12, 3, 2)?;
            let p = t.matmul(a, b)?;
            let s = t.add(p, p)?;
            let d = t.sub(s, p)?;
            let at = t.adjoint(a);
            let bt = t.adjoint(b);
            let q = t.matmul(bt, at)?;
            let h = t.hadamard(d, q)?;
            probe(t, h, 1)
        });
    }

    #[test]
    fn primitive_slicing() {
        check_primitive(12, |t| {
            let a = complex_param(t, 0, 3, 2)?;
            let top = t.slice_rows(a, 0, 2)?;
            let c1 = t.column(a, 1)?;
            let c1t = t.adjoint(c1);
            let c1t = t.slice_rows(c1t, 0, 1)?;
            let f = t.flatten(top);
            let ft = t.adjoint(f);
            let joined = t.concat_rows(&[ft, ft])?;
            let c1wide = t.kron(c1t, c1t);
            let c1wide = t.slice_rows(c1wide, 0, 1)?;
            let c1wide = t.concat_rows(&[c1wide, c1wide])?;
            let c1wide = t.column(c1wide, 0)?;
            let prod = t.matmul(c1wide, ft)?;
            let out = t.add(joined, prod)?;
            probe(t, out, 9)
        });
    }

    #[test]
    fn primitive_kron_and_partial_trace() {
        check_primitive(16, |t| {
            let a = complex_param(t, 0, 2, 2)?;
            let b = complex_param(t, 8, 2, 2)?;
            let k = t.kron(a, b);
            let pt = t.partial_trace_second(k, 2, 2)?;
            probe(t, pt, 2)
        });
    }

    #[test]
    fn primitive_activations_and_bias() {
        check_primitive(9, |t| {
            let x = t.param(0, 2, 3)?;
            let b = t.param(6, 2, 1)?;
            let y = t.add_bias(x, b)?;
            let s = t.sigmoid(y);
            let h = t.tanh(s);
            let sum = t.sum_columns(h);
            let both = t.sum(&[sum, sum])?;
            let sc = t.scale(both, Complex64::new(0.5, -0.25));
            probe(t, sc, 3)
        });
    }

    #[test]
    fn primitive_normalize_and_diag() {
        check_primitive(8, |t| {
            let v = complex_param(t, 0, 4, 1)?;
            let n = t.normalize(v)?;
            let d = t.diag(n)?;
            probe(t, d, 4)
        });
    }

    #[test]
    fn primitive_lin_comb_and_exp() {
        let basis = Arc::new(enumerate_generators(2));
        check_primitive(15, |t| {
            let theta = t.param(0, 15, 1)?;
            let a = t.lin_comb(theta, &basis)?;
            let u = t.exp_anti_hermitian(a)?;
            probe(t, u, 5)
        });
    }

    #[test]
    fn primitive_su_states_matches_composition() {
        let basis = Arc::new(enumerate_generators(1));
        let params = random_params(8, 6);
        let fused = grad(&params, |t| {
            let th = t.param(0, 3, 2)?;
            let s = t.su_states(th, &basis)?;
            probe(t, s, 6)
        })
        .unwrap();
        let composed = grad(&params, |t| {
            let th = t.param(0, 3, 2)?;
            let mut cols = Vec::new();
            for j in 0..2 {
                let c = t.column(th, j)?;
                let a = t.lin_comb(c, &basis)?;
                let u = t.exp_anti_hermitian(a)?;
                let s = t.column(u, 0)?;
                cols.push(t.adjoint(s));
            }
            let rows = t.concat_rows(&cols)?;
            let s = t.adjoint(rows);
            probe(t, s, 6)
        })
        .unwrap();
        for (a, b) in fused.iter().zip(&composed) {
            assert!((a - b).abs() < 1e-12);
        }
        check_primitive(6, |t| {
            let th = t.param(0, 3, 2)?;
            let s = t.su_states(th, &basis)?;
            probe(t, s, 7)
        });
    }

    #[test]
    fn primitive_stick_breaking() {
        check_primitive(4, |t| {
            let x = t.param(0, 4, 1)?;
            let w = t.sigmoid(x);
            let l = t.stick_breaking(w)?;
            probe(t, l, 8)
        });
    }

    #[test]
    fn primitive_losses() {
        check_primitive(1, |t| {
            let x = t.param(0, 1, 1)?;
            let p = t.sigmoid(x);
            t.binary_cross_entropy(p, 1.0)
        });
        check_primitive(1, |t| {
            let x = t.param(0, 1, 1)?;
            t.squared_error(x, 0.3)
        });
    }

    #[test]
    fn exp_derivative_matches_directional_difference() {
        // direction-wise check of the block-triangular construction
        let basis = enumerate_generators(2);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let theta: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dtheta: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = basis.combine(&theta).unwrap();
        let e = basis.combine(&dtheta).unwrap();
        let n = 4;
        let mut aug = ComplexMatrix::zeros(2 * n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                aug[(r, c)] = a[(r, c)];
                aug[(n + r, n + c)] = a[(r, c)];
                aug[(r, n + c)] = e[(r, c)];
            }
        }
        let frechet = aug.expm().block(0, n, n, n);
        let h = 1e-5;
        let plus: Vec<f64> = theta.iter().zip(&dtheta).map(|(t, d)| t + h * d).collect();
        let minus: Vec<f64> = theta.iter().zip(&dtheta).map(|(t, d)| t - h * d).collect();
        let up = crate::pauli::su_unitary(&basis, &plus).unwrap();
        let um = crate::pauli::su_unitary(&basis, &minus).unwrap();
        let fd = up.sub(&um).scale_real(0.5 / h);
        assert!(fd.distance(&frechet) <= 1e-4 * frechet.frobenius_norm());
    }

    #[test]
    fn complex_chain_equals_real_split() {
        // |a·b|^2 with a = x0 + i x1 and b = x2 + i x3, computed as a complex
        // product and as the expanded real polynomial.
        let params = [0.3, -1.1, 0.7, 0.4];
        let g_complex = grad(&params, |t| {
            let a = complex_param(t, 0, 1, 1)?;
            let b = complex_param(t, 2, 1, 1)?;
            let p = t.matmul(a, b)?;
            let pa = t.adjoint(p);
            let q = t.matmul(pa, p)?;
            Ok(t.real_part(q))
        })
        .unwrap();
        let [x0, x1, x2, x3] = params;
        let re = x0 * x2 - x1 * x3;
        let im = x0 * x3 + x1 * x2;
        let expected = [
            2.0 * (re * x2 + im * x3),
            2.0 * (-re * x3 + im * x2),
            2.0 * (re * x0 + im * x1),
            2.0 * (-re * x1 + im * x0),
        ];
        for (g, e) in g_complex.iter().zip(expected) {
            assert!((g - e).abs() < 1e-14);
        }
    }
}
