//! Dense brute-force oracles for the sparse machinery.

mod common;

use common::*;
use lrwi_core::acquisition::{Geometry, ProjectionOperator, SourceSpectrum, Survey};
use lrwi_core::dense::singular_values;
use lrwi_core::grid::{split, Grid2D, Rank2Model, SlownessModel};
use lrwi_core::helmholtz::{assemble, assemble_with, point_source};
use lrwi_core::lrwi::{build_augmented, lifted_operators, solve_rank2_u, FrequencyContext, Rank2System};
use lrwi_core::lu::Factorization;
use lrwi_core::penalty::{estimate_mu1, estimate_mu2};
use lrwi_core::power::{condition_estimate, power_iteration, PowerOptions};
use lrwi_core::sparse::{CsrMatrix, TripletBuilder};
use lrwi_core::wri::wri_solve_u;
use lrwi_core::Complex64;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Complex64;

fn dense(m: &CsrMatrix) -> DMatrix<C> {
    DMatrix::from_row_slice(m.nrows(), m.ncols(), &m.to_dense())
}

fn rel(a: &[C], b: &[C]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
    d / n
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C> {
    (0..n).map(|_| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

fn random_sparse(rng: &mut ChaCha8Rng, n: usize, per_row: usize, diag: f64) -> CsrMatrix {
    let mut b = TripletBuilder::new(n, n);
    for r in 0..n {
        b.push(r, r, C::new(diag, rng.random::<f64>()));
        for _ in 0..per_row {
            let c = rng.random_range(0..n);
            b.push(r, c, C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        }
    }
    b.build()
}

#[test]
fn sparse_lu_matches_dense_lu() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = random_sparse(&mut rng, 50, 4, 3.0);
    let b = random_vec(&mut rng, 50);
    let x = Factorization::new(&m).unwrap().solve(&b);
    let oracle = dense(&m).lu().solve(&DVector::from_vec(b.clone())).unwrap();
    assert!(rel(&x, oracle.as_slice()) <= 1e-10);
    let xa = Factorization::new(&m).unwrap().solve_adjoint(&b);
    let oracle_a = dense(&m).adjoint().lu().solve(&DVector::from_vec(b)).unwrap();
    assert!(rel(&xa, oracle_a.as_slice()) <= 1e-10);
}

#[test]
fn power_iteration_matches_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b = DMatrix::from_fn(20, 20, |_, _| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let h = b.adjoint() * &b;
    let want = h.clone().symmetric_eigenvalues().iter().cloned().fold(f64::MIN, f64::max);
    let est = power_iteration(
        |x, y| {
            let v = &h * DVector::from_column_slice(x);
            y.copy_from_slice(v.as_slice());
        },
        20,
        PowerOptions { max_iter: 5000, ..PowerOptions::default() },
    )
    .unwrap();
    assert!(est.converged);
    assert!((est.value - want).abs() <= 1e-6 * want, "{} vs {want}", est.value);
}

#[test]
fn condition_estimate_matches_dense_svd() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = random_sparse(&mut rng, 30, 5, 2.0);
    let sv = singular_values(30, 30, &m.to_dense());
    let want = sv[0] / sv[29];
    let got = condition_estimate(&m, PowerOptions { max_iter: 5000, ..PowerOptions::default() }).unwrap();
    assert!(got <= 1.1 * want && want <= 1.1 * got, "{got} vs {want}");
}

#[test]
fn helmholtz_solve_matches_dense_on_4x4() {
    let g = Grid2D::new(4, 4, 0.1, 0.1).unwrap();
    let m = smooth_model(g, 2.0, 0.1, 0.2);
    let op = assemble(&m, 3.0).unwrap();
    let q = point_source(&g, 5, C::new(1.0, 0.0));
    let u = lrwi_core::helmholtz::solve(&op, &q).unwrap();
    let oracle = dense(op.matrix()).lu().solve(&DVector::from_vec(q)).unwrap();
    assert!(rel(&u, oracle.as_slice()) <= 1e-12);
}

/// 6×6 survey with two receivers and one source.
fn tiny() -> (Grid2D, Survey, SlownessModel) {
    let g = Grid2D::new(6, 6, 0.1, 0.1).unwrap();
    let geo = Geometry::new(g, vec![(0.2, 0.2)], vec![(0.0, 0.0), (0.3, 0.0), (0.5, 0.1)]).unwrap();
    let m = smooth_model(g, 2.0, 0.1, 0.4);
    let s = Survey::for_model(geo, SourceSpectrum::flat(1.0), &m).unwrap();
    (g, s, m)
}

fn lstsq(m: &DMatrix<C>, b: &[C]) -> Vec<C> {
    let svd = m.clone().svd(true, true);
    let x = svd.solve(&DVector::from_column_slice(b), 1e-14 * svd.singular_values[0]).unwrap();
    x.as_slice().to_vec()
}

#[test]
fn wri_solve_matches_dense_least_squares() {
    let (g, s, m) = tiny();
    let f = 3.0;
    let op = assemble_with(&m, f, s.boundary()).unwrap();
    let d = vec![C::new(0.3, -0.1), C::new(-0.2, 0.5), C::new(0.1, 0.1)];
    let q = s.source_vector(0, f).unwrap();
    for lambda in [1e-4, 1.0] {
        let u = wri_solve_u(&op, s.projection(), lambda, &d, &q).unwrap();
        let stacked = DMatrix::from_fn(3 + g.len(), g.len(), |r, c| {
            if r < 3 {
                s.projection().matrix().get(r, c)
            } else {
                op.matrix().get(r - 3, c) * lambda.sqrt()
            }
        });
        let mut rhs = d.clone();
        rhs.extend(q.iter().map(|z| z * lambda.sqrt()));
        assert!(rel(&u, &lstsq(&stacked, &rhs)) <= 1e-10, "lambda = {lambda}");
    }
}

fn perturbed_rank2(m: &SlownessModel, theta: f64) -> Rank2Model {
    let r = split(m, theta);
    let m2: Vec<f64> = r.m2().iter().enumerate().map(|(i, v)| v * (1.0 + 0.05 * (i as f64).sin())).collect();
    Rank2Model::new(*m.grid(), r.m1().to_vec(), m2, theta).unwrap()
}

#[test]
fn rank2_solve_matches_dense_least_squares() {
    let (_, s, m) = tiny();
    let f = 3.0;
    let ctx = FrequencyContext::new(&s, f).unwrap();
    let r = perturbed_rank2(&m, 0.6);
    let d = vec![C::new(0.3, -0.1), C::new(-0.2, 0.5), C::new(0.1, 0.1)];
    let q = s.source_vector(0, f).unwrap();
    let mu1 = estimate_mu1(&m, f, &s).unwrap();
    for beta1 in [1e-4, 1.0] {
        let lambda = beta1 * mu1;
        let mu2 = estimate_mu2(&r, lambda, f, &s).unwrap();
        for beta2 in [1e-8, 1e-2] {
            let gamma = beta2 * mu2;
            let sys = Rank2System::new(&r, &ctx, s.projection(), lambda, gamma).unwrap();
            let (u, res) = sys.solve(&d, &q).unwrap();
            assert!(res <= 1e-8);
            let oracle = lstsq(&dense(sys.augmented()), &sys.rhs(&d, &q));
            let e = rel(&u.stacked(), &oracle);
            assert!(e <= 1e-10, "beta = ({beta1}, {beta2}): relative difference {e:e}");
            assert_eq!(solve_rank2_u(&r, &ctx, s.projection(), lambda, gamma, &d, &q).unwrap(), u);
        }
    }
}

#[test]
fn rank2_solve_without_rank1_block_fits_as_well_as_dense() {
    // With γ = 0 the minimizer is not unique; compare least-squares fits.
    let (_, s, m) = tiny();
    let f = 3.0;
    let ctx = FrequencyContext::new(&s, f).unwrap();
    let r = perturbed_rank2(&m, 0.6);
    let d = vec![C::new(0.3, -0.1), C::new(-0.2, 0.5), C::new(0.1, 0.1)];
    let q = s.source_vector(0, f).unwrap();
    let lambda = 1e-2 * estimate_mu1(&m, f, &s).unwrap();
    match Rank2System::new(&r, &ctx, s.projection(), lambda, 0.0) {
        Ok(sys) => {
            let Ok((u, _)) = sys.solve(&d, &q) else { return };
            let oracle = lstsq(&dense(sys.augmented()), &sys.rhs(&d, &q));
            let fit = |x: &[C]| {
                let rr: Vec<C> = sys.augmented().mul_vec(x).iter().zip(sys.rhs(&d, &q)).map(|(a, b)| a - b).collect();
                rr.iter().map(|z| z.norm_sqr()).sum::<f64>()
            };
            assert!(fit(&u.stacked()) <= fit(&oracle) * (1.0 + 1e-8) + 1e-30);
        }
        Err(e) => assert!(e.is_singular(), "{e}"),
    }
}

#[test]
fn augmented_matches_hand_assembly() {
    let g = Grid2D::new(3, 3, 0.5, 0.5).unwrap();
    let m = smooth_model(g, 1.5, 0.2, 0.1);
    let geo = Geometry::new(g, vec![(0.5, 0.5)], vec![(0.0, 0.0), (1.0, 0.5)]).unwrap();
    let s = Survey::for_model(geo, SourceSpectrum::flat(1.0), &m).unwrap();
    let r = perturbed_rank2(&m, 0.4);
    let (lambda, gamma) = (2.0, 0.5);
    let ctx = FrequencyContext::new(&s, 1.0).unwrap();
    let got = dense(&build_augmented(&r, &ctx, s.projection(), lambda, gamma).unwrap());
    let (a1, a2) = (0.4f64.sin(), 0.4f64.cos());
    let l = dense(&ctx.laplacian);
    let p = dense(s.projection().matrix());
    let n = 9;
    let w2 = ctx.omega * ctx.omega;
    let mut want = DMatrix::<C>::zeros(2 + 2 * n, 2 * n);
    for i in 0..2 {
        for j in 0..n {
            want[(i, j)] = p[(i, j)] * a1;
            want[(i, n + j)] = p[(i, j)] * a2;
        }
    }
    for i in 0..n {
        for j in 0..n {
            let (mut t1, mut t2) = (l[(i, j)] * a1, l[(i, j)] * a2);
            if i == j {
                t1 += w2 * r.m1()[i];
                t2 += w2 * r.m2()[i];
            }
            want[(2 + i, j)] = t1 * lambda.sqrt();
            want[(2 + i, n + j)] = t2 * lambda.sqrt();
        }
        want[(2 + n + i, i)] = C::new(gamma.sqrt() * r.m2()[i], 0.0);
        want[(2 + n + i, n + i)] = C::new(-gamma.sqrt() * r.m1()[i], 0.0);
    }
    assert!((got - want).norm() <= 1e-12 * l.norm());
}

#[test]
fn mu1_matches_dense_eigenvalue() {
    let g = Grid2D::new(10, 10, 0.05, 0.05).unwrap();
    let m = smooth_model(g, 2.0, 0.1, 0.4);
    let geo = Geometry::new(g, vec![(0.2, 0.2)], Geometry::line(6, 0.0, 0.0, 0.45)).unwrap();
    let s = Survey::for_model(geo, SourceSpectrum::flat(1.0), &m).unwrap();
    let f = 4.0;
    let got = estimate_mu1(&m, f, &s).unwrap();
    let a = dense(assemble_with(&m, f, s.boundary()).unwrap().matrix());
    let ainv = a.try_inverse().unwrap();
    let p = dense(s.projection().matrix());
    let b = ainv.adjoint() * p.transpose() * &p * &ainv;
    let want = b.symmetric_eigenvalues().iter().cloned().fold(f64::MIN, f64::max);
    assert!((got - want).abs() <= 1e-3 * want, "{got} vs {want}");
}

#[test]
fn mu1_trivial_cases() {
    // P = I, A = c·I: apply the operator directly through a diagonal factorization.
    for c in [1.0, 3.0] {
        let a = CsrMatrix::from_real_diagonal(&[c; 5]);
        let lu = Factorization::new(&a).unwrap();
        let p = ProjectionOperator::new(5, (0..5).collect()).unwrap();
        let est = lrwi_core::penalty::mu1_from_factorization(&lu, &p, lrwi_core::penalty::mu1_options()).unwrap();
        assert!((est.value - 1.0 / (c * c)).abs() <= 1e-12);
    }
}

#[test]
fn mu2_matches_dense_blocks() {
    let g = Grid2D::new(5, 5, 0.1, 0.1).unwrap();
    let m = smooth_model(g, 2.0, 0.1, 0.4);
    let geo = Geometry::new(g, vec![(0.2, 0.2)], Geometry::line(3, 0.0, 0.0, 0.4)).unwrap();
    let s = Survey::for_model(geo, SourceSpectrum::flat(1.0), &m).unwrap();
    let r = perturbed_rank2(&m, 0.9);
    let (lambda, f) = (0.7, 2.5);
    let got = estimate_mu2(&r, lambda, f, &s).unwrap();
    let ctx = FrequencyContext::new(&s, f).unwrap();
    let (t1, t2) = lifted_operators(&r, &ctx);
    let a = [dense(&t1), dense(&t2)];
    let p = dense(s.projection().matrix());
    let ptp = p.transpose() * &p;
    let al = [r.alphas().0, r.alphas().1];
    let ms = [r.m1(), r.m2()];
    let mut want: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let t = a[i].adjoint() * &a[j] * C::new(lambda, 0.0) + &ptp * C::new(al[i] * al[j], 0.0);
            let dn = t.diagonal().norm();
            let mm: f64 = ms[i].iter().zip(ms[j]).map(|(x, y)| (x * y).powi(2)).sum::<f64>().sqrt();
            want = want.max(dn / mm);
        }
    }
    assert!((got - want).abs() <= 1e-10 * want, "{got} vs {want}");
}

#[test]
fn mu2_identity_example() {
    // P = 0, Ã₁ = Ã₂ = I (n = 2), λ = 4, m̃₁ = m̃₂ = (1, 1) → μ₂ = 4.
    let id = CsrMatrix::identity(2);
    let p = ProjectionOperator::new(2, vec![]).unwrap();
    let mu2 = lrwi_core::penalty::mu2_from_operators(&id, &id, (0.6, 0.8), &p, 4.0, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
    assert!((mu2 - 4.0).abs() <= 1e-14);
    let mu2_8 = lrwi_core::penalty::mu2_from_operators(&id, &id, (0.6, 0.8), &p, 8.0, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
    assert!((mu2_8 - 8.0).abs() <= 1e-14);
    assert!(lrwi_core::penalty::mu2_from_operators(&id, &id, (0.6, 0.8), &p, 4.0, &[0.0, 0.0], &[1.0, 1.0]).is_err());
}
