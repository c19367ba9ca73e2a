//! Invariants checked over random inputs.

mod common;

use common::*;
use lrwi_core::acquisition::{forward_model, Geometry, ProjectionOperator, SourceSpectrum, Survey};
use lrwi_core::fwi::fwi_value;
use lrwi_core::grid::{apply_bounds, split, Grid2D, Rank2Model, SlownessModel};
use lrwi_core::helmholtz::assemble_with;
use lrwi_core::lrwi::{
    lrwi_evaluate, lrwi_residuals, lrwi_value, s_rank_deficiency_check, FrequencyContext, Rank2Wavefield,
};
use lrwi_core::lu::Factorization;
use lrwi_core::penalty::{estimate_mu1, estimate_mu2, make_penalties, mu1_from_factorization, mu1_options};
use lrwi_core::power::{condition_estimate, power_iteration, PowerOptions};
use lrwi_core::sparse::{CsrMatrix, TripletBuilder};
use lrwi_core::wri::{wri_solve_u, wri_terms, wri_value_grad};
use lrwi_core::Complex64;
use proptest::prelude::*;

type C = Complex64;

fn norm(v: &[C]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn small_survey(n: usize, nr: usize) -> (Grid2D, Survey) {
    let g = Grid2D::new(n, n, 0.05, 0.05).unwrap();
    let (lx, _) = g.extent();
    let geo = Geometry::new(g, vec![(0.1, 0.1), (lx - 0.1, 0.1)], Geometry::line(nr, 0.0, 0.0, lx)).unwrap();
    let m = SlownessModel::uniform(g, 0.25).unwrap();
    (g, Survey::for_model(geo, SourceSpectrum::ricker(4.0).unwrap(), &m).unwrap())
}

fn model_from(g: Grid2D, raw: &[f64]) -> SlownessModel {
    SlownessModel::new(g, raw.iter().map(|v| 1.0 / (v * v)).collect()).unwrap()
}

fn field(raw: &[(f64, f64)]) -> Vec<C> {
    raw.iter().map(|&(a, b)| C::new(a, b)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

    #[test]
    fn lu_residual_bound(entries in prop::collection::vec((0usize..30, 0usize..30, -1.0f64..1.0, -1.0f64..1.0), 30..120),
                         rhs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 30)) {
        let mut b = TripletBuilder::new(30, 30);
        let mut rowsum = [0.0f64; 30];
        for &(r, c, re, im) in &entries {
            if r != c {
                b.push(r, c, C::new(re, im));
                rowsum[r] += C::new(re, im).norm();
            }
        }
        for (r, s) in rowsum.iter().enumerate() {
            b.push(r, r, C::new(s + 1.0, 0.5));
        }
        let m = b.build();
        let rhs = field(&rhs);
        let x = Factorization::new(&m).unwrap().solve(&rhs);
        let res: Vec<C> = m.mul_vec(&x).iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let mnorm: f64 = m.to_dense().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(norm(&res) <= 1e-10 * (mnorm * norm(&x) + norm(&rhs)));
    }

    #[test]
    fn power_iteration_is_scale_equivariant(d in prop::collection::vec(0.1f64..10.0, 2..12), c in 0.5f64..4.0) {
        let run = |s: f64| power_iteration(|x, y| {
            for ((yi, xi), di) in y.iter_mut().zip(x).zip(&d) { *yi = xi * di * s; }
        }, d.len(), PowerOptions { max_iter: 20_000, tol: 1e-9, ..PowerOptions::default() }).unwrap().value;
        let (a, b) = (run(1.0), run(2.0 * c));
        prop_assert!((b - 2.0 * c * a).abs() <= 1e-6 * b);
    }

    #[test]
    fn condition_estimate_is_scale_invariant(diag in prop::collection::vec(0.5f64..5.0, 3..10), c in -3.0f64..3.0) {
        prop_assume!(c.abs() > 0.1);
        let m = CsrMatrix::from_real_diagonal(&diag);
        let opts = PowerOptions { max_iter: 20_000, tol: 1e-10, ..PowerOptions::default() };
        let k1 = condition_estimate(&m, opts).unwrap();
        let k2 = condition_estimate(&m.scaled(C::new(c, 0.0)), opts).unwrap();
        prop_assert!((k1 - k2).abs() <= 1e-6 * k1);
    }

    #[test]
    fn rank1_point_reduces_to_wri(v in prop::collection::vec(1.5f64..3.0, 25), theta in -3.0f64..3.0,
                                  u0 in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 25),
                                  lambda in 1e-4f64..1.0) {
        let (g, survey) = small_survey(5, 3);
        let m = model_from(g, &v);
        let (d, _) = forward_model(&SlownessModel::uniform(g, 0.2).unwrap(), &survey, &[3.0]).unwrap();
        let u0 = field(&u0);
        let us: Vec<Rank2Wavefield> = (0..2).map(|_| Rank2Wavefield::lift(&u0, theta)).collect();
        let rep = lrwi_value(&split(&m, theta), &us, lambda, 0.7, &d, &survey).unwrap();
        let op = assemble_with(&m, 3.0, survey.boundary()).unwrap();
        let fp: f64 = (0..2).map(|s| {
            let (a, b) = wri_terms(&op, survey.projection(), lambda, &u0, &d.row(s, 0), &survey.source_vector(s, 3.0).unwrap());
            a + b
        }).sum();
        prop_assert!((rep.total - fp).abs() <= 1e-12 * (1.0 + fp));
        prop_assert!(rep.rank1_term <= 1e-24);
    }

    #[test]
    fn swap_symmetry(v1 in prop::collection::vec(0.1f64..0.4, 25), v2 in prop::collection::vec(0.1f64..0.4, 25),
                     theta in -1.5f64..1.5,
                     a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 25),
                     b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 25)) {
        let (g, survey) = small_survey(5, 3);
        let ctx = FrequencyContext::new(&survey, 3.0).unwrap();
        let q = survey.source_vector(0, 3.0).unwrap();
        let d = vec![C::new(0.1, 0.2); 3];
        let r = Rank2Model::new(g, v1.clone(), v2.clone(), theta).unwrap();
        let rs = Rank2Model::new(g, v2, v1, core::f64::consts::FRAC_PI_2 - theta).unwrap();
        let u = Rank2Wavefield { u1: field(&a), u2: field(&b) };
        let us = Rank2Wavefield { u1: u.u2.clone(), u2: u.u1.clone() };
        let x = lrwi_residuals(&r, &u, &ctx, survey.projection(), &d, &q);
        let y = lrwi_residuals(&rs, &us, &ctx, survey.projection(), &d, &q);
        let close = |p: &[C], q: &[C]| norm(&p.iter().zip(q).map(|(a, b)| a - b).collect::<Vec<_>>()) <= 1e-12 * (1.0 + norm(p));
        prop_assert!(close(&x.p, &y.p));
        prop_assert!(close(&x.r, &y.r));
        prop_assert!(close(&x.s, &y.s.iter().map(|z| -z).collect::<Vec<_>>()));
    }

    #[test]
    fn objective_report_adds_up(v in prop::collection::vec(1.5f64..3.0, 25), theta in -1.5f64..1.5, beta2 in -8.0f64..0.0) {
        let (g, survey) = small_survey(5, 3);
        let m = model_from(g, &v);
        let (d, _) = forward_model(&SlownessModel::uniform(g, 0.2).unwrap(), &survey, &[3.0, 4.0]).unwrap();
        let r = split(&m, theta);
        let r = Rank2Model::new(g, r.m1().to_vec(), r.m2().iter().map(|x| x * 1.1).collect(), theta).unwrap();
        let lambda = estimate_mu1(&m, 3.0, &survey).unwrap();
        let gamma = 10f64.powf(beta2) * estimate_mu2(&r, lambda, 3.0, &survey).unwrap();
        let e = lrwi_evaluate(&r, lambda, gamma, &d, &survey).unwrap().evaluation;
        let rep = &e.report;
        prop_assert!((rep.total - (rep.data_term + rep.pde_term + rep.rank1_term)).abs() <= 1e-12 * rep.total);
        let pairs: f64 = rep.pairs.iter().map(|p| p.total()).sum();
        prop_assert!((rep.total - pairs).abs() <= 1e-12 * rep.total);
        prop_assert!(e.max_projection_residual <= 1e-8);
    }

    #[test]
    fn bounds_are_idempotent(v in prop::collection::vec(0.5f64..9.0, 9)) {
        let g = Grid2D::new(3, 3, 1.0, 1.0).unwrap();
        let m = model_from(g, &v);
        let once = apply_bounds(&m, 1.0, 6.5).unwrap();
        prop_assert_eq!(apply_bounds(&once, 1.0, 6.5).unwrap(), once.clone());
        for (a, b) in v.iter().zip(once.values()) {
            if (1.0..=6.5).contains(a) {
                prop_assert!((1.0 / (a * a) - b).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn mu1_scales_with_inverse_operator() {
    // Scaling A by 1/c is equivalent to scaling P by c: μ₁ grows by c².
    let (g, survey) = small_survey(6, 4);
    let m = SlownessModel::uniform(g, 0.25).unwrap();
    let a = assemble_with(&m, 3.0, survey.boundary()).unwrap();
    let base = mu1_from_factorization(&a.factorize().unwrap(), survey.projection(), mu1_options()).unwrap().value;
    let c = 3.0;
    let scaled = Factorization::new(&a.matrix().scaled(C::new(1.0 / c, 0.0))).unwrap();
    let got = mu1_from_factorization(&scaled, survey.projection(), mu1_options()).unwrap().value;
    assert!((got - c * c * base).abs() <= 1e-3 * got);
    // Independent of the sources.
    let other = Survey::new(
        Geometry::new(g, vec![(0.05, 0.2)], survey.geometry().receivers().to_vec()).unwrap(),
        SourceSpectrum::flat(7.0),
        survey.boundary().clone(),
    )
    .unwrap();
    assert_eq!(estimate_mu1(&m, 3.0, &survey).unwrap(), estimate_mu1(&m, 3.0, &other).unwrap());
}

#[test]
fn mu2_symmetric_under_component_swap() {
    let (g, survey) = small_survey(6, 4);
    let m = smooth_model(g, 2.0, 0.1, 0.3);
    let r = split(&m, core::f64::consts::FRAC_PI_4);
    let swapped = Rank2Model::new(g, r.m2().to_vec(), r.m1().to_vec(), core::f64::consts::FRAC_PI_4).unwrap();
    let a = estimate_mu2(&r, 0.3, 3.0, &survey).unwrap();
    let b = estimate_mu2(&swapped, 0.3, 3.0, &survey).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);
}

#[test]
fn penalties_are_pure_and_schedule_composes() {
    let a = make_penalties(1e-8, 1e-12, 3.0, 5.0).unwrap();
    assert_eq!(a, make_penalties(1e-8, 1e-12, 3.0, 5.0).unwrap());
    assert_eq!(make_penalties(1.0, 1.0, 7.0, 1.0).unwrap().lambda(), 7.0);
    assert_eq!(a.schedule_step(3), a);
    let g = a.with_growth(10.0, 100.0).unwrap();
    let one = g.schedule_step(1);
    assert!((one.beta1() - 1e-7).abs() <= 1e-22 && (one.beta2() - 1e-10).abs() <= 1e-25);
    let two = one.schedule_step(1);
    let direct = g.schedule_step(2);
    assert!((two.beta1() - direct.beta1()).abs() <= 1e-15 * direct.beta1());
    assert!((two.beta2() - direct.beta2()).abs() <= 1e-15 * direct.beta2());
    assert!(make_penalties(0.0, 1.0, 1.0, 1.0).is_err());
    assert!(make_penalties(1.0, -1.0, 1.0, 1.0).is_err());
    assert!(a.warnings().is_empty());
    let w = make_penalties(1e-8, 1e-16, 3.0, 5.0).unwrap().warnings();
    assert!(w.len() == 1 && w[0].contains("close to singular or badly scaled"));
}

#[test]
fn fwi_value_ignores_source_order() {
    let s = setup(9, 3, 9, &[3.0]);
    let geo = s.survey.geometry();
    let rev: Vec<_> = geo.sources().iter().rev().cloned().collect();
    let rsurvey = Survey::new(
        Geometry::new(s.grid, rev, geo.receivers().to_vec()).unwrap(),
        *s.survey.spectrum(),
        s.survey.boundary().clone(),
    )
    .unwrap();
    let (rdata, _) = forward_model(&s.truth, &rsurvey, &[3.0]).unwrap();
    let a = fwi_value(&s.start, &s.data, &s.survey).unwrap();
    let b = fwi_value(&s.start, &rdata, &rsurvey).unwrap();
    assert!((a - b).abs() <= 1e-12 * a);
}

#[test]
fn wri_value_grows_with_lambda() {
    let s = setup(9, 2, 9, &[3.0]);
    let mu1 = estimate_mu1(&s.start, 3.0, &s.survey).unwrap();
    let mut prev = 0.0;
    for beta in [1e-6, 1e-4, 1e-2, 1.0, 1e2] {
        let v = wri_value_grad(&s.start, beta * mu1, &s.data, &s.survey).unwrap().value();
        assert!(v >= prev, "beta {beta}: {v} < {prev}");
        prev = v;
    }
}

#[test]
fn wri_projection_examples() {
    let s = setup(15, 1, 15, &[3.0]);
    let op = assemble_with(&s.start, 3.0, s.survey.boundary()).unwrap();
    let q = s.survey.source_vector(0, 3.0).unwrap();
    let u0 = op.factorize().unwrap().solve(&q);
    let d = s.survey.projection().apply(&u0);
    let mu1 = estimate_mu1(&s.start, 3.0, &s.survey).unwrap();
    // Consistent data: the projection recovers u0.
    let u = wri_solve_u(&op, s.survey.projection(), mu1, &d, &q).unwrap();
    let diff: Vec<C> = u.iter().zip(&u0).map(|(a, b)| a - b).collect();
    assert!(norm(&diff) <= 1e-8 * norm(&u0));
    // Large penalty: the PDE is nearly satisfied even for inconsistent data.
    let d_bad = s.data.row(0, 0);
    let u = wri_solve_u(&op, s.survey.projection(), 1e8 * mu1, &d_bad, &q).unwrap();
    let p: Vec<C> = op.matrix().mul_vec(&u).iter().zip(&q).map(|(a, b)| a - b).collect();
    assert!(norm(&p) / norm(&q) <= 1e-3, "{}", norm(&p) / norm(&q));
}

#[test]
fn rank2_consistent_point_has_zero_objective() {
    let s = setup(9, 2, 9, &[3.0]);
    let (d, _) = forward_model(&s.start, &s.survey, &[3.0]).unwrap();
    let r = split(&s.start, 0.9);
    let lambda = estimate_mu1(&s.start, 3.0, &s.survey).unwrap();
    let gamma = 1e-2 * estimate_mu2(&r, lambda, 3.0, &s.survey).unwrap();
    let e = lrwi_evaluate(&r, lambda, gamma, &d, &s.survey).unwrap();
    let scale = lrwi_evaluate(&r, lambda, gamma, &s.data, &s.survey).unwrap().evaluation.value();
    assert!(e.evaluation.value() <= 1e-16 * scale, "{} vs {scale}", e.evaluation.value());
}

#[test]
fn rank_deficiency_of_s() {
    let rank_case = |n: usize, receivers: Vec<usize>, gamma: f64| {
        let g = Grid2D::new(n, n, 0.1, 0.1).unwrap();
        let m = smooth_model(g, 2.0, 0.1, 0.3);
        let geo = Geometry::new(g, vec![(0.1, 0.1)], vec![]).unwrap();
        let survey = Survey::for_model(geo, SourceSpectrum::flat(1.0), &m).unwrap();
        let ctx = FrequencyContext::new(&survey, 3.0).unwrap();
        let r = Rank2Model::new(g, m.values().iter().map(|v| 0.6 * v).collect(), m.values().iter().map(|v| 0.9 * v * v * 4.0).collect(), 0.6)
            .unwrap();
        let p = ProjectionOperator::new(n * n, receivers).unwrap();
        s_rank_deficiency_check(&r, &ctx, &p, 1.0, gamma)
    };
    let c = rank_case(3, vec![0, 2], 1.0).unwrap();
    assert!(c.rank <= 9 + 2 && c.nullity >= 7 && c.nullity_lower_bound == 7, "{c:?}");
    assert_eq!(c.rank_with_gamma, Some(18));
    assert!(matches!(rank_case(30, vec![0], 1.0), Err(lrwi_core::Error::TooLarge { .. })));
}

#[test]
fn s_full_column_rank_with_identity_sampling() {
    // n_r = n_g with P = I: stack [αP; √λÃ] directly (the diagnostic requires n_r < n_g).
    let g = Grid2D::new(3, 3, 0.1, 0.1).unwrap();
    let m = smooth_model(g, 2.0, 0.1, 0.3);
    let geo = Geometry::new(g, vec![(0.1, 0.1)], vec![]).unwrap();
    let survey = Survey::for_model(geo, SourceSpectrum::flat(1.0), &m).unwrap();
    let ctx = FrequencyContext::new(&survey, 3.0).unwrap();
    let r = Rank2Model::new(g, m.values().iter().map(|v| 0.6 * v).collect(), m.values().iter().map(|v| 3.0 * v * v).collect(), 0.6).unwrap();
    let p = ProjectionOperator::new(9, (0..9).collect()).unwrap();
    let s = lrwi_core::lrwi::build_augmented(&r, &ctx, &p, 1.0, 0.0).unwrap();
    let dense = s.to_dense();
    let rows = 9 + 9;
    let sv = lrwi_core::dense::singular_values(rows, 18, &dense[..rows * 18]);
    assert_eq!(lrwi_core::dense::numerical_rank(&sv, 1e-10), 18);
}
