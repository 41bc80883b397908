use super::*;
use crate::field::{CovarianceSpec, KleModel, Truncation};
use crate::grid::{BoundarySpec, GridSpec, TimeSpec};
use crate::mlp::{init_parameters, Affine, NetworkSpec};
use crate::train::HeadMap;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn relative_l2_examples() {
    assert_eq!(relative_l2(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    let v = relative_l2(&[1.0, 2.0], &[2.0, 2.0]).unwrap();
    assert!((v - 1.0 / 8f64.sqrt()).abs() < 1e-12);
    assert!(relative_l2(&[1.0], &[0.0]).is_err());
    assert!(relative_l2(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn r2_examples() {
    assert_eq!(r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    assert_eq!(r2_score(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    assert!((r2_score(&[0.0, 0.0, 0.0], &[1.0, 2.0, 3.0]).unwrap() + 6.0).abs() < 1e-12);
    assert!(r2_score(&[1.0, 1.0], &[4.0, 4.0]).is_err());
    assert!(r2_score(&[1.0], &[4.0]).is_err());
}

proptest! {
    #[test]
    fn relative_l2_is_scale_invariant(v in prop::collection::vec(-10.0..10.0f64, 2..20), a in 0.1..5.0f64) {
        let r: Vec<f64> = v.iter().map(|x| x + 20.0).collect();
        let p: Vec<f64> = v.iter().map(|x| x * 0.5 + 19.0).collect();
        let s = |u: &[f64], k: f64| u.iter().map(|x| x * k).collect::<Vec<_>>();
        let base = relative_l2(&p, &r).unwrap();
        prop_assert!((relative_l2(&s(&p, a), &s(&r, a)).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
        prop_assert!((relative_l2(&s(&p, -a), &s(&r, -a)).unwrap() - base).abs() <= 1e-12 * base.max(1.0));
    }

    #[test]
    fn relative_l2_triangle_bound(
        a in prop::collection::vec(-5.0..5.0f64, 6),
        b in prop::collection::vec(-5.0..5.0f64, 6),
        c in prop::collection::vec(1.0..5.0f64, 6),
    ) {
        let norm = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let cn = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lhs = relative_l2(&a, &c).unwrap();
        prop_assert!(lhs <= (norm(&a, &b) + norm(&b, &c)) / cn + 1e-12);
    }

    #[test]
    fn r2_is_permutation_invariant(
        pairs in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 3..30),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let (p, r): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        prop_assume!(r.iter().any(|v| (v - r[0]).abs() > 1e-6));
        let mut idx: Vec<usize> = (0..p.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        let rr: Vec<f64> = idx.iter().map(|&i| r[i]).collect();
        let a = r2_score(&p, &r).unwrap();
        let b = r2_score(&pp, &rr).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        prop_assert!(a <= 1.0);
    }
}

fn two_pass(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let len = rows[0].len();
    let mean: Vec<f64> = (0..len).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let var = (0..len)
        .map(|j| rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    (mean, var)
}

#[test]
fn streaming_moments_match_two_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rows: Vec<Vec<f64>> = (0..1000)
        .map(|_| (0..7).map(|j| 200.0 + j as f64 * 1e-3 + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect())
        .collect();
    let mut all = Moments::new(7);
    let mut a = Moments::new(7);
    let mut b = Moments::new(7);
    for (i, r) in rows.iter().enumerate() {
        all.push(r);
        if i < 313 {
            a.push(r)
        } else {
            b.push(r)
        }
    }
    a.merge(&b);
    let (m, v) = two_pass(&rows);
    for est in [&all, &a] {
        let ev = est.variance();
        for j in 0..7 {
            assert!((est.mean[j] - m[j]).abs() <= 1e-10 * m[j].abs());
            assert!((ev[j] - v[j]).abs() <= 1e-10 * v[j]);
        }
    }
}

#[test]
fn degenerate_and_two_sample_variance() {
    let mut m = Moments::new(3);
    for _ in 0..50 {
        m.push(&[1.5, -2.0, 200.25]);
    }
    assert!(m.variance().iter().all(|v| *v == 0.0));
    let mut two = Moments::new(2);
    two.push(&[1.0, 5.0]);
    two.push(&[4.0, 5.5]);
    assert_eq!(two.variance(), vec![4.5, 0.125]);
    let mut empty = Moments::new(2);
    empty.merge(&two);
    assert_eq!(empty, two);
}

#[test]
fn pdf_of_standard_normal_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let p = pdf_estimate([5.0, 260.0, 260.0], &s).unwrap();
    assert_eq!(p.histogram.counts.iter().sum::<usize>(), s.len());
    assert_eq!(p.histogram.edges.len(), p.histogram.counts.len() + 1);
    let (x, y) = p.density.as_ref().unwrap();
    let i = x.iter().enumerate().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0;
    // nearest grid point to zero, corrected by the curvature of the density
    assert!((0.37..=0.43).contains(&y[i]), "{}", y[i]);
    assert!((p.density_integral().unwrap() - 1.0).abs() <= 1e-3);
}

#[test]
fn pdf_of_constant_samples_is_degenerate() {
    let p = pdf_estimate([0.0; 3], &[3.0; 40]).unwrap();
    assert!(p.density.is_none());
    assert_eq!(p.histogram.counts, vec![40]);
    assert!(pdf_estimate([0.0; 3], &[1.0; 29]).is_err());
}

#[test]
fn pdf_counts_sum_for_skewed_samples() {
    let s: Vec<f64> = (0..500).map(|i| (i as f64 * 0.01).exp()).collect();
    let p = pdf_estimate([0.0; 3], &s).unwrap();
    assert_eq!(p.histogram.counts.iter().sum::<usize>(), 500);
    assert!((p.density_integral().unwrap() - 1.0).abs() <= 1e-3);
}

fn small_model() -> KleModel {
    let spec = CovarianceSpec {
        variance: 1.0,
        corr_x: 408.0,
        corr_y: 408.0,
        lx: 1020.0,
        ly: 1020.0,
        x0: 0.0,
        y0: 0.0,
        mean_logk: 0.0,
    };
    KleModel::build(spec, Truncation::Modes(6)).unwrap()
}

fn layout() -> Layout {
    Layout {
        grid: GridSpec::covering(8, 8, 1020.0, 1020.0, 0.0, 0.0).unwrap(),
        time: TimeSpec { dt: 0.2, steps: 10 },
        steps: vec![0, 5, 10],
    }
}

fn boundary() -> BoundarySpec {
    BoundarySpec {
        h_left: 202.0,
        h_right: 200.0,
        flux: 0.0,
        h_init: 200.0,
        specific_storage: 1e-4,
    }
}

#[test]
fn solver_ensemble_moments_and_probes() {
    let m = small_model();
    let ev = SolverEvaluator {
        model: &m,
        boundary: boundary(),
        layout: layout(),
    };
    let inputs = draw_inputs(20, 6, None, &mut ChaCha8Rng::seed_from_u64(1));
    let probes = [Probe { step_index: 1, cell: 10 }];
    let stats = mc_ensemble(&ev, &inputs, &probes).unwrap();
    assert_eq!(stats.samples, 20);
    assert_eq!(stats.times, vec![0.0, 1.0, 2.0]);
    // the initial state does not depend on the field
    assert!(stats.variance_at(0).iter().all(|v| *v == 0.0));
    assert!(stats.variance_at(1).iter().any(|v| *v > 0.0));
    // direct two-pass check
    let mut rows = Vec::new();
    for inp in &inputs {
        let mut buf = vec![0.0; ev.layout.len()];
        ev.evaluate(inp, &mut buf).unwrap();
        rows.push(buf);
    }
    let (mean, var) = two_pass(&rows);
    for j in 0..mean.len() {
        assert!((stats.mean[j] - mean[j]).abs() <= 1e-10 * mean[j].abs());
        assert!((stats.variance[j] - var[j]).abs() <= 1e-10 * var[j].max(1e-300) + 1e-20);
    }
    let cells = ev.layout.grid.cells();
    let col: Vec<f64> = rows.iter().map(|r| r[cells + 10]).collect();
    assert_eq!(stats.probe_samples[0], col);
    let again = mc_ensemble(&ev, &inputs, &probes).unwrap();
    assert_eq!(stats, again);
}

#[test]
fn identical_ensembles_give_perfect_metrics() {
    let m = small_model();
    let ev = SolverEvaluator {
        model: &m,
        boundary: boundary(),
        layout: Layout { steps: vec![5, 10], ..layout() },
    };
    let inputs = draw_inputs(6, 6, None, &mut ChaCha8Rng::seed_from_u64(3));
    let s = mc_ensemble(&ev, &inputs, &[]).unwrap();
    let t = metric_table(&s, &s).unwrap();
    for r in &t.rows {
        assert_eq!((r.mean_rel_l2, r.mean_r2, r.var_rel_l2, r.var_r2), (0.0, 1.0, 0.0, 1.0));
    }
    let mut other = s.clone();
    other.steps = vec![5, 9];
    assert!(metric_table(&s, &other).is_err());
}

#[test]
fn surrogate_evaluator_honours_hard_ends() {
    let spec = NetworkSpec::new(
        6,
        vec![5],
        [Affine::unit(0.0, 10.0), Affine::unit(0.0, 1020.0), Affine::unit(0.0, 1020.0)],
        Vec::new(),
    );
    let p = init_parameters(&spec, &mut ChaCha8Rng::seed_from_u64(0));
    let ev = SurrogateEvaluator {
        spec: &spec,
        params: &p,
        head: HeadMap::Hard {
            h0: 202.0,
            hl: 200.0,
            x0: 0.0,
            lx: 1020.0,
        },
        layout: layout(),
    };
    // longer xi vectors are accepted; the network reads the leading entries
    let inputs = draw_inputs(4, 9, None, &mut ChaCha8Rng::seed_from_u64(3));
    let s = mc_ensemble(&ev, &inputs, &[]).unwrap();
    assert!(s.mean.iter().all(|v| v.is_finite()));
    let short = draw_inputs(4, 5, None, &mut ChaCha8Rng::seed_from_u64(3));
    let err = mc_ensemble(&ev, &short, &[]).unwrap_err();
    assert!(matches!(err, Error::Realization { index: 0, .. }));
    assert!(mc_ensemble(&ev, &inputs[..1], &[]).is_err());
}
