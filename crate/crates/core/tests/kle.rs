use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tgnn_core::field::{fredholm_residual, sample_xi, solve_eigenpairs_1d, CovarianceSpec, KleModel, Truncation};

/// Top eigenvalues of the Gauss-Legendre Nystrom discretization of the
/// exponential kernel on `[0, len]`.
fn nystrom(eta: f64, len: f64, points: usize, top: usize) -> Vec<f64> {
    let (nodes, weights) = gauss_legendre(points);
    let x: Vec<f64> = nodes.iter().map(|u| 0.5 * len * (u + 1.0)).collect();
    let w: Vec<f64> = weights.iter().map(|v| 0.5 * len * v).collect();
    let k = DMatrix::from_fn(points, points, |i, j| {
        w[i].sqrt() * (-(x[i] - x[j]).abs() / eta).exp() * w[j].sqrt()
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(k).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.truncate(top);
    ev
}

/// Nodes and weights by Newton iteration on the Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

#[test]
fn eigenvalues_match_nystrom_discretization() {
    for &(eta, len) in &[(1.0, 1.0), (408.0, 1020.0), (204.0, 1020.0)] {
        // the kernel kink limits Nystrom to second order, so extrapolate
        let coarse = nystrom(eta, len, 300, 10);
        let fine = nystrom(eta, len, 600, 10);
        let oracle: Vec<f64> = coarse.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
        let pairs = solve_eigenpairs_1d(eta, len, 10).unwrap();
        for (k, (p, o)) in pairs.iter().zip(&oracle).enumerate() {
            let rel = (p.eigenvalue - o).abs() / o;
            assert!(rel <= 1e-4, "eta {eta} L {len} mode {k}: {} vs {o} ({rel:e})", p.eigenvalue);
        }
    }
}

fn base(eta: f64) -> CovarianceSpec {
    CovarianceSpec {
        variance: 1.0,
        corr_x: eta,
        corr_y: eta,
        lx: 1020.0,
        ly: 1020.0,
        x0: 0.0,
        y0: 0.0,
        mean_logk: 0.0,
    }
}

#[test]
fn truncation_counts_and_fredholm_checks() {
    let start = std::time::Instant::now();
    for &(eta, want, tol) in &[(0.4 * 1020.0, 20usize, 3usize), (0.2 * 1020.0, 71, 5)] {
        let m = KleModel::build(base(eta), Truncation::Energy(0.8)).unwrap();
        assert!(m.len().abs_diff(want) <= tol, "eta {eta}: {} modes", m.len());
        assert!(m.energy_fraction >= 0.8 && m.energy_fraction <= 1.0);
        for mode in &m.modes {
            for pair in [&mode.x, &mode.y] {
                assert!(fredholm_residual(pair, eta, 1020.0, 50) <= 1e-6);
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn energy_curve_is_monotone_and_bounded() {
    let m = KleModel::build(base(408.0), Truncation::Modes(60)).unwrap();
    let curve = m.energy_curve();
    assert_eq!(curve.len(), 60);
    assert!(curve[0] > 0.0);
    assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    assert!(*curve.last().unwrap() <= 1.0);
    assert!(m.modes.windows(2).all(|w| w[0].eigenvalue >= w[1].eigenvalue));
    assert!(m.modes.iter().all(|k| k.eigenvalue > 0.0));
}

#[test]
fn sampled_log_conductivity_variance_matches_partial_sum() {
    let m = KleModel::build(base(408.0), Truncation::Energy(0.8)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &(x, y) in &[(260.0, 260.0), (780.0, 510.0)] {
        let draws = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let xi = sample_xi(m.len(), &mut rng);
            let z = m.log_k(&xi, x, y).unwrap();
            s += z;
            s2 += z * z;
        }
        let mean = s / draws as f64;
        let var = (s2 - draws as f64 * mean * mean) / (draws - 1) as f64;
        let exact: f64 = m
            .modes
            .iter()
            .map(|k| k.eigenvalue * (k.x.value(x) * k.y.value(y)).powi(2))
            .sum();
        assert!((var - exact).abs() <= 0.03 * exact, "{var} vs {exact}");
    }
}

#[test]
fn standard_normal_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let draws = 1_000_000;
    let n = 3;
    let mut s = [0.0; 3];
    let mut s2 = [0.0; 3];
    for _ in 0..draws {
        let xi = sample_xi(n, &mut rng);
        for i in 0..n {
            s[i] += xi[i];
            s2[i] += xi[i] * xi[i];
        }
    }
    for i in 0..n {
        let m = s[i] / draws as f64;
        let v = s2[i] / draws as f64 - m * m;
        assert!(m.abs() <= 0.005, "{m}");
        assert!((0.99..=1.01).contains(&v), "{v}");
    }
    assert!(sample_xi(0, &mut rng).is_empty());
}

#[test]
fn field_on_base_grid_is_positive() {
    let m = KleModel::build(base(408.0), Truncation::Energy(0.8)).unwrap();
    let g = tgnn_core::GridSpec::covering(51, 51, 1020.0, 1020.0, 0.0, 0.0).unwrap();
    let xi = sample_xi(m.len(), &mut ChaCha8Rng::seed_from_u64(1));
    let k = m.field_on_grid(&xi, &g).unwrap();
    assert_eq!(k.len(), 51 * 51);
    assert!(k.iter().all(|v| *v > 0.0));
    let zero = m.field_on_grid(&vec![0.0; m.len()], &g).unwrap();
    assert!(zero.iter().all(|v| *v == 1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_conductivity_is_linear_in_xi(
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        x in 0.0..1020.0f64,
        y in 0.0..1020.0f64,
        seed in any::<u64>(),
    ) {
        let spec = CovarianceSpec { mean_logk: 0.7, ..base(408.0) };
        let m = KleModel::build(spec, Truncation::Modes(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1 = sample_xi(8, &mut rng);
        let x2 = sample_xi(8, &mut rng);
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
        let z = |v: &[f64]| m.log_k(v, x, y).unwrap() - 0.7;
        let lhs = z(&mix);
        let rhs = a * z(&x1) + b * z(&x2);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gradient_is_continuous(x in 10.0..1010.0f64, y in 10.0..1010.0f64, seed in any::<u64>()) {
        let m = KleModel::build(base(408.0), Truncation::Modes(10)).unwrap();
        let xi = sample_xi(10, &mut ChaCha8Rng::seed_from_u64(seed));
        let (_, gx, gy) = m.log_k_gradient(&xi, x, y, None).unwrap();
        let (_, hx, hy) = m.log_k_gradient(&xi, x + 1e-6, y + 1e-6, None).unwrap();
        prop_assert!(gx.is_finite() && gy.is_finite());
        prop_assert!((gx - hx).abs() < 1e-8 && (gy - hy).abs() < 1e-8);
    }
}
