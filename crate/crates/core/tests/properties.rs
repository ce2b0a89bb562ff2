mod common;

use common::{complete, dataset, rows};
use nnimpute::estimators::{nni_estimating_function, nni_mean_estimate, nni_quantile_estimate, ParameterSpec};
use nnimpute::smoothers::{kernel_density, kernel_regression, s_derivative, smoothed_cdf, KernelConfig};
use nnimpute::survey::{hajek_estimate, ht_estimate};
use nnimpute::variance::{
    fit_respondent_curve, proposed_replicates, proposed_variance, pseudo_observations, v_rep, ReplicationScheme,
};
use nnimpute::{nearest_neighbor_match, SurveyDataset, Unit};
use proptest::prelude::*;

fn fast() -> ProptestConfig {
    ProptestConfig::with_cases(256)
}

fn sample_variance_over_n(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0) / n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn imputed_sum_equals_donor_weight(rows in rows(60)) {
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        for spec in [ParameterSpec::Mean, ParameterSpec::ProportionBelow { threshold: 0.0 }] {
            let est = nni_mean_estimate(&data, &a, &spec).unwrap();
            let imputed = est.imputed_sum.unwrap();
            prop_assert!((imputed - est.donor_weight).abs() <= 1e-12 * (1.0 + imputed.abs()),
                "{} vs {}", imputed, est.donor_weight);
        }
    }
}

proptest! {
    #![proptest_config(fast())]

    #[test]
    fn uses_sum_to_nonrespondents(rows in rows(80)) {
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let missing = rows.iter().filter(|r| !r.1).count();
        prop_assert_eq!(a.uses().iter().sum::<usize>(), missing);
    }

    #[test]
    fn weighted_multiplicity_bounds(rows in rows(80)) {
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let pis: Vec<f64> = data.units().iter().map(|u| u.inclusion_prob).collect();
        for (i, (&k, &kt)) in a.multiplicity().iter().zip(a.uses()).enumerate() {
            let ratios = pis.iter().map(|p| pis[i] / p);
            let lo = ratios.clone().fold(f64::INFINITY, f64::min);
            let hi = ratios.fold(0.0, f64::max);
            let kt = kt as f64;
            let slack = 1e-12 * (1.0 + hi * kt);
            prop_assert!(lo * kt <= k + slack && k <= hi * kt + slack, "unit {}: {} <= {} <= {}", i, lo * kt, k, hi * kt);
        }
    }

    #[test]
    fn matching_is_idempotent(rows in rows(80)) {
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let b = nearest_neighbor_match(&data, &scores).unwrap();
        prop_assert_eq!(a.donors(), b.donors());
        prop_assert_eq!(a.multiplicity(), b.multiplicity());
    }

    #[test]
    fn donors_are_nearest(rows in rows(200)) {
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let respondents: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].1).collect();
        for j in 0..rows.len() {
            match a.donor_of(j) {
                None => prop_assert!(rows[j].1),
                Some(d) => {
                    prop_assert!(!rows[j].1 && rows[d].1);
                    let best = (scores[d] - scores[j]).abs();
                    for &i in &respondents {
                        prop_assert!(best <= (scores[i] - scores[j]).abs());
                    }
                }
            }
        }
    }

    #[test]
    fn complete_response_is_horvitz_thompson(
        units in prop::collection::vec((0.02f64..1.0, -5.0f64..5.0, -3.0f64..3.0), 1..60)
    ) {
        let rows: Vec<_> = units.iter().map(|&(p, y, m)| (p, true, y, m)).collect();
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let nni = nni_mean_estimate(&data, &a, &ParameterSpec::Mean).unwrap().value;
        prop_assert_eq!(nni, ht_estimate(&data, |y| y).unwrap());
    }

    #[test]
    fn estimating_function_is_monotone(rows in rows(60), xs in prop::collection::vec(-6.0f64..6.0, 2..20)) {
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        let s: Vec<f64> = xs.iter().map(|&x| nni_estimating_function(&data, &a, 0.5, x).unwrap()).collect();
        prop_assert!(s.windows(2).all(|w| w[0] <= w[1]), "{:?}", s);
    }

    #[test]
    fn quantile_is_monotone_in_level(rows in rows(60), levels in prop::collection::vec(0.01f64..0.99, 2..12)) {
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let mut levels = levels;
        levels.sort_by(f64::total_cmp);
        let q: Vec<f64> = levels
            .iter()
            .map(|&l| nni_quantile_estimate(&data, &a, &ParameterSpec::Quantile { alpha: l }).unwrap().value)
            .collect();
        prop_assert!(q.windows(2).all(|w| w[0] <= w[1]), "{:?}", q);
    }

    #[test]
    fn quantile_matches_cumulative_share(
        ys in prop::collection::hash_set(-1000i32..1000, 1..50),
        alpha in 0.01f64..0.99,
    ) {
        let ys: Vec<f64> = ys.into_iter().map(|v| v as f64 / 8.0).collect();
        let data = complete(&ys, 0.1);
        let a = nearest_neighbor_match(&data, &vec![0.0; ys.len()]).unwrap();
        let est = nni_quantile_estimate(&data, &a, &ParameterSpec::Quantile { alpha }).unwrap().value;
        let mut sorted = ys.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        // Share of units at or below each sorted value.
        let oracle = sorted
            .iter()
            .enumerate()
            .find(|(i, _)| (*i as f64 + 1.0) / n >= alpha)
            .map(|(_, y)| *y)
            .unwrap();
        prop_assert_eq!(est, oracle);
    }

    #[test]
    fn translation_equivariance(
        rows in rows(60),
        grid in prop::collection::vec(-64i32..64, 60),
        shift in -20i32..20,
        alpha in 0.01f64..0.99,
        c in -64i32..64,
    ) {
        // Dyadic outcomes keep the shifts exact in floating point.
        let base: Vec<_> = rows.iter().zip(&grid).map(|(r, g)| (r.0, r.1, *g as f64 / 16.0, r.3)).collect();
        let t = shift as f64;
        let moved: Vec<_> = base.iter().map(|r| (r.0, r.1, r.2 + t, r.3)).collect();
        let (d0, scores) = dataset(&base);
        let (d1, _) = dataset(&moved);
        let a0 = nearest_neighbor_match(&d0, &scores).unwrap();
        let a1 = nearest_neighbor_match(&d1, &scores).unwrap();
        let q = ParameterSpec::Quantile { alpha };
        let q0 = nni_quantile_estimate(&d0, &a0, &q).unwrap().value;
        let q1 = nni_quantile_estimate(&d1, &a1, &q).unwrap().value;
        prop_assert_eq!(q1, q0 + t);
        let c = c as f64 / 16.0;
        let p0 = nni_mean_estimate(&d0, &a0, &ParameterSpec::ProportionBelow { threshold: c }).unwrap().value;
        let p1 = nni_mean_estimate(&d1, &a1, &ParameterSpec::ProportionBelow { threshold: c + t }).unwrap().value;
        prop_assert_eq!(p0, p1);
    }

    #[test]
    fn regression_is_a_convex_combination(
        pts in prop::collection::vec((-3.0f64..3.0, -5.0f64..5.0, 0.01f64..10.0), 1..40),
        h in 0.05f64..2.0,
        queries in prop::collection::vec(-6.0f64..6.0, 1..20),
    ) {
        let curve = kernel_regression(&pts, KernelConfig::new(h).unwrap()).unwrap();
        let lo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        for q in queries {
            let v = curve.evaluate(q).value;
            prop_assert!(v.is_finite() && lo - 1e-12 <= v && v <= hi + 1e-12, "{} not in [{}, {}]", v, lo, hi);
        }
    }

    #[test]
    fn density_integrates_to_one(
        pts in prop::collection::vec((-3.0f64..3.0, 0.01f64..10.0), 1..40),
        h in 0.05f64..1.0,
    ) {
        let cfg = KernelConfig::new(h).unwrap();
        let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min) - 8.0 * h;
        let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max) + 8.0 * h;
        let steps = 4000;
        let dx = (hi - lo) / steps as f64;
        let f: Vec<f64> = (0..=steps).map(|i| kernel_density(&pts, cfg, lo + i as f64 * dx).unwrap()).collect();
        let integral = dx * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[steps]));
        prop_assert!((integral - 1.0).abs() < 1e-3, "{}", integral);
    }

    #[test]
    fn derivative_matches_central_difference(
        pts in prop::collection::vec((-1.0f64..1.0, 0.01f64..10.0), 1..40),
        h in 1.0f64..2.0,
    ) {
        // The central difference has relative error (u^2 - 1) / 60000 at u = (xi - y)/h,
        // so the grid stays within two bandwidths of every point.
        let cfg = KernelConfig::new(h).unwrap();
        let step = h / 100.0;
        for i in 0..=20 {
            let xi = -1.0 + 0.1 * i as f64;
            let d = s_derivative(&pts, cfg, xi).unwrap();
            let numeric = (smoothed_cdf(&pts, cfg, xi + step).unwrap() - smoothed_cdf(&pts, cfg, xi - step).unwrap())
                / (2.0 * step);
            prop_assert!(((numeric - d) / d).abs() < 1e-4, "xi {}: {} vs {}", xi, numeric, d);
        }
    }

    #[test]
    fn jackknife_of_mean_is_s2_over_n(ys in prop::collection::vec(-5.0f64..5.0, 2..80)) {
        let data = complete(&ys, 0.01);
        let scores: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let scheme = ReplicationScheme::jackknife(data.design_weights().as_slice()).unwrap();
        let r = proposed_variance(&data, &a, &scores, &ParameterSpec::Mean, &scheme, KernelConfig::new(0.5).unwrap())
            .unwrap();
        let oracle = sample_variance_over_n(&ys);
        prop_assert!((r.variance - oracle).abs() <= 1e-12 * (1.0 + oracle), "{} vs {}", r.variance, oracle);
    }

    #[test]
    fn v_rep_nonnegative_and_order_free(
        pairs in prop::collection::vec((-10.0f64..10.0, 0.0f64..2.0), 1..60),
        estimate in -10.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let (reps, factors): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let v = v_rep(estimate, &reps, &factors).unwrap();
        prop_assert!(v >= 0.0);
        let mut shuffled = pairs.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let (r2, f2): (Vec<f64>, Vec<f64>) = shuffled.into_iter().unzip();
        let v2 = v_rep(estimate, &r2, &f2).unwrap();
        prop_assert!((v - v2).abs() <= 1e-12 * (1.0 + v));
    }

    #[test]
    fn nonrespondent_placeholders_do_not_move_psi(rows in rows(60), junk in prop::collection::vec(-1e6f64..1e6, 60)) {
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let fitted: Vec<f64> = scores.iter().map(|m| 0.5 * m).collect();
        let z: Vec<f64> = rows.iter().map(|r| if r.1 { r.2 } else { 0.0 }).collect();
        let z_junk: Vec<f64> = rows.iter().zip(&junk).map(|(r, j)| if r.1 { r.2 } else { *j }).collect();
        let psi = pseudo_observations(&data, &a, &fitted, &z).unwrap();
        prop_assert_eq!(&psi, &pseudo_observations(&data, &a, &fitted, &z_junk).unwrap());
        for (i, r) in rows.iter().enumerate() {
            if !r.1 {
                prop_assert_eq!(psi[i], fitted[i]);
            }
        }
    }

    #[test]
    fn replicates_reuse_the_original_assignment(rows in rows(60)) {
        let (data, scores) = dataset(&rows);
        let a = nearest_neighbor_match(&data, &scores).unwrap();
        let z: Vec<f64> = rows.iter().map(|r| if r.1 { r.2 } else { 0.0 }).collect();
        let curve = fit_respondent_curve(&data, &scores, &z, KernelConfig::new(0.4).unwrap()).unwrap();
        let Ok(scheme) = ReplicationScheme::jackknife(data.design_weights().as_slice()) else {
            return Ok(());
        };
        let before = a.clone();
        let reps = proposed_replicates(&data, &a, &scores, &z, &curve, &scheme).unwrap();
        prop_assert_eq!(before.donors(), a.donors());
        let k = a.multiplicity();
        let fitted: Vec<f64> = scores.iter().map(|&m| curve.evaluate(m).value).collect();
        for r in 0..scheme.replicates() {
            let manual: f64 = scheme
                .replicate(r)
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let psi = if rows[i].1 { fitted[i] + (1.0 + k[i]) * (z[i] - fitted[i]) } else { fitted[i] };
                    w * psi
                })
                .sum();
            prop_assert!((manual - reps.replicates[r]).abs() <= 1e-9 * (1.0 + manual.abs()));
        }
    }

    #[test]
    fn hajek_of_a_constant(pis in prop::collection::vec(0.001f64..1.0, 1..80), c in -1e3f64..1e3) {
        let units = pis.iter().enumerate().map(|(i, &p)| Unit::respondent(i as u64, vec![0.0], 0.0, p)).collect();
        let data = SurveyDataset::new(units, 100_000).unwrap();
        let h = hajek_estimate(&data, |_| c).unwrap();
        prop_assert!((h - c).abs() <= 4.0 * f64::EPSILON * c.abs() * pis.len() as f64, "{} vs {}", h, c);
        prop_assert_eq!(hajek_estimate(&data, |_| 1.0).unwrap(), 1.0);
    }
}

#[test]
fn uniform_outcomes_have_unit_density_in_the_middle() {
    let n = 4000;
    let pts: Vec<(f64, f64)> = (0..n).map(|i| ((i as f64 + 0.5) / n as f64, 1.0)).collect();
    let cfg = KernelConfig::new(0.02).unwrap();
    for xi in [0.3, 0.5, 0.7] {
        let d = s_derivative(&pts, cfg, xi).unwrap();
        assert!((d - 1.0).abs() < 1e-3, "{xi}: {d}");
    }
}

#[test]
fn smoothed_cdf_approaches_the_ecdf() {
    let ys: Vec<f64> = (0..200).map(|i| ((i * 37) % 200) as f64 / 50.0 - 2.0).collect();
    let pts: Vec<(f64, f64)> = ys.iter().map(|&y| (y, 1.0)).collect();
    let grid: Vec<f64> = (0..=400).map(|i| -2.5 + i as f64 * 0.0125).collect();
    let sup = |h: f64| {
        let cfg = KernelConfig::new(h).unwrap();
        grid.iter()
            .map(|&x| {
                let ecdf = ys.iter().filter(|&&y| y <= x).count() as f64 / ys.len() as f64;
                (smoothed_cdf(&pts, cfg, x).unwrap() - ecdf).abs()
            })
            .fold(0.0, f64::max)
    };
    let d: Vec<f64> = [0.5, 0.1, 0.02].iter().map(|&h| sup(h)).collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
}
