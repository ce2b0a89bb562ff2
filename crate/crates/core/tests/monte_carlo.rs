use nnimpute::sim::diagnostics::bias_decomposition;
use nnimpute::sim::population::{generate_population, PopulationId};
use nnimpute::sim::scenario::{run_scenario_on, ScenarioConfig, Target};
use nnimpute::survey::{draw_sample, ht_estimate, pps_inclusion_probs, SamplingDesign};
use nnimpute::variance::VarianceMethod;
use nnimpute::{fit_matching_model, nearest_neighbor_match, ParameterSpec, SurveyDataset, Unit};

const DRAWS: usize = 10_000;

#[test]
fn horvitz_thompson_is_unbiased_under_srs() {
    let pop = generate_population(PopulationId::P1, 2_000, 7, true).unwrap();
    let design = SamplingDesign::SimpleRandom { n: 50 };
    let est: Vec<f64> = (0..DRAWS)
        .map(|r| ht_estimate(&draw_sample(&pop.data, &design, r as u64).unwrap().sample, |y| y).unwrap())
        .collect();
    let mean = est.iter().sum::<f64>() / DRAWS as f64;
    let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (DRAWS - 1) as f64;
    let mc_se = (var / DRAWS as f64).sqrt();
    assert!((mean - pop.mean).abs() < 4.0 * mc_se, "{mean} vs {} (MC SE {mc_se})", pop.mean);
}

#[test]
fn poisson_pps_inclusion_frequencies() {
    let sizes: Vec<f64> = (0..60).map(|i| (i as f64 + 4.0).ln()).collect();
    let units = (0..60).map(|i| Unit::respondent(i, vec![0.0], 0.0, 1.0)).collect();
    let frame = SurveyDataset::new(units, 60).unwrap();
    let design = SamplingDesign::PoissonPps {
        expected_size: 12.0,
        sizes: sizes.clone(),
    };
    let (pi, clipped) = pps_inclusion_probs(12.0, &sizes).unwrap();
    assert_eq!(clipped, 0);
    let mut hits = vec![0usize; 60];
    for r in 0..DRAWS {
        let s = draw_sample(&frame, &design, 1_000 + r as u64).unwrap().sample;
        for u in s.units() {
            assert_eq!(u.inclusion_prob, pi[u.id as usize]);
            hits[u.id as usize] += 1;
        }
    }
    for (i, (&h, &p)) in hits.iter().zip(&pi).enumerate() {
        let freq = h as f64 / DRAWS as f64;
        let se = (p * (1.0 - p) / DRAWS as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se, "unit {i}: {freq} vs {p}");
    }
}

#[test]
fn decomposition_identity_on_simulated_samples() {
    for id in [PopulationId::P1, PopulationId::P4] {
        let pop = generate_population(id, 5_000, 11, false).unwrap();
        let design = SamplingDesign::SimpleRandom { n: 300 };
        for r in 0..25 {
            let sample = draw_sample(&pop.data, &design, r).unwrap().sample.mask_nonrespondents();
            let scores = fit_matching_model(&sample, id.default_basis())
                .unwrap()
                .scores(&sample)
                .unwrap();
            let a = nearest_neighbor_match(&sample, &scores).unwrap();
            for spec in [
                ParameterSpec::Mean,
                ParameterSpec::ProportionBelow {
                    threshold: pop.threshold,
                },
            ] {
                let d = bias_decomposition(&pop, &sample, &a, &spec).unwrap();
                assert!(d.identity_gap() < 1e-10, "{id} rep {r}: {d:?}");
            }
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = ScenarioConfig {
        population_size: 4_000,
        sample_size: 150,
        ..ScenarioConfig::default()
    };
    let pop = generate_population(cfg.population, cfg.population_size, cfg.population_seed, false).unwrap();
    let a = run_scenario_on(&cfg, &pop, 12).unwrap();
    let b = run_scenario_on(&cfg, &pop, 12).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn oracle_coverage_without_nonresponse() {
    let cfg = ScenarioConfig {
        full_response: true,
        targets: vec![Target::Mean],
        methods: vec![VarianceMethod::Proposed],
        ..ScenarioConfig::default()
    };
    let pop = generate_population(cfg.population, cfg.population_size, cfg.population_seed, true).unwrap();
    let report = run_scenario_on(&cfg, &pop, 2_000).unwrap();
    let m = report.method(Target::Mean, VarianceMethod::Proposed).unwrap();
    assert_eq!(m.failures, 0);
    assert!((93.0..=97.0).contains(&m.coverage_pct), "coverage {}", m.coverage_pct);
}
