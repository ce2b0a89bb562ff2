//! Five units, two missing. Shows donors, use counts and both forms of the
//! imputed mean.

use nnimpute::{nearest_neighbor_match, nni_estimate, ParameterSpec, SurveyDataset, Unit};

fn main() -> nnimpute::Result<()> {
    let units = vec![
        Unit::respondent(1, vec![0.0], 1.0, 0.5),
        Unit::respondent(2, vec![1.0], 2.0, 0.25),
        Unit::nonrespondent(3, vec![0.4], 0.5),
        Unit::nonrespondent(4, vec![2.1], 0.2),
        Unit::respondent(5, vec![3.0], 5.0, 0.5),
    ];
    let data = SurveyDataset::new(units, 14)?;
    // The covariate itself serves as the matching score.
    let scores: Vec<f64> = data.units().iter().map(|u| u.covariates[0]).collect();
    let a = nearest_neighbor_match(&data, &scores)?;

    println!("unit  donor  uses  k_i");
    for (i, u) in data.units().iter().enumerate() {
        let donor = a.donor_of(i).map_or("-".to_string(), |d| data.units()[d].id.to_string());
        println!("{:>4}  {:>5}  {:>4}  {:.3}", u.id, donor, a.uses()[i], a.multiplicity()[i]);
    }
    let est = nni_estimate(&data, &a, &ParameterSpec::Mean)?;
    println!("imputed sum   {:.6}", est.imputed_sum.unwrap_or(f64::NAN));
    println!("donor weight  {:.6}", est.donor_weight);
    Ok(())
}
