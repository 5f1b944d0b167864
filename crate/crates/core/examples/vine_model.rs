//! Build an R-vine, evaluate its density, simulate and save it.

use msrvine::vine::Edge;
use msrvine::{AssetRole, BivariateCopula, CopulaFamily, RVineModel, RVineStructure};

fn main() -> msrvine::Result<()> {
    let structure = RVineStructure::new(
        3,
        vec![vec![Edge::new(0, 1, []), Edge::new(1, 2, [])], vec![Edge::new(0, 2, [1])]],
    )?;
    println!("structure matrix {:?}", structure.to_matrix());
    let model = RVineModel::new(
        structure,
        vec![
            vec![BivariateCopula::from_tau(CopulaFamily::Gumbel90, -0.5)?, BivariateCopula::gauss(0.8)?],
            vec![BivariateCopula::student_t(0.45, 5.0)?],
        ],
    )?
    .with_labels(vec!["SPX".into(), "VIX".into(), "VXN".into()], vec![AssetRole::Eq, AssetRole::Vol, AssetRole::Vol])?;

    println!("log c(0.2, 0.7, 0.6) = {:.6}", model.log_density(&[0.2, 0.7, 0.6])?);
    let u = model.simulate(2000, 7)?;
    println!("loglik of 2000 simulated rows: {:.2}", model.log_likelihood(&u)?);
    println!("{}", model.to_json()?);
    Ok(())
}
