//! Maximum-spanning-tree structure selection on |tau|.

use msrvine::vine_select::select_structure;
use msrvine::{BivariateCopula, CopulaFamily, RVineModel, RVineStructure};

fn main() -> msrvine::Result<()> {
    let truth = RVineModel::new(
        RVineStructure::c_vine(&[2, 0, 1, 3])?,
        vec![
            vec![BivariateCopula::gauss(0.7)?, BivariateCopula::gauss(0.5)?, BivariateCopula::from_tau(CopulaFamily::Gumbel, 0.4)?],
            vec![BivariateCopula::gauss(0.2)?, BivariateCopula::gauss(0.1)?],
            vec![BivariateCopula::gauss(0.05)?],
        ],
    )?;
    let u = truth.simulate(2000, 3)?;
    let report = select_structure(&u, &CopulaFamily::ALL)?;
    for (t, tree) in report.model.structure().trees().iter().enumerate() {
        let edges: Vec<String> = tree
            .iter()
            .map(|e| format!("{}-{}|{:?}", e.conditioned[0], e.conditioned[1], e.conditioning))
            .collect();
        println!("tree {}: {}", t + 1, edges.join(", "));
    }
    println!("AIC {:.2}", report.aic);
    Ok(())
}
