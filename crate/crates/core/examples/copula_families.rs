//! Densities, h-functions, Kendall's tau and tail dependence of the six families.

use msrvine::{quarter_tail_dependence, AssetRole, BivariateCopula, CopulaFamily};

fn main() -> msrvine::Result<()> {
    for family in CopulaFamily::ALL {
        let tau = if family.admits_tau(0.5) { 0.5 } else { -0.5 };
        let c = BivariateCopula::from_tau(family, tau)?;
        let h = c.h_function(0.3, 0.7)?;
        let td = c.tail_dependence();
        println!(
            "{c:<34} tau {:+.3}  c(0.3,0.7) {:.4}  h(0.3|0.7) {:.4}  inv {:.6}  lambda_L {:.3}  lambda_U {:.3}  QTD(Eq,Vol) {:.3}",
            c.tau(),
            c.density(0.3, 0.7)?,
            h,
            c.h_inverse(h, 0.7)?,
            td.lower,
            td.upper,
            quarter_tail_dependence(AssetRole::Eq, AssetRole::Vol, &c),
        );
    }
    Ok(())
}
