//! Price levels to log returns to rank pseudo-observations.

use std::collections::HashMap;

use msrvine::data::{parse_levels, rank_pit};
use msrvine::AssetRole;

fn main() -> msrvine::Result<()> {
    let mut csv = String::from("date,SPX,VIX\n");
    let (mut spx, mut vix) = (1000.0f64, 20.0f64);
    for day in 1..=28 {
        let shock = ((day * 37) % 11) as f64 / 10.0 - 0.5;
        spx *= 1.0 + 0.01 * shock;
        vix *= 1.0 - 0.03 * shock;
        csv.push_str(&format!("2024-01-{day:02},{spx:.2},{vix:.2}\n"));
    }
    csv.push_str("2024-01-29,NA,21.0\n");
    let roles = HashMap::from([("SPX".to_string(), AssetRole::Eq), ("VIX".to_string(), AssetRole::Vol)]);
    let panel = parse_levels(csv.as_bytes(), &roles)?;
    println!("{} returns for {:?} (the NA row is dropped)", panel.n_obs(), panel.labels);
    let u = rank_pit(&panel)?;
    for t in 0..5 {
        println!("{}  {:?}", u.dates.as_ref().unwrap()[t], u.row(t));
    }
    Ok(())
}
