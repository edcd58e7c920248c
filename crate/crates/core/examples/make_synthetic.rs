//! Regenerates the bundled dataset: `cargo run --example make_synthetic > data/synthetic.csv`.

use fair_targeting::sim::{draw_sample, make_calibrated_dgp, DgpSpec};

fn main() -> fair_targeting::Result<()> {
    let dgp = make_calibrated_dgp(&DgpSpec::default(), 7)?;
    let ds = draw_sample(&dgp, 400, 2024)?;
    ds.write_csv(std::io::stdout().lock())
}
