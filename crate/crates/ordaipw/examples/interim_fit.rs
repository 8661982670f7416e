//! Generate one interim dataset and compare the weighted estimators on it.
//!
//! ```text
//! cargo run --release --example interim_fit [scenario] [seed]
//! ```

use ordaipw::aipw::{estimate, EstOptions, Mode};
use ordaipw::report::{render_estimate, ReportFormat};
use ordaipw::simgen::{generate, Scenario};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let scenario = Scenario::parse(args.get(1).map_or("1", String::as_str)).expect("scenario");
    let seed: u64 = args.get(2).map_or(Ok(11), |s| s.parse()).expect("seed");

    let mut cfg = scenario.defaults();
    cfg.seed = seed;
    let (_, interim) = generate(&cfg, 0).expect("valid scenario defaults");

    for mode in [Mode::Naive, Mode::Ipw, Mode::Aipw2] {
        match estimate(&interim, mode, &EstOptions::default()) {
            Ok(fit) => print!("{}", render_estimate(&fit, ReportFormat::Text).unwrap()),
            Err(e) => println!("{mode}: {e}"),
        }
        println!();
    }
}
