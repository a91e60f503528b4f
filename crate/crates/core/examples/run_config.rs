//! Parses a run configuration, derives model and training settings from it,
//! and shows how invalid files are reported.

use dgib::config::RunConfig;

const TEXT: &str = "\
# two explanations, wider representation
K = 2
d3 = 8
beta2 = 1e-3   # stronger diversity pressure
epochs = 20
cutoffs = 10, 20, 50
";

fn main() -> dgib::Result<()> {
    let cfg = RunConfig::parse(TEXT)?;
    println!("{:?}", cfg.dims());
    println!("{:?}", cfg.train_config(cfg.seed.unwrap_or(0)));
    println!("canonical form:\n{}", cfg.to_text());
    for bad in ["K = 0", "learning_rate = 0.1", "lr = 0.1\nlr = 0.2"] {
        println!("{bad:?} -> {}", RunConfig::parse(bad).unwrap_err());
    }
    Ok(())
}
