//! Per-layer parameter and multiply-accumulate counts for each preset.

use dctcrn::nn::{ModelConfig, ModelReport};

fn main() -> dctcrn::Result<()> {
    for (name, cfg) in [
        ("default", ModelConfig::default()),
        ("tiny", ModelConfig::tiny()),
    ] {
        println!("# {name}");
        println!("{}\n", ModelReport::new(&cfg));
    }
    Ok(())
}
