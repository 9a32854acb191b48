//! Real-time factor and per-hop latency of the default model on one thread.

use std::sync::Arc;

use dctcrn::nn::{Dctcrn, ModelConfig};
use dctcrn::stream::rtf_benchmark;

fn main() -> dctcrn::Result<()> {
    let seconds: f64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(10.0);
    let model = Arc::new(Dctcrn::init(ModelConfig::default(), 0)?);
    let stats = rtf_benchmark(model, seconds, 7)?;
    print!("{}", stats.to_key_values());
    Ok(())
}
