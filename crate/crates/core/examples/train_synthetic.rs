//! Trains one objective preset on the synthetic corpus and prints the test
//! report with every property block.
//!
//! ```text
//! cargo run --release --example train_synthetic -- sup+dc 0
//! ```

use diagprop::corpus::{generate_synthetic, TEST, VALIDATION};
use diagprop::evaluator::{evaluate, fit_confidence_probe, predict_all, EvalOptions};
use diagprop::trainer::train;
use diagprop::{EncoderConfig, Preset, SyntheticSpec, TrainConfig};

fn main() -> diagprop::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset: Preset = args.next().as_deref().unwrap_or("sup").parse()?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let ds = generate_synthetic(&SyntheticSpec::default())?;
    let config = TrainConfig {
        seed,
        objectives: preset.config(),
        model: EncoderConfig { hidden: 32, ff_hidden: 64, ..EncoderConfig::default() },
        ..TrainConfig::default()
    };
    let out = train::<f64>(&config, &ds)?;
    for (epoch, r) in out.validation.iter().enumerate() {
        println!("epoch {epoch:2}: val F1-C {:.3} F1-E {:.3}", r.target.macro_f1, r.explanation.macro_f1);
    }

    let head = if config.objectives.confidence_indication {
        out.best.confidence_head()
    } else {
        fit_confidence_probe(&predict_all(&out.best, ds.split(VALIDATION)?)?, 2000)
    };
    let opts = EvalOptions { properties: true, query_only: true, ..EvalOptions::default() };
    let report = evaluate(&out.best, ds.split(TEST)?, &opts, Some(&head))?;
    println!("{}", report.to_markdown(&format!("{preset}, seed {seed}, best epoch {}", out.best_epoch)));
    Ok(())
}
