//! Trains the detector on a handful of synthetic inputs and prints the history.
//!
//! ```text
//! cargo run --release --example train_synthetic -- [epochs]
//! ```

use elacnn::dataset::InMemory;
use elacnn::loss::Label;
use elacnn::nn::build_paper_model;
use elacnn::tensor::Tensor;
use elacnn::training::{fit, FitControl, MetricsHistory, TrainConfig};

/// Dark maps stand in for authentic error levels, bright ones for tampered.
fn set(levels: &[f32]) -> elacnn::Result<InMemory> {
    let inputs = levels.iter().map(|&v| Tensor::full(&[128, 128, 3], v)).collect();
    let labels = levels.iter().map(|&v| if v < 0.5 { Label::Authentic } else { Label::Tampered }).collect();
    InMemory::new(inputs, labels)
}

fn main() -> elacnn::Result<()> {
    let epochs = std::env::args().nth(1).map_or(20, |e| e.parse().expect("epochs is a number"));
    let train = set(&[0.05, 0.1, 0.15, 0.2, 0.8, 0.85, 0.9, 0.95])?;
    let val = set(&[0.12, 0.88])?;
    let cfg = TrainConfig { epochs, batch_size: 4, seed: 42, ..TrainConfig::default() };

    let mut model = build_paper_model(cfg.seed);
    let mut history = MetricsHistory::new();
    let report = |m: &elacnn::training::EpochMetrics| {
        println!("epoch {:>3}  loss {:.6}  acc {:.3}  val acc {:.3}", m.epoch, m.train_loss, m.train_acc, m.val_acc)
    };
    let mut control = FitControl { on_epoch: Some(Box::new(report)), ..FitControl::default() };
    fit(&mut model, &train, &val, &cfg, &mut history, &mut control)?;
    print!("{}", history.to_csv());
    Ok(())
}
