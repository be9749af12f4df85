//! Prints the layer table of the detector and checks it against a forward pass.

use elacnn::nn::{build_paper_model, PAPER_INPUT};
use elacnn::tensor::Tensor;

fn main() -> elacnn::Result<()> {
    let model = build_paper_model(42);
    for row in model.summary(&PAPER_INPUT)? {
        println!("{:<10} {:<16} {:>10}", row.kind, format!("{:?}", row.output_dims), row.param_count);
    }
    println!("total {}", elacnn::cli::group_thousands(model.total_params()));

    let probs = model.infer(&Tensor::full(&PAPER_INPUT, 0.5))?;
    println!("untrained output on a flat grey input: {:?}", probs.data());
    Ok(())
}
