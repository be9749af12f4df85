//! Classifies one image with a saved model.
//!
//! ```text
//! cargo run --release --example predict -- model.elacnn photo.jpg
//! ```

use elacnn::ela::ElaConfig;
use elacnn::training::{load_model, predict};

fn main() -> elacnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let [model, image] = args.as_slice() else {
        eprintln!("usage: predict <model.elacnn> <image>");
        std::process::exit(2);
    };
    let model = load_model(model)?;
    let p = predict(&model, image, &ElaConfig::default())?;
    println!("{}: {} (authentic {:.4}, tampered {:.4})", image, p.label, p.authentic, p.tampered);
    Ok(())
}
