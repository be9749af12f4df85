//! Scans a dataset tree with `Au/` and `Tp/` folders and shows the stratified split.
//!
//! ```text
//! cargo run --example dataset_split -- /data/CASIA2 [ratio] [seed]
//! ```

use elacnn::dataset::{batches, scan_directory, split_stratified};
use elacnn::loss::Label;

fn main() -> elacnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(root) = args.first() else {
        eprintln!("usage: dataset_split <root> [ratio] [seed]");
        std::process::exit(2);
    };
    let ratio = args.get(1).map_or(0.8, |r| r.parse().expect("ratio is a number"));
    let seed = args.get(2).map_or(42, |s| s.parse().expect("seed is a number"));

    let manifest = scan_directory(root)?;
    for s in manifest.skipped() {
        println!("skipped {}: {}", s.path.display(), s.reason);
    }
    let split = split_stratified(&manifest, ratio, seed)?;
    for label in [Label::Authentic, Label::Tampered] {
        let of = |idx: &[usize]| idx.iter().filter(|&&i| manifest.entries()[i].label == label).count();
        println!("{label:<10} total {:>6}  train {:>6}  val {:>6}", manifest.count(label), of(&split.train), of(&split.val));
    }
    let first = batches(&split.train, 32, seed, 1)?;
    println!("epoch 1: {} batches of up to 32", first.len());
    Ok(())
}
