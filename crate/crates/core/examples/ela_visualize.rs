//! Writes the error level image of a picture.
//!
//! ```text
//! cargo run --example ela_visualize -- photo.jpg ela.png [quality]
//! ```
//!
//! Without arguments a synthetic image with a pasted patch is used.

use elacnn::ela::{ela_image, encode_jpeg, RgbImage};

fn synthetic() -> elacnn::Result<RgbImage> {
    // Smooth gradient saved at quality 70, then a sharp patch that was never compressed.
    let base = RgbImage::from_fn(160, 120, |x, y| [(x + y) as u8, (2 * y) as u8, 90])?;
    let base = RgbImage::decode(&encode_jpeg(&base, 70)?)?;
    RgbImage::from_fn(160, 120, |x, y| {
        if (50..100).contains(&x) && (30..80).contains(&y) {
            [((x * 37) ^ (y * 11)) as u8, ((x * 5) ^ (y * 29)) as u8, (x * y) as u8]
        } else {
            base.pixel(x, y)
        }
    })
}

fn main() -> elacnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let img = match args.first() {
        Some(path) => RgbImage::open(path)?,
        None => synthetic()?,
    };
    let output = args.get(1).map_or("ela.png", String::as_str);
    let quality = args.get(2).map_or(Ok(90), |q| q.parse()).expect("quality is a number");

    let ela = ela_image(&img, quality)?;
    ela.save_png(output)?;
    let mean = ela.data().iter().map(|&v| f64::from(v)).sum::<f64>() / ela.data().len() as f64;
    println!("{}x{} -> {output} (quality {quality}, mean level {mean:.1})", ela.width(), ela.height());
    Ok(())
}
