use std::path::PathBuf;

use image::{DynamicImage, GenericImageView, RgbImage};
use memeify_core::renderer::{layout, render_meme, RenderSpec};
use memeify_core::synthetic::class_image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden_render.png")
}

fn fixture_render() -> Vec<u8> {
    let base = DynamicImage::ImageRgb8(class_image("futuruma_fry", 320, 240));
    render_meme(&base, "not sure if smart", "or just british", &RenderSpec::default()).unwrap()
}

/// Set `MEMEIFY_BLESS=1` to rewrite the golden file after an intended change.
#[test]
fn fixture_render_matches_golden_file() {
    let bytes = fixture_render();
    assert_eq!(bytes, fixture_render(), "rendering is not deterministic");
    let path = golden_path();
    if std::env::var_os("MEMEIFY_BLESS").is_some() {
        std::fs::write(&path, &bytes).unwrap();
    }
    let golden = std::fs::read(&path).expect("golden file missing; run with MEMEIFY_BLESS=1");
    assert!(bytes == golden, "render differs from {}", path.display());
}

#[test]
fn random_sizes_keep_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        // tall slivers cannot hold a word at the minimum font size
        let w = rng.random_range(96..1024);
        let h = rng.random_range(64..=(2 * w).min(1024));
        let base = DynamicImage::ImageRgb8(RgbImage::from_pixel(w, h, image::Rgb([90, 120, 200])));
        let png = render_meme(&base, "one does not simply", "render memes", &RenderSpec::default()).unwrap();
        let out = image::load_from_memory(&png).unwrap();
        assert_eq!(out.dimensions(), (w, h));
    }
}

#[test]
fn square_input_gives_square_output() {
    let base = DynamicImage::ImageRgb8(class_image("sq", 512, 512));
    let png = render_meme(&base, "top", "bottom", &RenderSpec::default()).unwrap();
    assert_eq!(image::load_from_memory(&png).unwrap().dimensions(), (512, 512));
}

#[test]
fn empty_bottom_draws_nothing_in_lower_half() {
    let base = DynamicImage::ImageRgb8(RgbImage::from_pixel(300, 300, image::Rgb([10, 200, 30])));
    let l = layout(300, 300, "hello there", "", &RenderSpec::default()).unwrap();
    assert!(l.bottom.is_none());
    let png = render_meme(&base, "hello there", "", &RenderSpec::default()).unwrap();
    let out = image::load_from_memory(&png).unwrap().to_rgb8();
    for y in 150..300 {
        for x in 0..300 {
            assert_eq!(out.get_pixel(x, y).0, [10, 200, 30]);
        }
    }
}
