use degscope::corpus::{load_image, psnr, GrayImage};
use degscope::Error;

#[test]
fn rgb_pixels_reduce_to_luma() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rgb.png");
    let mut buf = image::RgbImage::new(2, 1);
    buf.put_pixel(0, 0, image::Rgb([255, 255, 255]));
    buf.put_pixel(1, 0, image::Rgb([255, 0, 0]));
    buf.save(&path).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!((img.width(), img.height()), (2, 1));
    assert!((img.get(0, 0) - 255.0).abs() < 1e-9);
    assert!((img.get(1, 0) - 76.245).abs() < 1e-9);
}

#[test]
fn gray_png_and_pgm_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = GrayImage::from_fn(5, 3, |x, y| (x * 40 + y * 7) as f64);
    let png = dir.path().join("g.png");
    img.save_png(&png).unwrap();
    let back = load_image(&png).unwrap();
    assert_eq!(back, img);

    let pgm = dir.path().join("g.pgm");
    let mut bytes = b"P5\n5 3\n255\n".to_vec();
    bytes.extend(img.to_gray8());
    std::fs::write(&pgm, bytes).unwrap();
    assert_eq!(psnr(&load_image(&pgm).unwrap(), &img).unwrap(), 99.0);
}

#[test]
fn corrupt_and_missing_files_fail_distinctly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.png");
    std::fs::write(&bad, b"\x89PNG\r\n\x1a\nthis is not a png").unwrap();
    let e = load_image(&bad).unwrap_err();
    assert!(matches!(e, Error::Decode { .. }), "{e}");

    let e = load_image(dir.path().join("absent.png")).unwrap_err();
    assert!(matches!(e, Error::Io { .. }), "{e}");
}

#[test]
fn sixteen_bit_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("deep.png");
    let buf = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_pixel(2, 2, image::Luma([40000]));
    buf.save(&path).unwrap();
    let e = load_image(&path).unwrap_err();
    assert!(matches!(e, Error::UnsupportedBitDepth { .. }), "{e}");
    assert_eq!(e.code(), 3);
}
