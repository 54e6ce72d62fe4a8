use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use degscope_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { ds_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf.iter().take(n.min(255)).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn new_image(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> *mut DsImage {
    let data: Vec<f64> = (0..w * h).map(|i| f(i % w, i / w)).collect();
    let mut img = ptr::null_mut();
    assert_eq!(unsafe { ds_image_new(w, h, data.as_ptr(), &mut img) }, DsStatus::Ok);
    img
}

#[test]
fn image_round_trip_and_psnr() {
    let a = new_image(8, 6, |x, y| (x * 20 + y * 3) as f64);
    let (mut w, mut h) = (0, 0);
    unsafe {
        assert_eq!(ds_image_size(a, &mut w, &mut h), DsStatus::Ok);
        assert_eq!((w, h), (8, 6));
        let mut px = vec![0.0; 48];
        assert_eq!(ds_image_pixels(a, px.as_mut_ptr(), px.len()), DsStatus::Ok);
        assert_eq!(px[9], 23.0);
        let mut small = vec![0.0; 10];
        assert_eq!(ds_image_pixels(a, small.as_mut_ptr(), small.len()), DsStatus::BufferTooSmall);
        assert!(last_error().contains("48"));

        let mut p = 0.0;
        assert_eq!(ds_psnr(a, a, &mut p), DsStatus::Ok);
        assert_eq!(p, 99.0);
        assert_eq!(last_error(), "");

        let mut crop = ptr::null_mut();
        assert_eq!(ds_image_center_crop(a, 4, &mut crop), DsStatus::Ok);
        assert_eq!(ds_image_size(crop, &mut w, &mut h), DsStatus::Ok);
        assert_eq!((w, h), (4, 4));
        assert_eq!(ds_psnr(a, crop, &mut p), DsStatus::DimensionMismatch);
        ds_image_free(crop);
        ds_image_free(a);
        ds_image_free(ptr::null_mut());
    }
}

#[test]
fn null_and_bad_inputs() {
    unsafe {
        let mut p = 0.0;
        assert_eq!(ds_psnr(ptr::null(), ptr::null(), &mut p), DsStatus::NullPointer);
        let mut img = ptr::null_mut();
        let missing = CString::new("/definitely/not/here.png").unwrap();
        assert_eq!(ds_image_load(missing.as_ptr(), &mut img), DsStatus::Io);
        assert!(img.is_null());
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(ds_image_load(bad.as_ptr().cast(), &mut img), DsStatus::InvalidUtf8);
        let data = [300.0];
        assert_eq!(ds_image_new(1, 1, data.as_ptr(), &mut img), DsStatus::InvalidImage);
    }
}

#[test]
fn glcm_of_constant_image() {
    let img = new_image(16, 16, |_, _| 130.0);
    let preset = CString::new("full").unwrap();
    let mut cells = vec![0.0; 16];
    unsafe {
        assert_eq!(ds_mas_glcm(img, 4, preset.as_ptr(), cells.as_mut_ptr(), cells.len()), DsStatus::Ok);
        assert_eq!(cells[2 * 4 + 2], 1.0);
        assert_eq!(cells.iter().sum::<f64>(), 1.0);
        let bogus = CString::new("diagonal").unwrap();
        assert_eq!(ds_mas_glcm(img, 4, bogus.as_ptr(), cells.as_mut_ptr(), cells.len()), DsStatus::Config);
        ds_image_free(img);
    }
}

#[test]
fn degrade_is_seeded() {
    let img = new_image(32, 32, |x, y| ((x * 7 + y * 11) % 256) as f64);
    let spec = CString::new("gaussian:25").unwrap();
    unsafe {
        let (mut a, mut b, mut c) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
        assert_eq!(ds_degrade(img, spec.as_ptr(), 5, &mut a), DsStatus::Ok);
        assert_eq!(ds_degrade(img, spec.as_ptr(), 5, &mut b), DsStatus::Ok);
        assert_eq!(ds_degrade(img, spec.as_ptr(), 6, &mut c), DsStatus::Ok);
        let mut p = 0.0;
        assert_eq!(ds_psnr(a, b, &mut p), DsStatus::Ok);
        assert_eq!(p, 99.0);
        assert_eq!(ds_psnr(a, c, &mut p), DsStatus::Ok);
        assert!(p < 99.0);
        let multi = CString::new("gaussian:15,25").unwrap();
        let mut d = ptr::null_mut();
        assert_eq!(ds_degrade(img, multi.as_ptr(), 5, &mut d), DsStatus::InvalidArgument);
        for h in [a, b, c, img] {
            ds_image_free(h);
        }
    }
}

#[test]
fn schedule_and_sampling() {
    let stage = CString::new("bridging").unwrap();
    let mut s = ptr::null_mut();
    unsafe {
        assert_eq!(ds_schedule_new(2, stage.as_ptr(), 0.1, 0.1, 1.0, &mut s), DsStatus::Ok);
        let mut steps = 0;
        assert_eq!(ds_schedule_steps(s, &mut steps), DsStatus::Ok);
        assert_eq!(steps, 2);
        let mut alpha = [0.0; 3];
        assert_eq!(ds_schedule_coefficients(s, DsCoefficient::Alpha as u32, alpha.as_mut_ptr(), 3), DsStatus::Ok);
        assert_eq!(alpha, [0.0, 0.5, 0.5]);
        assert_eq!(ds_schedule_coefficients(s, 17, alpha.as_mut_ptr(), 3), DsStatus::InvalidArgument);
        let mut v = 1.0;
        assert_eq!(ds_posterior_variance(s, 1, &mut v), DsStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(ds_posterior_variance(s, 2, &mut v), DsStatus::Ok);
        assert!((v - 0.0025).abs() < 1e-15);
        assert_eq!(ds_posterior_variance(s, 0, &mut v), DsStatus::InvalidArgument);

        let x0 = [0.1, -0.4, 0.9];
        let lq = [0.5, 0.2, -0.3];
        let res: Vec<f64> = lq.iter().zip(&x0).map(|(l, x)| l - x).collect();
        let eps = [1.0, -0.5, 0.25];
        let mut x_t = [0.0; 3];
        assert_eq!(
            ds_forward_cumulative(s, 2, x0.as_ptr(), res.as_ptr(), lq.as_ptr(), eps.as_ptr(), 3, x_t.as_mut_ptr()),
            DsStatus::Ok
        );
        let mut back = [0.0; 3];
        assert_eq!(ds_oracle_sample(s, x_t.as_ptr(), x0.as_ptr(), lq.as_ptr(), 3, back.as_mut_ptr()), DsStatus::Ok);
        for (a, b) in back.iter().zip(&x0) {
            assert!((a - b).abs() < 1e-12);
        }

        let zeros = [0.0; 3];
        let mut prev = [0.0; 3];
        assert_eq!(
            ds_reverse_step(s, 2, x_t.as_ptr(), lq.as_ptr(), zeros.as_ptr(), zeros.as_ptr(), 3, prev.as_mut_ptr()),
            DsStatus::Ok
        );
        assert_eq!(prev, x_t);
        ds_schedule_free(s);

        let restoration = CString::new("restoration").unwrap();
        let mut r = ptr::null_mut();
        assert_eq!(ds_schedule_new(4, restoration.as_ptr(), 0.1, 1.0, 1.0, &mut r), DsStatus::Schedule);
        assert!(last_error().contains("eta"));
    }
}

#[test]
fn losses_through_abi() {
    unsafe {
        let eye = [1.0, 0.0, 0.0, 1.0];
        let mut v = 0.0;
        assert_eq!(ds_loss_bridge(eye.as_ptr(), eye.as_ptr(), 2, 2, 1.0, &mut v), DsStatus::Ok);
        assert!((v - 0.31326).abs() < 1e-5);
        let zeros = [0.0; 14];
        let labels = [0usize, 6];
        assert_eq!(ds_loss_deg_cls(zeros.as_ptr(), labels.as_ptr(), 2, 7, &mut v), DsStatus::Ok);
        assert!((v - 7f64.ln()).abs() < 1e-12);
        let bad = [0usize, 7];
        assert_eq!(ds_loss_deg_cls(zeros.as_ptr(), bad.as_ptr(), 2, 7, &mut v), DsStatus::InvalidArgument);
        let a = [1.0, 0.0];
        let b = [-3.0, 0.0];
        assert_eq!(ds_loss_fcnl(a.as_ptr(), 1, b.as_ptr(), 1, 2, &mut v), DsStatus::Ok);
        assert!((v - 2.0).abs() < 1e-15);
        let zero_row = [0.0, 0.0];
        assert_eq!(ds_loss_fcnl(a.as_ptr(), 1, zero_row.as_ptr(), 1, 2, &mut v), DsStatus::Numerical);
        let ones = [1.0; 5];
        assert_eq!(
            ds_loss_gen(ones.as_ptr(), zeros.as_ptr(), zeros.as_ptr(), zeros.as_ptr(), 5, 1, 1.0, 1.0, 1.0, &mut v),
            DsStatus::Ok
        );
        assert_eq!(v, 5.0);
        for name in ["gen", "bridge", "deg-cls", "bdg", "rft", "fcnl"] {
            let id = CString::new(name).unwrap();
            assert_eq!(ds_grad_check(id.as_ptr(), 10, 1e-5, 3, &mut v), DsStatus::Ok);
            assert!(v < 1e-5, "{name}: {v}");
        }
    }
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/degscope.h")).unwrap();
    for name in [
        "ds_last_error_message",
        "ds_image_load",
        "ds_image_new",
        "ds_image_free",
        "ds_mas_glcm",
        "ds_degrade",
        "ds_schedule_new",
        "ds_reverse_step",
        "ds_oracle_sample",
        "ds_loss_bridge",
        "ds_grad_check",
        "DS_STATUS_NULL_POINTER",
        "typedef struct DsImage DsImage",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"degscope.h\"\nint main(void) { DsImage *img = 0; double px[1] = {1.0};\n\
         return ds_image_new(1, 1, px, &img) == DS_STATUS_OK ? 0 : 1; }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(Path::new(env!("CARGO_MANIFEST_DIR")).join("include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}
