use std::ffi::{c_char, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use frengate_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { frg_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|&c| c as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn analytic_success_matches_closed_form() {
    assert_eq!(frg_success_probability_analytic(1.0), 0.75);
    assert!((frg_success_probability_analytic(10.0) - 15.0 / 101.0).abs() < 1e-15);
}

#[test]
fn scatter_handle_round_trip() {
    let mut p = frg_params_default();
    p.gamma = 1e-4;
    let mut h: *mut FrgScatter = ptr::null_mut();
    let rc = unsafe { frg_scatter_gaussian(&p, 1e-6, 1e-6, 1.2e-5, 97, &mut h) };
    assert_eq!(rc, FRG_OK, "{}", last_error());
    assert!(!h.is_null());
    let mut total = 0.0;
    for ch in 0..4 {
        let mut v = 0.0;
        assert_eq!(unsafe { frg_scatter_probability(h, ch, &mut v) }, FRG_OK);
        total += v;
    }
    assert!((total - 1.0).abs() < 1e-3, "channel sum {total}");
    let mut ps = 0.0;
    assert_eq!(unsafe { frg_scatter_success(h, &mut ps) }, FRG_OK);
    assert!((ps - 0.75).abs() < 0.02, "p_success {ps}");

    let n = unsafe { frg_scatter_field_len(h) };
    assert_eq!(n, 97 * 97);
    let (mut re, mut im) = (vec![0.0; n], vec![0.0; n]);
    assert_eq!(unsafe { frg_scatter_field(h, 1, re.as_mut_ptr(), im.as_mut_ptr(), n) }, FRG_OK);
    assert!(re.iter().chain(&im).any(|&x| x != 0.0));
    assert_eq!(unsafe { frg_scatter_field(h, 1, re.as_mut_ptr(), im.as_mut_ptr(), n - 1) }, FRG_ERR_BUFFER);
    assert_eq!(unsafe { frg_scatter_field(h, 9, re.as_mut_ptr(), im.as_mut_ptr(), n) }, FRG_ERR_CONFIG);

    let mut s: *mut FrgSchmidt = ptr::null_mut();
    assert_eq!(unsafe { frg_schmidt_from_scatter(h, 0, &mut s) }, FRG_OK, "{}", last_error());
    let k = unsafe { frg_schmidt_number(s) };
    assert!(k >= 1.0 && k.is_finite());
    let mut l = [0.0; 8];
    let mut w = 0usize;
    assert_eq!(unsafe { frg_schmidt_lambdas(s, l.as_mut_ptr(), l.len(), &mut w) }, FRG_OK);
    assert_eq!(w, 8);
    assert!(l.windows(2).all(|x| x[0] >= x[1]));
    unsafe {
        frg_schmidt_free(s);
        frg_scatter_free(h);
    }
}

#[test]
fn errors_map_to_codes() {
    let p = frg_params_default();
    let mut h: *mut FrgScatter = ptr::null_mut();
    assert_eq!(unsafe { frg_scatter_gaussian(ptr::null(), 1e-6, 1e-6, 1e-5, 64, &mut h) }, FRG_ERR_NULL);
    assert!(last_error().contains("params"));
    assert_eq!(unsafe { frg_scatter_gaussian(&p, -1.0, 1e-6, 1e-5, 64, &mut h) }, FRG_ERR_CONFIG);
    // Window far narrower than the pulse.
    assert_eq!(unsafe { frg_scatter_gaussian(&p, 1e-6, 1e-6, 1e-7, 64, &mut h) }, FRG_ERR_DOMAIN);
    assert!(h.is_null());
    unsafe {
        frg_scatter_free(ptr::null_mut());
        frg_schmidt_free(ptr::null_mut());
        frg_decay_free(ptr::null_mut());
    }
    let bad = CString::new("sideways").unwrap();
    let mut d: *mut FrgDecay = ptr::null_mut();
    assert_eq!(unsafe { frg_decay_preset(bad.as_ptr(), 0, f64::NAN, 0.0, &mut d) }, FRG_ERR_CONFIG);
}

#[test]
fn short_decay_through_handle() {
    let name = CString::new("adiabatic").unwrap();
    let mut d: *mut FrgDecay = ptr::null_mut();
    let rc = unsafe { frg_decay_preset(name.as_ptr(), 60, f64::NAN, 5_000.0, &mut d) };
    assert_eq!(rc, FRG_OK, "{}", last_error());
    let n = unsafe { frg_decay_len(d) };
    assert!(n > 2);
    let mut t = vec![0.0; n];
    let mut p2 = vec![0.0; n];
    assert_eq!(unsafe { frg_decay_samples(d, t.as_mut_ptr(), ptr::null_mut(), ptr::null_mut(), p2.as_mut_ptr(), n) }, FRG_OK);
    assert_eq!(t[0], 0.0);
    assert_eq!(p2[0], 1.0);
    assert!(p2[n - 1] < 1.0);
    assert!(unsafe { frg_decay_max_px(d) } > 0.0);
    unsafe { frg_decay_free(d) };
}

#[test]
fn header_is_generated_and_parses() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/frengate.h");
    let text = std::fs::read_to_string(&header).expect("header missing");
    for sym in ["frg_scatter_gaussian", "frg_schmidt_number", "frg_decay_preset", "FRG_ERR_CONVERGENCE", "typedef struct FrgScatter FrgScatter"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let probe = std::env::temp_dir().join("frengate_header_probe.c");
    std::fs::write(&probe, "#include \"frengate.h\"\nint main(void) { FrgParams p = frg_params_default(); return p.omega_2x > 0 ? 0 : 1; }\n").unwrap();
    match Command::new("cc").arg("-fsyntax-only").arg("-I").arg(dir.join("include")).arg(&probe).output() {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("no C compiler available ({e}); syntax check skipped"),
    }
}
