//! Exercises the C ABI end to end from Rust: handle lifecycle, status
//! codes, buffer contracts, and agreement with the underlying library.

use funlogit_ffi::*;

fn fixture(n: usize, g: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<u8>) {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let grid: Vec<f64> = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
    let mut values = Vec::with_capacity(n * g);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let xi: Vec<f64> = (0..6)
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / (j + 1) as f64
            })
            .collect();
        for &t in &grid {
            let v = xi[0]
                + (1..6)
                    .map(|j| xi[j] * 2f64.sqrt() * (j as f64 * std::f64::consts::PI * t).cos())
                    .sum::<f64>();
            values.push(v);
        }
        let eta = 0.3 * xi[0] - 1.2 * xi[1];
        ys.push(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-eta).exp())));
    }
    (grid, values, ys)
}

fn make_dataset(grid: &[f64], values: &[f64], ys: &[u8]) -> *mut FlDataset {
    let mut handle: *mut FlDataset = std::ptr::null_mut();
    let status = unsafe {
        fl_dataset_new(
            grid.as_ptr(),
            grid.len(),
            values.as_ptr(),
            ys.len(),
            ys.as_ptr(),
            &mut handle,
        )
    };
    assert_eq!(status, FlStatus::Ok);
    assert!(!handle.is_null());
    handle
}

#[test]
fn full_pipeline_through_the_c_abi() {
    let (grid, values, ys) = fixture(80, 25, 5);
    let dataset = make_dataset(&grid, &values, &ys);
    assert_eq!(unsafe { fl_dataset_len(dataset) }, 80);

    let mut options = std::mem::MaybeUninit::<FlOptions>::uninit();
    assert_eq!(unsafe { fl_default_options(options.as_mut_ptr()) }, FlStatus::Ok);
    let mut options = unsafe { options.assume_init() };
    options.basis = FlBasis::Fourier;
    options.k_fixed = 4;
    options.weights = FlWeights::Unit;

    let mut fit: *mut FlFit = std::ptr::null_mut();
    assert_eq!(unsafe { fl_fit(dataset, &options, &mut fit) }, FlStatus::Ok);
    assert_eq!(unsafe { fl_fit_k(fit) }, 4);
    assert_eq!(unsafe { fl_fit_converged(fit) }, 1);
    let alpha = unsafe { fl_fit_alpha(fit) };
    assert!(alpha.is_finite());
    assert!(unsafe { fl_fit_objective(fit) } > 0.0);
    assert!(unsafe { fl_fit_rbic(fit) } > 0.0);

    let mut coeffs = vec![0.0f64; 4];
    assert_eq!(unsafe { fl_fit_coeffs(fit, coeffs.as_mut_ptr(), 4) }, FlStatus::Ok);
    let mut slope = vec![0.0f64; grid.len()];
    assert_eq!(unsafe { fl_fit_slope(fit, slope.as_mut_ptr(), slope.len()) }, FlStatus::Ok);
    let mut weights = vec![0.0f64; 80];
    assert_eq!(unsafe { fl_fit_weights(fit, weights.as_mut_ptr(), 80) }, FlStatus::Ok);
    assert!(weights.iter().all(|&w| w == 1.0));

    // agreement with the library called directly
    let gridv = funlogit::Grid::new(grid.clone()).unwrap();
    let basis = funlogit::funcbasis::fourier_design(&gridv, 4).unwrap();
    let curves = funlogit::CurveSet::new(
        gridv,
        nalgebra::DMatrix::from_row_slice(80, grid.len(), &values),
    )
    .unwrap();
    let sample = funlogit::LabeledSample::new(curves, ys.clone()).unwrap();
    let config = funlogit::FitConfig::new(
        funlogit::LossSpec::ch_default(),
        funlogit::WeightSpec::Unit,
        funlogit::BasisFamily::Fourier,
    );
    let direct = funlogit::fit::fit_fixed_k(&sample, &basis, &config).unwrap();
    assert_eq!(direct.alpha, alpha);
    assert_eq!(direct.coeffs, coeffs);

    // predictions through the ABI match as well
    let mut probs = vec![0.0f64; 80];
    assert_eq!(
        unsafe { fl_fit_predict(fit, dataset, probs.as_mut_ptr(), 80) },
        FlStatus::Ok
    );
    let direct_probs =
        funlogit::diagnostics::predict_probs(&direct, &basis, &sample.curves).unwrap();
    assert_eq!(probs, direct_probs);

    // diagnostics
    let mut report: *mut FlReport = std::ptr::null_mut();
    assert_eq!(
        unsafe { fl_diagnose(fit, dataset, 0.005, 0.995, &mut report) },
        FlStatus::Ok
    );
    assert_eq!(unsafe { fl_report_len(report) }, 80);
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    assert_eq!(unsafe { fl_report_cutoffs(report, &mut lo, &mut hi) }, FlStatus::Ok);
    assert!(lo < hi);
    let mut residuals = vec![0.0f64; 80];
    assert_eq!(
        unsafe { fl_report_residuals(report, residuals.as_mut_ptr(), 80) },
        FlStatus::Ok
    );
    let mut flags = vec![0u8; 80];
    assert_eq!(unsafe { fl_report_flags(report, flags.as_mut_ptr(), 80) }, FlStatus::Ok);
    for (i, &d) in residuals.iter().enumerate() {
        assert_eq!(flags[i] == 1, d < lo || d > hi, "flag rule at {i}");
    }

    unsafe {
        fl_report_free(report);
        fl_fit_free(fit);
        fl_dataset_free(dataset);
    }
}

#[test]
fn error_paths_and_messages() {
    // null pointers are invalid arguments
    let status = unsafe {
        fl_dataset_new(
            std::ptr::null(),
            0,
            std::ptr::null(),
            0,
            std::ptr::null(),
            std::ptr::null_mut(),
        )
    };
    assert_eq!(status, FlStatus::InvalidArgument);
    let needed = unsafe { fl_last_error_message(std::ptr::null_mut(), 0) };
    assert!(needed > 0);
    let mut buf = vec![0i8; needed + 1];
    unsafe { fl_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let msg = unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned();
    assert!(msg.contains("null pointer"), "message: {msg}");

    // a decreasing grid is invalid input
    let grid = [0.5, 0.2];
    let values = [0.0; 4];
    let ys = [0u8, 1];
    let mut handle: *mut FlDataset = std::ptr::null_mut();
    let status = unsafe {
        fl_dataset_new(grid.as_ptr(), 2, values.as_ptr(), 2, ys.as_ptr(), &mut handle)
    };
    assert_eq!(status, FlStatus::InvalidInput);

    // single-class responses surface as separation
    let (grid, values, _) = fixture(30, 15, 9);
    let ones = vec![1u8; 30];
    let dataset = make_dataset(&grid, &values, &ones);
    let mut options = std::mem::MaybeUninit::<FlOptions>::uninit();
    unsafe { fl_default_options(options.as_mut_ptr()) };
    let mut options = unsafe { options.assume_init() };
    options.weights = FlWeights::Unit;
    options.k_fixed = 4;
    let mut fit: *mut FlFit = std::ptr::null_mut();
    assert_eq!(unsafe { fl_fit(dataset, &options, &mut fit) }, FlStatus::Separation);
    assert!(fit.is_null());

    // undersized buffers are reported as such
    let (grid, values, ys) = fixture(40, 12, 11);
    let dataset2 = make_dataset(&grid, &values, &ys);
    let mut fit: *mut FlFit = std::ptr::null_mut();
    options.basis = FlBasis::Fourier;
    assert_eq!(unsafe { fl_fit(dataset2, &options, &mut fit) }, FlStatus::Ok);
    let mut small = [0.0f64; 1];
    assert_eq!(
        unsafe { fl_fit_coeffs(fit, small.as_mut_ptr(), 1) },
        FlStatus::BufferTooSmall
    );
    unsafe {
        fl_fit_free(fit);
        fl_dataset_free(dataset);
        fl_dataset_free(dataset2);
        fl_dataset_free(std::ptr::null_mut()); // null free is a no-op
    }
}

#[test]
fn header_is_generated_with_the_api() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("include")
        .join("funlogit.h");
    let text = std::fs::read_to_string(&header).expect("generated header");
    for symbol in [
        "typedef struct FlDataset FlDataset;",
        "typedef struct FlFit FlFit;",
        "typedef struct FlReport FlReport;",
        "fl_dataset_new",
        "fl_fit_predict",
        "fl_diagnose",
        "FlStatus",
        "FUNLOGIT_H",
    ] {
        assert!(text.contains(symbol), "header missing {symbol}");
    }
}
