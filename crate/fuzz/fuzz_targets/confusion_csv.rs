#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(matrix) = ferex::metrics::ConfusionMatrix::from_csv(text) {
            assert_eq!(ferex::metrics::ConfusionMatrix::from_csv(&matrix.to_csv()).unwrap(), matrix);
            let _ = ferex::report::heatmap_svg(&matrix);
        }
    }
});
