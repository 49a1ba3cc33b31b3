#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = ferex::imaging::decode_bytes(data, "fuzz") {
        assert_eq!(img.pixels.len(), img.width * img.height);
        // Whatever decodes must also survive preprocessing.
        let cfg = ferex::imaging::PreprocessConfig { crop_fraction: 0.85, input_size: 16 };
        let t = ferex::imaging::preprocess_image(&img, &cfg).unwrap();
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
});
