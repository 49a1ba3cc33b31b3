#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(records) = ferex::training::parse_history_csv(text) {
            let history =
                ferex::training::TrainingHistory { records: records.clone(), final_params_digest: String::new() };
            assert_eq!(ferex::training::parse_history_csv(&history.to_csv()).unwrap(), records);
            if !records.is_empty() {
                ferex::report::curve_svg(&records).unwrap();
            }
        }
    }
});
