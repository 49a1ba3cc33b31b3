#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((params, config)) = ferex::training::decode_checkpoint(data) {
        // Anything accepted must re-encode to the same bytes.
        let again = ferex::training::encode_checkpoint(&params, &config).unwrap();
        assert_eq!(again, data);
    }
});
