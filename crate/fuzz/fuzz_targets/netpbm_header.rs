#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((header, rest)) = ferex::imaging::netpbm::parse_header(data) {
        assert!(rest.len() <= data.len());
        let _ = header.raster_len();
    }
    let _ = ferex::imaging::netpbm::decode(data);
});
