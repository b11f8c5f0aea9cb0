#![no_main]

use libfuzzer_sys::fuzz_target;
use mploc::field::FieldSample;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(field) = FieldSample::from_json(text) {
            let again = FieldSample::from_json(&field.to_json().unwrap()).unwrap();
            assert_eq!(again.to_json().unwrap(), field.to_json().unwrap());
        }
    }
});
