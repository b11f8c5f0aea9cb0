#![no_main]

use libfuzzer_sys::fuzz_target;
use mploc::io::EmpiricalCurve;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(curve) = EmpiricalCurve::from_csv(text) {
            let csv = curve.to_csv();
            assert_eq!(EmpiricalCurve::from_csv(&csv).unwrap().to_csv(), csv);
        }
    }
});
