#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = eventimpact::impact::parse_report_csv(data, "fuzz");
});
