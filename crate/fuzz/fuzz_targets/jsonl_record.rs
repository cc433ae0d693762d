#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(r) = eventimpact::corpus::parse_record(data) {
        let again = eventimpact::corpus::parse_record(&eventimpact::corpus::record_to_json(&r)).unwrap();
        assert_eq!(again, r);
    }
    let _ = eventimpact::corpus::read_jsonl(data.as_bytes(), "fuzz");
});
