#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(s) = eventimpact::series::parse_series_csv(data, "fuzz") {
        let mut buf = Vec::new();
        eventimpact::series::write_series_csv(&s, &mut buf).unwrap();
        let again = eventimpact::series::parse_series_csv(std::str::from_utf8(&buf).unwrap(), "fuzz").unwrap();
        assert_eq!(again.values(), s.values());
    }
});
