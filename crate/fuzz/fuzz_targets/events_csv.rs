#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(evs) = eventimpact::events::parse_events_csv(data, "fuzz") {
        let kept = eventimpact::events::dedupe_same_week(&evs);
        assert!(kept.len() <= evs.len());
    }
});
