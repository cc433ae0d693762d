#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(ann) = eventimpact::taxonomy::parse_annotations_csv(data, "fuzz") {
        let _ = eventimpact::taxonomy::resolve_all(&ann, 3, 5);
    }
});
