#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let toks = eventimpact::corpus::tokenize(data);
    assert!(toks.iter().all(|t| !t.is_empty() && t != "#"));
    let n = eventimpact::lexicon::normalize(data);
    assert_eq!(eventimpact::lexicon::normalize(&n), n);
    let stripped = eventimpact::corpus::strip_repost(data);
    assert!(data.contains(stripped));
    let _ = eventimpact::lexicon::parse_term_list(data, eventimpact::lexicon::TermSource::External);
});
