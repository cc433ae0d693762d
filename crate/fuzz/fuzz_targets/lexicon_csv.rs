#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(lex) = eventimpact::lexicon::parse_lexicon_csv(data, "fuzz", false) {
        let mut buf = Vec::new();
        eventimpact::lexicon::write_lexicon_csv(&lex, &mut buf).unwrap();
        let again = eventimpact::lexicon::parse_lexicon_csv(std::str::from_utf8(&buf).unwrap(), "fuzz", false).unwrap();
        assert_eq!(again.len(), lex.len());
    }
    let _ = eventimpact::lexicon::parse_candidates_csv(data, "fuzz", true);
});
