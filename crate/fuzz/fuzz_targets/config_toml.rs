#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = eventimpact::config::Config::parse(data, "fuzz") {
        assert_eq!(eventimpact::config::Config::parse(&cfg.to_toml(), "fuzz").unwrap(), cfg);
    }
});
