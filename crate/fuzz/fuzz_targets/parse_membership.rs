#![no_main]

use std::path::Path;

use efilter::enrich::parse_membership;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_membership(text, Path::new("membership.tsv"));
});
