#![no_main]

use std::path::Path;

use efilter::io::{parse_report, write_report};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(report) = parse_report(text, Path::new("report.csv")) else { return };
    // anything accepted must survive a write/read round trip
    let mut buf = Vec::new();
    write_report(&mut buf, &report).expect("report writes");
    let again = parse_report(std::str::from_utf8(&buf).unwrap(), Path::new("report.csv"))
        .expect("written report parses");
    assert_eq!(again.records.len(), report.records.len());
});
