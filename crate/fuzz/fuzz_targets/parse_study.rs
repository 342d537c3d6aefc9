#![no_main]

use std::path::Path;

use efilter::io::{parse_study, Format};
use libfuzzer_sys::fuzz_target;

// first byte picks the delimiter
fuzz_target!(|data: &[u8]| {
    let Some((&sel, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let format = if sel & 1 == 0 { Format::Tsv } else { Format::Csv };
    if let Ok(table) = parse_study(text, Path::new("fuzz.tsv"), format) {
        assert_eq!(table.ids.len(), table.pvalues.len());
        assert!(table.pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
    }
});
