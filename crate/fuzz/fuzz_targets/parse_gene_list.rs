#![no_main]

use std::path::Path;

use efilter::enrich::parse_gene_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(genes) = parse_gene_list(text, Path::new("genes.txt")) {
        assert!(genes.iter().all(|g| !g.is_empty()));
    }
});
