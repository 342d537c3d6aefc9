#![no_main]

use efilter::simulate::SimulationPlan;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(plan) = SimulationPlan::from_toml(text) {
        // accepted plans expand and re-serialize to an equivalent plan
        let settings = plan.settings().expect("validated plan expands");
        let again = SimulationPlan::from_toml(&plan.to_toml()).expect("serialized plan parses");
        assert_eq!(again.settings().unwrap(), settings);
    }
});
