//! The key = value config parser must never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use ordaipw::config::parse_config_str;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(map) = parse_config_str(text) {
        // Accepted maps re-render and re-parse to the same map.
        let rendered: String = map
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let again = parse_config_str(&rendered).expect("rendered config must parse");
        assert_eq!(map, again);
    }
});
