#![no_main]

use libfuzzer_sys::fuzz_target;
use loopoid_lab::cli_io::parse_spec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = parse_spec(text) {
        let canon = spec.to_canonical_json();
        let again = parse_spec(&canon).expect("canonical form parses");
        assert_eq!(again, spec);
    }
});
