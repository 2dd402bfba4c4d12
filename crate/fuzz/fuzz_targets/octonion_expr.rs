#![no_main]

use libfuzzer_sys::fuzz_target;
use loopoid_lab::octonion::Octonion;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(x) = text.parse::<Octonion>() {
        if x.0.iter().all(|c| c.is_finite()) {
            let back: Octonion = x.to_string().parse().expect("display output parses");
            assert_eq!(back, x);
        }
    }
});
