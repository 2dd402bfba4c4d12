#![no_main]

use libfuzzer_sys::fuzz_target;
use loopoid_lab::finite::{classify, CayleyTable, ClassifyConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(t) = serde_json::from_slice::<CayleyTable>(data) else { return };
    if t.check().is_err() || t.order > 16 {
        return;
    }
    let cfg = ClassifyConfig {
        samples: 256,
        ..ClassifyConfig::default()
    };
    if let Ok(rep) = classify(&t, &cfg) {
        assert!(rep.implication_chain_holds());
    }
});
