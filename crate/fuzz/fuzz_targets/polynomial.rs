#![no_main]

use libfuzzer_sys::fuzz_target;
use loopoid_lab::poly::Polynomial;

fuzz_target!(|data: &[u8]| {
    let Ok(p) = serde_json::from_slice::<Polynomial>(data) else { return };
    let Some(n) = p.terms.first().map(|t| t.exps.len()) else { return };
    if n > 16 || p.check_arity(n).is_err() {
        return;
    }
    let x = vec![0.5; n];
    let _ = p.eval(&x);
    let _ = p.gradient(&x);
});
