//! Seed expansion: one root seed, one independent ChaCha stream per component.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used only to turn component names into stream ids.
fn stream_id(component: &str) -> u64 {
    component
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Generator for `component` under `root`. Each component reads its own
/// ChaCha stream, so adding a component never shifts another one's draws.
pub fn component_rng(root: u64, component: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream_id(component));
    rng
}

/// A derived 64-bit seed, for APIs that take a plain seed.
pub fn component_seed(root: u64, component: &str) -> u64 {
    use rand::Rng;
    component_rng(root, component).random()
}
