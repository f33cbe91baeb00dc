use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams drawn from one run seed. Each consumer gets
/// its own stream so adding draws in one place never perturbs another.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Stream {
    PrimaryPpp = 1,
    SecondaryPpp = 2,
    PrimaryPairs = 3,
    SecondaryPairs = 4,
    Relays = 5,
    Segments = 6,
    Probes = 7,
    Phases = 8,
}

pub(crate) fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
