//! Master-seed splitting. Every stochastic component of a run gets its own
//! stream so that, for example, toggling instrumentation or changing the
//! student mode never shifts the environment's random draws.

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in `[0, 1)` from the top 53 bits.
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Env,
    EvalEnv,
    StudentInit,
    StudentRng,
    ImitationInit,
    ImitationTrain,
    ImitationMc,
    Advising,
    TeacherNoise,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Env => 1,
            Stream::EvalEnv => 2,
            Stream::StudentInit => 3,
            Stream::StudentRng => 4,
            Stream::ImitationInit => 5,
            Stream::ImitationTrain => 6,
            Stream::ImitationMc => 7,
            Stream::Advising => 8,
            Stream::TeacherNoise => 9,
        }
    }
}

pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    mix64(mix64(master) ^ stream.tag().wrapping_mul(0xD1B5_4A32_D192_ED03))
}
