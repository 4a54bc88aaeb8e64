use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Zipf};

/// Fraction of operations sent to the hot set under [`KeyDist::Hotspot`].
pub const HOTSPOT_OPS_PCT: u32 = 80;
/// Fraction of keys forming the hot set under [`KeyDist::Hotspot`].
pub const HOTSPOT_KEYS_PCT: u32 = 20;
pub const ZIPF_EXPONENT: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KeyDist {
    Uniform,
    Zipfian,
    Hotspot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Profile {
    /// Uses `read_pct` as given.
    General,
    ReadHeavy,
    Medium,
    WriteHeavy,
    /// Every transaction is a sequence of read-then-write pairs on one key.
    Rmw,
}

impl Profile {
    /// Read percentage imposed by the profile, if any.
    pub fn read_pct(self) -> Option<u32> {
        match self {
            Profile::General | Profile::Rmw => None,
            Profile::ReadHeavy => Some(95),
            Profile::Medium => Some(50),
            Profile::WriteHeavy => Some(30),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadParams {
    pub sessions: usize,
    pub txns_per_session: usize,
    pub ops_per_txn: usize,
    pub read_pct: u32,
    pub keys: usize,
    pub dist: KeyDist,
    pub seed: u64,
    pub profile: Profile,
    /// Percentage of transactions that use `long_ops_per_txn` operations.
    pub long_txn_pct: u32,
    pub long_ops_per_txn: usize,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        Self {
            sessions: 20,
            txns_per_session: 100,
            ops_per_txn: 15,
            read_pct: 50,
            keys: 10_000,
            dist: KeyDist::Zipfian,
            seed: 0,
            profile: Profile::General,
            long_txn_pct: 10,
            long_ops_per_txn: 150,
        }
    }
}

impl WorkloadParams {
    pub fn effective_read_pct(&self) -> u32 {
        self.profile.read_pct().unwrap_or(self.read_pct)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.sessions == 0 {
            return Err("at least one session is required".into());
        }
        if self.keys == 0 {
            return Err("at least one key is required".into());
        }
        if self.ops_per_txn == 0 || self.long_ops_per_txn == 0 {
            return Err("transactions need at least one operation".into());
        }
        if self.read_pct > 100 || self.long_txn_pct > 100 {
            return Err("percentages must be within 0..=100".into());
        }
        if self.sessions as u64 > u32::MAX as u64 {
            return Err("too many sessions".into());
        }
        Ok(())
    }
}

/// Draws key indices in `0..keys`.
pub(crate) enum KeySampler {
    Uniform(usize),
    Zipf(Zipf<f64>),
    Hotspot { keys: usize, hot: usize },
}

impl KeySampler {
    pub(crate) fn new(dist: KeyDist, keys: usize) -> Self {
        match dist {
            KeyDist::Uniform => KeySampler::Uniform(keys),
            KeyDist::Zipfian => KeySampler::Zipf(
                Zipf::new(keys as f64, ZIPF_EXPONENT).expect("zipf parameters are valid"),
            ),
            KeyDist::Hotspot => KeySampler::Hotspot {
                keys,
                hot: (keys * HOTSPOT_KEYS_PCT as usize / 100).max(1),
            },
        }
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match *self {
            KeySampler::Uniform(n) => rng.random_range(0..n),
            KeySampler::Zipf(ref z) => z.sample(rng) as usize - 1,
            KeySampler::Hotspot { keys, hot } => {
                if hot == keys || rng.random_range(0..100) < HOTSPOT_OPS_PCT {
                    rng.random_range(0..hot)
                } else {
                    rng.random_range(hot..keys)
                }
            }
        }
    }
}

macro_rules! named_enum {
    ($ty:ty { $($variant:path => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub const NAMES: &'static [&'static str] = &[$($name),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($variant => $name),+
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    _ => Err(format!("unknown value {s:?}, expected one of {:?}", Self::NAMES)),
                }
            }
        }
    };
}

named_enum!(KeyDist {
    KeyDist::Uniform => "uniform",
    KeyDist::Zipfian => "zipfian",
    KeyDist::Hotspot => "hotspot",
});

named_enum!(Profile {
    Profile::General => "general",
    Profile::ReadHeavy => "read-heavy",
    Profile::Medium => "medium",
    Profile::WriteHeavy => "write-heavy",
    Profile::Rmw => "rmw",
});

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn names_round_trip() {
        for name in KeyDist::NAMES {
            assert_eq!(name.parse::<KeyDist>().unwrap().name(), *name);
        }
        for name in Profile::NAMES {
            assert_eq!(name.parse::<Profile>().unwrap().name(), *name);
        }
        assert!("zipf".parse::<KeyDist>().is_err());
    }

    #[test]
    fn samplers_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dist in [KeyDist::Uniform, KeyDist::Zipfian, KeyDist::Hotspot] {
            for keys in [1, 2, 7, 1000] {
                let s = KeySampler::new(dist, keys);
                for _ in 0..2000 {
                    assert!(s.sample(&mut rng) < keys);
                }
            }
        }
    }

    #[test]
    fn hotspot_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = KeySampler::new(KeyDist::Hotspot, 1000);
        let n = 100_000;
        let hot = (0..n).filter(|_| s.sample(&mut rng) < 200).count();
        let frac = hot as f64 / n as f64;
        assert!((frac - 0.8).abs() < 0.01, "{frac}");
    }

    #[test]
    fn zipf_rank_frequencies() {
        // P(rank r) = (1/r) / H_n for exponent 1.
        let keys = 100;
        let h: f64 = (1..=keys).map(|r| 1.0 / r as f64).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = KeySampler::new(KeyDist::Zipfian, keys);
        let n = 200_000;
        let mut counts = vec![0usize; keys];
        for _ in 0..n {
            counts[s.sample(&mut rng)] += 1;
        }
        for r in [1usize, 2, 10] {
            let want = 1.0 / (r as f64 * h);
            let got = counts[r - 1] as f64 / n as f64;
            assert!((got - want).abs() < 0.01, "rank {r}: {got} vs {want}");
        }
    }

    #[test]
    fn profiles_fix_read_share() {
        let p = WorkloadParams {
            profile: Profile::ReadHeavy,
            read_pct: 10,
            ..WorkloadParams::default()
        };
        assert_eq!(p.effective_read_pct(), 95);
        let p = WorkloadParams {
            read_pct: 10,
            ..WorkloadParams::default()
        };
        assert_eq!(p.effective_read_pct(), 10);
    }
}
