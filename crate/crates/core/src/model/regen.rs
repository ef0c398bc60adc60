use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::book::{DiscreteBook, MesoBook, Volume};
use super::grid::Direction;

/// User-supplied regeneration law, working on real-valued profiles in model
/// volume units. Outputs must be nonnegative.
pub trait RegenerationSampler: Send + Sync + fmt::Debug {
    fn sample(&self, book: &MesoBook, direction: Direction, rng: &mut dyn RngCore) -> MesoBook;
}

/// How the profiles are rebuilt after a price change.
#[derive(Clone, Debug, Default)]
pub enum RegenerationRule {
    /// Relabel both profiles by the jump, emptying the bins with no source.
    #[default]
    Shift,
    /// Keep the profiles unchanged.
    Identity,
    Custom(Arc<dyn RegenerationSampler>),
}

/// Serializable subset of [`RegenerationRule`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegenerationKind {
    #[default]
    Shift,
    Identity,
}

impl From<RegenerationKind> for RegenerationRule {
    fn from(kind: RegenerationKind) -> Self {
        match kind {
            RegenerationKind::Shift => RegenerationRule::Shift,
            RegenerationKind::Identity => RegenerationRule::Identity,
        }
    }
}

/// Conversion from model units back to a stored volume.
pub trait FromReal: Volume {
    fn from_real(x: f64) -> Self;
}

impl FromReal for u64 {
    fn from_real(x: f64) -> Self {
        x.round().max(0.0) as u64
    }
}

impl FromReal for f64 {
    fn from_real(x: f64) -> Self {
        x.max(0.0)
    }
}

/// Applies `rule` to `book` in place after a change in `direction`.
///
/// `bins` is the jump in grid bins. `volume_scale` converts stored volumes
/// to model units and only matters for [`RegenerationRule::Custom`]: the
/// sampler sees `volume * volume_scale` and its output is mapped back.
/// The mid is left for the caller to move.
pub fn regenerate<V: FromReal>(
    book: &mut DiscreteBook<V>,
    direction: Direction,
    rule: &RegenerationRule,
    bins: usize,
    volume_scale: f64,
    rng: &mut dyn RngCore,
) {
    match rule {
        RegenerationRule::Identity => {}
        RegenerationRule::Shift => shift(book, direction, bins),
        RegenerationRule::Custom(sampler) => {
            let real = book.to_real(volume_scale);
            let out = sampler.sample(&real, direction, rng);
            debug_assert_eq!(out.levels(), book.levels());
            for (dst, src) in book.bid.iter_mut().zip(&out.bid) {
                *dst = V::from_real(src / volume_scale);
            }
            for (dst, src) in book.ask.iter_mut().zip(&out.ask) {
                *dst = V::from_real(src / volume_scale);
            }
        }
    }
}

/// Shift regeneration. After an up move bids drift `bins` levels away from
/// the new mid and asks move `bins` levels closer; the best `bins` bid levels
/// and the last `bins` ask levels come out empty. A down move mirrors this.
pub fn shift<V: Volume>(book: &mut DiscreteBook<V>, direction: Direction, bins: usize) {
    match direction {
        Direction::Up => {
            shift_away(&mut book.bid, bins);
            shift_toward(&mut book.ask, bins);
        }
        Direction::Down => {
            shift_toward(&mut book.bid, bins);
            shift_away(&mut book.ask, bins);
        }
    }
}

fn shift_away<V: Volume>(levels: &mut [V], bins: usize) {
    let bins = bins.min(levels.len());
    levels.rotate_right(bins);
    levels[..bins].fill(V::default());
}

fn shift_toward<V: Volume>(levels: &mut [V], bins: usize) {
    let bins = bins.min(levels.len());
    levels.rotate_left(bins);
    let len = levels.len();
    levels[len - bins..].fill(V::default());
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::RngCore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn book(bid: Vec<u64>, ask: Vec<u64>) -> DiscreteBook<u64> {
        DiscreteBook::new(bid, ask, 100.0).unwrap()
    }

    #[test]
    fn shift_up_three_levels() {
        let mut b = book(vec![5, 3, 2], vec![4, 4, 1]);
        shift(&mut b, Direction::Up, 1);
        assert_eq!(b.bid, vec![0, 5, 3]);
        assert_eq!(b.ask, vec![4, 1, 0]);
        assert_eq!(b.mid, 100.0);
    }

    #[test]
    fn shift_up_then_down() {
        let mut b = book(vec![5, 3, 2], vec![4, 4, 1]);
        shift(&mut b, Direction::Up, 1);
        shift(&mut b, Direction::Down, 1);
        assert_eq!(b.bid, vec![5, 3, 0]);
        assert_eq!(b.ask, vec![0, 4, 1]);
    }

    #[test]
    fn identity_keeps_book() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = book(vec![5, 3, 2], vec![4, 4, 1]);
        let before = b.clone();
        regenerate(&mut b, Direction::Down, &RegenerationRule::Identity, 1, 1.0, &mut rng);
        assert_eq!(b, before);
    }

    #[derive(Debug)]
    struct Flatten(f64);

    impl RegenerationSampler for Flatten {
        fn sample(&self, book: &MesoBook, _: Direction, _: &mut dyn RngCore) -> MesoBook {
            let mut out = book.clone();
            out.bid.fill(self.0);
            out.ask.fill(self.0);
            out
        }
    }

    #[test]
    fn custom_sampler_respects_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut b = book(vec![5, 3, 2], vec![4, 4, 1]);
        let rule = RegenerationRule::Custom(Arc::new(Flatten(0.5)));
        // micro volumes at n = 100 are model volumes times 10
        regenerate(&mut b, Direction::Up, &rule, 1, 0.1, &mut rng);
        assert_eq!(b.bid, vec![5, 5, 5]);
        assert_eq!(b.ask, vec![5, 5, 5]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn shift_accounts_for_every_unit(
            bid in proptest::collection::vec(0u64..50, 1..12),
            ask_seed in proptest::collection::vec(0u64..50, 12),
            bins in 1usize..4,
            up in any::<bool>(),
        ) {
            let ask = ask_seed[..bid.len()].to_vec();
            let mut b = book(bid.clone(), ask.clone());
            let dir = if up { Direction::Up } else { Direction::Down };
            shift(&mut b, dir, bins);
            let k = bins.min(bid.len());
            let len = bid.len();
            // volume that falls off the grid
            let (lost_bid, lost_ask): (u64, u64) = match dir {
                Direction::Up => (bid[len - k..].iter().sum(), ask[..k].iter().sum()),
                Direction::Down => (bid[..k].iter().sum(), ask[len - k..].iter().sum()),
            };
            prop_assert_eq!(b.bid.iter().sum::<u64>() + lost_bid, bid.iter().sum::<u64>());
            prop_assert_eq!(b.ask.iter().sum::<u64>() + lost_ask, ask.iter().sum::<u64>());
        }
    }
}
