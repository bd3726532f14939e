//! Random training windows drawn from a token corpus.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::GptError;
use crate::geocodec::TokenId;

/// A batch of next-token windows. Row `b` holds `lens[b]` inputs at
/// `inputs[b * block..]`; unused slots are padded with token 0 and have no
/// target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub block: usize,
    pub inputs: Vec<TokenId>,
    pub targets: Vec<Option<TokenId>>,
    pub lens: Vec<usize>,
    /// `(track index, start offset)` of each row.
    pub source: Vec<(usize, usize)>,
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.lens.len()
    }

    pub fn input_row(&self, b: usize) -> &[TokenId] {
        &self.inputs[b * self.block..b * self.block + self.lens[b]]
    }

    pub fn target_row(&self, b: usize) -> &[Option<TokenId>] {
        &self.targets[b * self.block..b * self.block + self.lens[b]]
    }

    /// Positions that contribute to the loss.
    pub fn target_count(&self) -> usize {
        self.targets.iter().filter(|t| t.is_some()).count()
    }
}

/// Number of start offsets a track of `n` tokens offers.
pub fn eligible_offsets(n: usize, block: usize) -> usize {
    if n < 2 {
        0
    } else {
        n.saturating_sub(block).max(1)
    }
}

/// Window sampler over a fixed corpus; every `(track, offset)` pair is equally
/// likely.
#[derive(Debug, Clone)]
pub struct Loader<'a> {
    tracks: &'a [Vec<TokenId>],
    block: usize,
    cumulative: Vec<usize>,
}

impl<'a> Loader<'a> {
    pub fn new(tracks: &'a [Vec<TokenId>], block: usize) -> Result<Self, GptError> {
        if block < 1 {
            return Err(GptError::Config("block must be positive".into()));
        }
        let mut cumulative = Vec::with_capacity(tracks.len());
        let mut total = 0usize;
        for t in tracks {
            total += eligible_offsets(t.len(), block);
            cumulative.push(total);
        }
        if total == 0 {
            return Err(GptError::Data("no track has two or more tokens".into()));
        }
        Ok(Loader { tracks, block, cumulative })
    }

    pub fn windows(&self) -> usize {
        *self.cumulative.last().unwrap_or(&0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Batch {
        let block = self.block;
        let mut inputs = alloc::vec![TokenId(0); batch_size * block];
        let mut targets = alloc::vec![None; batch_size * block];
        let mut lens = Vec::with_capacity(batch_size);
        let mut source = Vec::with_capacity(batch_size);
        for b in 0..batch_size {
            let k = rng.random_range(0..self.windows());
            let ti = self.cumulative.partition_point(|&c| c <= k);
            let off = k - if ti == 0 { 0 } else { self.cumulative[ti - 1] };
            let toks = &self.tracks[ti];
            let len = (toks.len() - off - 1).min(block);
            for i in 0..len {
                inputs[b * block + i] = toks[off + i];
                targets[b * block + i] = Some(toks[off + i + 1]);
            }
            lens.push(len);
            source.push((ti, off));
        }
        Batch { block, inputs, targets, lens, source }
    }
}

/// One-shot convenience over [`Loader`].
pub fn sample_batch<R: Rng + ?Sized>(
    tracks: &[Vec<TokenId>],
    batch_size: usize,
    block: usize,
    rng: &mut R,
) -> Result<Batch, GptError> {
    Ok(Loader::new(tracks, block)?.sample(batch_size, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toks(v: &[u16]) -> Vec<TokenId> {
        v.iter().map(|&t| TokenId(t)).collect()
    }

    #[test]
    fn windows_are_shifted_pairs() {
        let corpus = alloc::vec![toks(&[1, 2, 3, 4, 5, 6, 7]), toks(&[9]), toks(&[20, 21])];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = sample_batch(&corpus, 64, 4, &mut rng).unwrap();
        for r in 0..b.rows() {
            let (ti, off) = b.source[r];
            assert_ne!(ti, 1);
            let t = &corpus[ti];
            let inp = b.input_row(r);
            let tg = b.target_row(r);
            assert_eq!(inp, &t[off..off + inp.len()]);
            for (i, x) in tg.iter().enumerate() {
                assert_eq!(*x, Some(t[off + i + 1]));
            }
            assert!(b.targets[r * 4 + b.lens[r]..(r + 1) * 4].iter().all(|x| x.is_none()));
        }
    }

    #[test]
    fn eligibility() {
        assert_eq!(eligible_offsets(0, 4), 0);
        assert_eq!(eligible_offsets(1, 4), 0);
        assert_eq!(eligible_offsets(2, 4), 1);
        assert_eq!(eligible_offsets(5, 4), 1);
        assert_eq!(eligible_offsets(7, 4), 3);
        assert!(Loader::new(&[toks(&[1])], 4).is_err());
    }
}
