//! Deterministic synthetic review generator for smoke tests and demos.
//!
//! Each generated review embeds one marker character per (aspect,
//! polarity) pair and one marker per star rating, surrounded by filler,
//! so a small model can learn the labels from the text alone.

use super::{AspectTaxonomy, Dataset, Polarity, Review, Split};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn aspect_marker(aspect: usize, class: usize) -> char {
    char::from_u32(0x4E00 + (aspect * 3 + class) as u32).unwrap()
}

fn rating_marker(rating: u8) -> char {
    char::from_u32(0x5300 + rating as u32).unwrap()
}

const FILLER: [char; 6] = ['的', '店', '家', '了', '很', '也'];

/// Generate `n` labeled synthetic reviews. Deterministic per seed.
pub fn generate(taxonomy: &AspectTaxonomy, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_aspects = taxonomy.len();
    let reviews = (0..n)
        .map(|idx| {
            let rating = rng.random_range(1..=5u8);
            let k = rng.random_range(1..=n_aspects.min(4));
            let mut aspect_ids: Vec<usize> = (0..n_aspects).collect();
            aspect_ids.shuffle(&mut rng);
            aspect_ids.truncate(k);

            let mut labels = vec![None; n_aspects];
            let mut chars: Vec<char> = Vec::new();
            for &a in &aspect_ids {
                let class = rng.random_range(0..3usize);
                labels[a] = Polarity::from_class_index(class);
                chars.push(aspect_marker(a, class));
            }
            chars.push(rating_marker(rating));
            for _ in 0..rng.random_range(2..=4) {
                chars.push(FILLER[rng.random_range(0..FILLER.len())]);
            }
            chars.shuffle(&mut rng);

            Review {
                id: format!("syn{idx}"),
                text: chars.into_iter().collect(),
                rating,
                labels,
            }
        })
        .collect();
    Dataset {
        reviews,
        split: Split::Unsplit,
        taxonomy: taxonomy.clone(),
    }
}
