//! Deterministic keyword corpus for sanity training runs.
//!
//! Every comment is built from `<aspect term> <polarity word>` segments, so
//! its label set is a pure function of its text. OTHERS comments contain
//! only filler words.

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{Comment, Dataset};
use super::label::{Aspect, LabelSet, Polarity};

pub const ASPECT_TERMS: [(Aspect, &[&str]); 10] = [
    (Aspect::Screen, &["màn hình"]),
    (Aspect::Camera, &["camera", "chụp ảnh"]),
    (Aspect::Features, &["vân tay", "wifi"]),
    (Aspect::Battery, &["pin"]),
    (Aspect::Performance, &["cấu hình", "chip"]),
    (Aspect::Storage, &["bộ nhớ"]),
    (Aspect::Design, &["thiết kế", "vỏ máy"]),
    (Aspect::Price, &["giá"]),
    (Aspect::General, &["điện thoại"]),
    (Aspect::SerAcc, &["nhân viên", "bảo hành"]),
];

pub const POLARITY_WORDS: [(Polarity, &[&str]); 3] = [
    (Polarity::Pos, &["trâu", "tốt", "đẹp", "mượt"]),
    (Polarity::Neu, &["bình thường", "tạm được"]),
    (Polarity::Neg, &["tệ", "kém", "yếu"]),
];

const FILLERS: [&str; 8] = ["mình", "mới", "mua", "thấy", "thì", "cũng", "nói chung", "hôm qua"];
const CONNECTORS: [&str; 3] = [",", "và", "nhưng"];
pub const PRODUCTS: [&str; 3] = ["phone-a", "phone-b", "phone-c"];

/// Generates `n` labeled comments. Identical `(n, seed)` gives an identical dataset.
pub fn keyword_corpus(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = NaiveDate::from_ymd_opt(2021, 1, 1)
        .and_then(|d| d.and_hms_opt(8, 0, 0))
        .expect("valid date");
    let mut comments = Vec::with_capacity(n);
    for i in 0..n {
        let (text, labels) = if rng.gen_bool(0.1) {
            let k = rng.gen_range(2..=4);
            let words: Vec<&str> = (0..k).map(|_| *FILLERS.choose(&mut rng).unwrap()).collect();
            (words.join(" "), LabelSet::new().with_others())
        } else {
            let k = rng.gen_range(1..=3);
            let mut picks: Vec<usize> = (0..ASPECT_TERMS.len()).collect();
            picks.shuffle(&mut rng);
            let mut labels = LabelSet::new();
            let mut parts: Vec<String> = Vec::new();
            if rng.gen_bool(0.3) {
                parts.push(FILLERS.choose(&mut rng).unwrap().to_string());
            }
            for (j, &a) in picks[..k].iter().enumerate() {
                let (aspect, terms) = ASPECT_TERMS[a];
                let (polarity, words) = POLARITY_WORDS[rng.gen_range(0..3)];
                if j > 0 {
                    parts.push(CONNECTORS.choose(&mut rng).unwrap().to_string());
                }
                parts.push(terms.choose(&mut rng).unwrap().to_string());
                parts.push(words.choose(&mut rng).unwrap().to_string());
                labels.set(aspect, polarity).expect("content aspect");
            }
            (parts.join(" "), labels)
        };
        let n_star = star_for(&labels);
        comments.push(Comment {
            index: i as u64 + 1,
            text,
            n_star,
            date_time: Some(base + chrono::Duration::hours(7 * i as i64)),
            product: PRODUCTS[i % PRODUCTS.len()].to_string(),
            labels: Some(labels),
        });
    }
    Dataset::new(format!("synthetic-{seed}"), comments).expect("indices are unique")
}

fn star_for(labels: &LabelSet) -> u8 {
    let mut score = 0i32;
    for a in Aspect::CONTENT {
        score += match labels.polarity(a) {
            Some(Polarity::Pos) => 1,
            Some(Polarity::Neg) => -1,
            _ => 0,
        };
    }
    (3 + score).clamp(1, 5) as u8
}
