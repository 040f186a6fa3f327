use super::Sentence;

pub const DEFAULT_MAX_LEN: usize = 80;
pub const DEFAULT_MONO_MIN_EXCLUSIVE: usize = 9;

/// Keeps pairs whose sides both have between 1 and `max_len` tokens (inclusive).
pub fn filter_parallel(pairs: Vec<(Sentence, Sentence)>, max_len: usize) -> Vec<(Sentence, Sentence)> {
    let ok = |s: &Sentence| (1..=max_len).contains(&s.len());
    pairs.into_iter().filter(|(a, b)| ok(a) && ok(b)).collect()
}

/// Keeps sentences strictly longer than `min_exclusive` tokens.
pub fn filter_mono(lines: Vec<Sentence>, min_exclusive: usize) -> Vec<Sentence> {
    lines.into_iter().filter(|s| s.len() > min_exclusive).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Lang;

    fn of_len(n: usize) -> Sentence {
        Sentence::new((0..n).map(|i| format!("w{i}")).collect(), Lang::from("x"))
    }

    #[test]
    fn parallel_boundaries() {
        let pairs = vec![
            (of_len(80), of_len(3)),
            (of_len(3), of_len(81)),
            (of_len(0), of_len(3)),
            (of_len(1), of_len(1)),
        ];
        let kept = filter_parallel(pairs, DEFAULT_MAX_LEN);
        let lens: Vec<_> = kept.iter().map(|(a, b)| (a.len(), b.len())).collect();
        assert_eq!(lens, [(80, 3), (1, 1)]);
    }

    #[test]
    fn mono_boundaries() {
        let kept = filter_mono(vec![of_len(9), of_len(10), of_len(0)], DEFAULT_MONO_MIN_EXCLUSIVE);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].len(), 10);
        assert!(filter_mono(vec![], 9).is_empty());
    }
}
