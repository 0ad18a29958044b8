//! Suffix array construction by prefix doubling with radix passes.
//!
//! Runs in O(n log n): log n rounds, each a pair of counting sorts. Returns
//! a true suffix array (suffixes compared to their ends, shorter-prefix
//! suffixes ordering first), which keeps LF-mapping consistent even when the
//! text contains repeated sentinel bytes.

/// Stable counting sort of `sa` by `keys[sa[i]]`, keys in `0..=max_key`.
fn counting_sort(sa: &mut Vec<u32>, tmp: &mut Vec<u32>, keys: &[u32], max_key: u32, count: &mut Vec<u32>) {
    count.clear();
    count.resize(max_key as usize + 2, 0);
    for &i in sa.iter() {
        count[keys[i as usize] as usize + 1] += 1;
    }
    for k in 1..count.len() {
        count[k] += count[k - 1];
    }
    for &i in sa.iter() {
        let k = keys[i as usize] as usize;
        tmp[count[k] as usize] = i;
        count[k] += 1;
    }
    std::mem::swap(sa, tmp);
}

pub fn suffix_array(text: &[u8]) -> Vec<u32> {
    let n = text.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sa: Vec<u32> = (0..n as u32).collect();
    let mut rank: Vec<u32> = text.iter().map(|&b| u32::from(b)).collect();
    let mut tmp = vec![0u32; n];
    let mut count: Vec<u32> = Vec::new();
    let mut key2 = vec![0u32; n];

    counting_sort(&mut sa, &mut tmp, &rank, 255, &mut count);

    // Compress byte values into dense rank classes.
    let mut classes = {
        let mut next = vec![0u32; n];
        let mut r = 0u32;
        next[sa[0] as usize] = 0;
        for w in 1..n {
            if rank[sa[w] as usize] != rank[sa[w - 1] as usize] {
                r += 1;
            }
            next[sa[w] as usize] = r;
        }
        std::mem::swap(&mut rank, &mut next);
        r + 1
    };

    let mut k = 1usize;
    while (classes as usize) < n && k < n {
        // Secondary key: rank of the suffix k positions ahead; suffixes that
        // run out sort first (true suffix order, not cyclic).
        for i in 0..n {
            key2[i] = if i + k < n { rank[i + k] + 1 } else { 0 };
        }
        counting_sort(&mut sa, &mut tmp, &key2, classes, &mut count);
        counting_sort(&mut sa, &mut tmp, &rank, classes - 1, &mut count);

        let mut next = vec![0u32; n];
        let mut r = 0u32;
        next[sa[0] as usize] = 0;
        for w in 1..n {
            let (a, b) = (sa[w] as usize, sa[w - 1] as usize);
            if rank[a] != rank[b] || key2[a] != key2[b] {
                r += 1;
            }
            next[a] = r;
        }
        rank = next;
        classes = r + 1;
        k <<= 1;
    }
    sa
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_suffix_array(text: &[u8]) -> Vec<u32> {
        let mut sa: Vec<u32> = (0..text.len() as u32).collect();
        sa.sort_by(|&a, &b| text[a as usize..].cmp(&text[b as usize..]));
        sa
    }

    #[test]
    fn matches_naive_on_banana() {
        let t = b"banana\x00";
        assert_eq!(suffix_array(t), naive_suffix_array(t));
    }

    #[test]
    fn matches_naive_with_repeated_sentinels() {
        // Periodic text with interior sentinels, the case where cyclic
        // rotation sorting would diverge from true suffix order.
        let t = b"ab\x00ab\x00";
        assert_eq!(suffix_array(t), naive_suffix_array(t));
    }

    #[test]
    fn matches_naive_on_random_inputs() {
        let mut state = 0x243f6a88u64;
        for len in [1usize, 2, 3, 7, 50, 257, 1000] {
            let mut t = Vec::with_capacity(len);
            for _ in 0..len {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                // Small alphabet plus sentinels to force heavy repetition.
                t.push(match (state >> 33) % 5 {
                    0 => 0u8,
                    1 => b'a',
                    2 => b'b',
                    3 => b'a',
                    _ => b'c',
                });
            }
            assert_eq!(suffix_array(&t), naive_suffix_array(&t), "len {len}");
        }
    }

    #[test]
    fn empty_text() {
        assert!(suffix_array(b"").is_empty());
    }
}
