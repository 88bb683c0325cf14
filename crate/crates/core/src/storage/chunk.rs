use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Window parameters in approximate tokens (one token per four characters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            chunk_size: 512,
            overlap: 64,
        }
    }
}

impl ChunkParams {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::Storage("chunk_size must be positive".into()));
        }
        if self.overlap >= self.chunk_size {
            return Err(Error::Storage(format!(
                "overlap ({}) must be smaller than chunk_size ({})",
                self.overlap, self.chunk_size
            )));
        }
        Ok(())
    }
}

pub const CHARS_PER_TOKEN: usize = 4;

/// `ceil(chars / 4)`.
pub fn token_estimate(text: &str) -> usize {
    text.chars().count().div_ceil(CHARS_PER_TOKEN)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_id: usize,
    /// Offset of the first character, in characters.
    pub char_start: usize,
    pub text: String,
    pub token_estimate: usize,
}

impl Chunk {
    /// Start of the chunk in token units.
    pub fn token_offset(&self) -> usize {
        self.char_start.div_ceil(CHARS_PER_TOKEN)
    }
}

/// Moves `pos` back to the start of the word it falls in, but never to or
/// before `floor`. A boundary right after whitespace is left alone.
fn snap_back(chars: &[char], pos: usize, floor: usize) -> usize {
    if pos >= chars.len() || pos == 0 {
        return pos;
    }
    let mut p = pos;
    while p > floor && !chars[p - 1].is_whitespace() {
        p -= 1;
    }
    if p <= floor {
        pos
    } else {
        p
    }
}

/// Splits a document into overlapping windows.
///
/// Window `i` nominally covers tokens `[i*(size-overlap), i*(size-overlap)+size)`.
/// Both boundaries are snapped backward to a word start when that keeps the
/// window non-empty; a word longer than the window is cut.
pub fn chunk_document(doc_id: &str, text: &str, params: ChunkParams) -> Result<Vec<Chunk>> {
    params.validate()?;
    let chars: Vec<char> = text.chars().collect();
    let size = params.chunk_size * CHARS_PER_TOKEN;
    let stride = (params.chunk_size - params.overlap) * CHARS_PER_TOKEN;
    let mut chunks = Vec::new();
    let mut prev_start: Option<usize> = None;
    let mut prev_end = 0usize;
    let mut i = 0usize;
    while prev_end < chars.len() {
        let nominal = i * stride;
        let start = match prev_start {
            None => 0,
            // never leave a gap after the previous window
            Some(ps) => snap_back(&chars, nominal.min(chars.len()), ps).min(prev_end),
        };
        let end = if start + size >= chars.len() {
            chars.len()
        } else {
            snap_back(&chars, start + size, start)
        };
        chunks.push(Chunk {
            doc_id: doc_id.to_string(),
            chunk_id: chunks.len(),
            char_start: start,
            text: chars[start..end].iter().collect(),
            token_estimate: (end - start).div_ceil(CHARS_PER_TOKEN),
        });
        prev_start = Some(start);
        prev_end = end;
        i += 1;
    }
    Ok(chunks)
}

/// Rebuilds the document from its chunks, dropping the overlapping prefix of
/// each chunk after the first.
pub fn reconstruct(chunks: &[Chunk]) -> String {
    let mut out = String::new();
    let mut covered = 0usize;
    for c in chunks {
        let len = c.text.chars().count();
        let skip = covered.saturating_sub(c.char_start);
        out.extend(c.text.chars().skip(skip));
        covered = covered.max(c.char_start + len);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn thousand_token_doc() -> String {
        // 1000 words of 3 letters plus a space: 4000 chars, word starts on
        // every multiple of 4.
        (0..1000)
            .map(|i| format!("w{:02} ", i % 100))
            .collect::<String>()
    }

    #[test]
    fn thousand_tokens_give_three_windows() {
        let doc = thousand_token_doc();
        assert_eq!(token_estimate(&doc), 1000);
        let chunks = chunk_document("d", &doc, ChunkParams::default()).unwrap();
        let offsets: Vec<usize> = chunks.iter().map(Chunk::token_offset).collect();
        assert_eq!(offsets, vec![0, 448, 896]);
        assert!(chunks.iter().all(|c| c.token_estimate <= 512));
        assert_eq!(reconstruct(&chunks), doc);
    }

    #[test]
    fn empty_document_has_no_chunks() {
        assert!(chunk_document("d", "", ChunkParams::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn overlap_must_be_smaller_than_chunk() {
        let p = ChunkParams {
            chunk_size: 512,
            overlap: 512,
        };
        assert!(chunk_document("d", "abc", p).is_err());
    }

    #[test]
    fn short_document_is_one_chunk() {
        let chunks = chunk_document("d", "hello world", ChunkParams::default()).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, "hello world");
    }

    #[test]
    fn boundaries_snap_to_word_starts() {
        let doc = "alpha beta gamma delta epsilon zeta eta theta iota kappa".repeat(20);
        let p = ChunkParams {
            chunk_size: 16,
            overlap: 4,
        };
        let chunks = chunk_document("d", &doc, p).unwrap();
        for c in &chunks[1..] {
            let before = doc.chars().nth(c.char_start - 1).unwrap();
            assert!(before.is_whitespace() || before == 'a', "{c:?}");
        }
        assert_eq!(reconstruct(&chunks), doc);
    }

    #[test]
    fn unbroken_text_overlaps_exactly() {
        let doc = "x".repeat(400);
        let p = ChunkParams {
            chunk_size: 20,
            overlap: 5,
        };
        let chunks = chunk_document("d", &doc, p).unwrap();
        for w in chunks.windows(2) {
            let end0 = w[0].char_start + w[0].text.len();
            assert_eq!(end0 - w[1].char_start, 5 * CHARS_PER_TOKEN);
        }
        assert_eq!(reconstruct(&chunks), doc);
    }

    proptest! {
        #[test]
        fn reconstruction_is_exact(
            doc in "[a-zé \n]{0,600}",
            size in 2usize..40,
            overlap_frac in 0.0f64..0.9,
        ) {
            let overlap = ((size as f64) * overlap_frac) as usize;
            let p = ChunkParams { chunk_size: size, overlap: overlap.min(size - 1) };
            let chunks = chunk_document("d", &doc, p).unwrap();
            prop_assert_eq!(reconstruct(&chunks), doc.clone());
            for c in &chunks {
                prop_assert!(c.token_estimate <= size);
                prop_assert!(!c.text.is_empty());
            }
            for w in chunks.windows(2) {
                prop_assert!(w[1].char_start > w[0].char_start);
                prop_assert!(w[1].char_start <= w[0].char_start + w[0].text.chars().count());
            }
        }
    }
}
