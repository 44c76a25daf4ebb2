use std::collections::HashMap;

/// Pooled n-gram statistics for corpus BLEU-4.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    out
}

impl BleuStats {
    pub fn add<S: AsRef<str>, R: AsRef<str>>(&mut self, hyp: &[S], reference: &[R]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=4 {
            let h = ngrams(hyp, n);
            let r = ngrams(reference, n);
            self.totals[n - 1] += h.values().sum::<usize>();
            self.matches[n - 1] += h.iter().map(|(g, c)| (*c).min(r.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
    }

    /// `100 · BP · exp(Σ ¼ ln pₙ)`; zero when any precision vanishes.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..4 {
            if self.matches[n] == 0 || self.totals[n] == 0 {
                return 0.0;
            }
            log_sum += 0.25 * (self.matches[n] as f64 / self.totals[n] as f64).ln();
        }
        100.0 * self.brevity_penalty() * log_sum.exp()
    }

    pub fn brevity_penalty(&self) -> f64 {
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        if c > r {
            1.0
        } else if c == 0.0 {
            0.0
        } else {
            (1.0 - r / c).exp()
        }
    }

    pub fn precision(&self, n: usize) -> f64 {
        if self.totals[n - 1] == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / self.totals[n - 1] as f64
        }
    }
}

/// Corpus BLEU-4 over `(hypothesis, reference)` pairs, 0–100.
pub fn corpus_bleu<S: AsRef<str>, R: AsRef<str>>(pairs: &[(&[S], &[R])]) -> f64 {
    let mut stats = BleuStats::default();
    for (h, r) in pairs {
        stats.add(h, r);
    }
    stats.score()
}
