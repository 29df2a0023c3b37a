//! Independent reference implementations used as test oracles.
//!
//! None of these call into the crate's algorithms; they recompute the same
//! quantities by a different route.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use readtrace_core::{HoverEvent, Section, StimulusRecord, StimulusSet};

pub const SECTIONS: [Section; 3] = [Section::Prompt, Section::ResponseA, Section::ResponseB];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Word index owning each character, numbered across sections.
pub fn owner_table(record: &StimulusRecord) -> [Vec<Option<usize>>; 3] {
    let mut next = 0;
    let texts = [&record.prompt, &record.response_a, &record.response_b];
    texts.map(|text| {
        let mut owners = Vec::new();
        let mut prev_ws = true;
        for ch in text.chars() {
            if ch.is_whitespace() {
                owners.push(None);
                prev_ws = true;
            } else {
                if prev_ws {
                    next += 1;
                }
                owners.push(Some(next - 1));
                prev_ws = false;
            }
        }
        owners
    })
}

/// (word, duration) fixations: events on whitespace or past the end of
/// their section vanish, neighbors on the same word pool their time, and
/// pools of zero length vanish.
pub fn consolidate_oracle(events: &[HoverEvent], record: &StimulusRecord) -> Vec<(usize, u64)> {
    let owners = owner_table(record);
    let mapped: Vec<(usize, u64)> = events
        .iter()
        .filter_map(|e| {
            let w = (*owners[e.section.index()].get(e.char_index)?)?;
            Some((w, e.exit_ms.saturating_sub(e.enter_ms)))
        })
        .collect();
    let mut groups: Vec<(usize, u64)> = Vec::new();
    for (w, d) in mapped {
        match groups.last_mut() {
            Some(last) if last.0 == w => last.1 += d,
            _ => groups.push((w, d)),
        }
    }
    groups.retain(|g| g.1 > 0);
    groups
}

pub fn word_count(record: &StimulusRecord) -> usize {
    [&record.prompt, &record.response_a, &record.response_b]
        .iter()
        .map(|t| t.split_whitespace().count())
        .sum()
}

const WORDS: &[&str] = &[
    "a", "to", "the", "cat", "über", "naïve", "reading", "response", "é", "日本語", "why?", "it's",
];

pub fn random_text(r: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = r.random_range(1..=max_words);
    let mut s = String::new();
    if r.random_bool(0.2) {
        s.push(' ');
    }
    for i in 0..n {
        if i > 0 {
            s.push_str([" ", "  ", "\n", "\t "][r.random_range(0..4)]);
        }
        s.push_str(WORDS[r.random_range(0..WORDS.len())]);
    }
    if r.random_bool(0.2) {
        s.push('\n');
    }
    s
}

pub fn random_record(r: &mut ChaCha8Rng, id: &str) -> StimulusRecord {
    StimulusRecord {
        id: id.into(),
        prompt: random_text(r, 15),
        response_a: random_text(r, 30),
        response_b: random_text(r, 30),
        source_label: None,
    }
}

/// Random events, mostly on words, some on whitespace, a few out of range,
/// with long runs on one character.
pub fn random_events(r: &mut ChaCha8Rng, record: &StimulusRecord, n: usize) -> Vec<HoverEvent> {
    let lens = [&record.prompt, &record.response_a, &record.response_b].map(|t| t.chars().count());
    let mut t = 0u64;
    let mut out = Vec::with_capacity(n);
    let mut last: Option<(Section, usize)> = None;
    for _ in 0..n {
        let (section, char_index) = match last {
            Some(prev) if r.random_bool(0.4) => prev,
            _ => {
                let s = SECTIONS[r.random_range(0..3)];
                let len = lens[s.index()];
                let c = if r.random_bool(0.03) { len + r.random_range(0..5) } else { r.random_range(0..len) };
                (s, c)
            }
        };
        last = Some((section, char_index));
        let dur = match r.random_range(0..10) {
            0 => 0,
            1 => r.random_range(4000..6000),
            _ => r.random_range(1..700),
        };
        out.push(HoverEvent { section, char_index, enter_ms: t, exit_ms: t + dur });
        t += dur + r.random_range(0..20);
    }
    out
}

/// Krippendorff's nominal alpha by enumerating ordered value pairs.
///
/// Observed disagreement averages mismatches over ordered pairs of
/// distinct coders within each item (weighted 1 / (m - 1)); expected
/// disagreement averages mismatches over every ordered pair of distinct
/// pairable values in the whole pool.
pub fn alpha_oracle<L: PartialEq + Clone>(items: &[Vec<Option<L>>]) -> Option<f64> {
    let units: Vec<Vec<L>> = items
        .iter()
        .map(|row| row.iter().flatten().cloned().collect::<Vec<_>>())
        .filter(|v| v.len() >= 2)
        .collect();
    if units.len() < 2 {
        return None;
    }
    let pool: Vec<&L> = units.iter().flatten().collect();
    let n = pool.len() as f64;
    let mut observed = 0.0;
    for u in &units {
        let m = u.len() as f64;
        for i in 0..u.len() {
            for j in 0..u.len() {
                if i != j && u[i] != u[j] {
                    observed += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let d_o = observed / n;
    let mut expected = 0.0;
    for i in 0..pool.len() {
        for j in 0..pool.len() {
            if i != j && pool[i] != pool[j] {
                expected += 1.0;
            }
        }
    }
    let d_e = expected / (n * (n - 1.0));
    if d_e == 0.0 {
        return Some(1.0);
    }
    Some(1.0 - d_o / d_e)
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + step(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    step(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Two-sided Student t tail by quadrature. With x = sqrt(df) tan(theta)
/// the density becomes proportional to cos(theta)^(df - 1) on
/// (-pi/2, pi/2), so no gamma function is needed.
pub fn t_two_sided_oracle(t: f64, df: f64) -> f64 {
    let g = |th: f64| th.cos().powf(df - 1.0);
    let half = std::f64::consts::FRAC_PI_2;
    let cut = (t.abs() / df.sqrt()).atan();
    let total = integrate(&g, 0.0, half, 1e-14);
    integrate(&g, cut, half, 1e-14) / total
}

/// Upper normal tail by quadrature of the density, split to keep the
/// integrand well resolved.
pub fn normal_sf_oracle(z: f64) -> f64 {
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut sum = 0.0;
    let mut a = z;
    while a < z + 40.0 {
        sum += integrate(&phi, a, a + 0.5, 1e-16);
        a += 0.5;
    }
    sum
}

/// Pooled two-sample t statistic and df, straight from the textbook.
pub fn pooled_t(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64], m: f64| v.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    let (ma, mb) = (mean(a), mean(b));
    let df = (a.len() + b.len() - 2) as f64;
    let sp2 = (ss(a, ma) + ss(b, mb)) / df;
    let se = (sp2 * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
    ((ma - mb) / se, df)
}

/// Column means of equal-length rows.
pub fn column_means(rows: &[Vec<u8>]) -> Vec<f64> {
    let n = rows.len() as f64;
    (0..rows[0].len())
        .map(|j| rows.iter().map(|r| f64::from(r[j])).sum::<f64>() / n)
        .collect()
}

/// Per-word totals by filtering and reducing (word, duration) pairs.
pub fn dwell_oracle(fixations: &[(usize, u64)], words: usize, min: u64, max: u64) -> Vec<u64> {
    let mut by_word: BTreeMap<usize, u64> = BTreeMap::new();
    for &(w, d) in fixations.iter().filter(|f| f.1 >= min && f.1 <= max) {
        *by_word.entry(w).or_default() += d;
    }
    (0..words).map(|w| by_word.get(&w).copied().unwrap_or(0)).collect()
}

/// Stimuli whose total word counts are uniform on [60, 590].
pub fn heterogeneous_corpus(n: usize, seed: u64) -> StimulusSet {
    let mut r = rng(seed);
    StimulusSet::from_records((0..n).map(|i| {
        let total = r.random_range(60..=590);
        StimulusRecord {
            id: format!("h{i:05}"),
            prompt: vec!["w"; total - 2].join(" "),
            response_a: "a".into(),
            response_b: "b".into(),
            source_label: None,
        }
    }))
    .unwrap()
}
