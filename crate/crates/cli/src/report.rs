//! Plain-text tables for the terminal and for `report.txt`.

use std::fmt::Write;

use readtrace_core::analysis::{Analysis, Rate};
use readtrace_core::prepare::{LengthStats, Manifest};
use readtrace_core::stats::GroupSummary;

fn rate(r: &Rate) -> String {
    match r.rate {
        Some(v) => format!("{v:.3} ({}/{})", r.count, r.n),
        None => format!("- (0/{})", r.n),
    }
}

fn group(g: &GroupSummary) -> String {
    if g.n == 0 {
        return "-".into();
    }
    format!("{:.2} (sd {:.2}, n {})", g.mean, g.sd, g.n)
}

fn p(v: f64) -> String {
    if v < 1e-4 {
        format!("{v:.1e}")
    } else {
        format!("{v:.4}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

pub fn prepare_summary(m: &Manifest) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "source items         {}", m.source_items);
    let _ = writeln!(out, "unparseable          {}", m.dropped_unparseable);
    let _ = writeln!(
        out,
        "above p{} ({} words, {})  {}",
        m.percentile, m.threshold_words, m.percentile_method, m.dropped_percentile
    );
    let _ = writeln!(out, "short responses      {}", m.dropped_short);
    let _ = writeln!(out, "survivors            {}", m.survivors);
    let _ = writeln!(out, "sampled              {} (seed {})", m.sampled, m.seed);
    if let Some(s) = &m.summary {
        let _ = writeln!(out, "\n{:<10} {:>8} {:>8} {:>6} {:>6}", "words", "mean", "sd", "min", "max");
        let row = |out: &mut String, name: &str, l: &LengthStats| {
            let _ = writeln!(out, "{name:<10} {:>8.1} {:>8.1} {:>6} {:>6}", l.mean, l.sd, l.min, l.max);
        };
        row(&mut out, "prompt", &s.prompt);
        row(&mut out, "chosen", &s.chosen);
        row(&mut out, "rejected", &s.rejected);
        row(&mut out, "total", &s.total);
    }
    out
}

pub fn analysis_summary(a: &Analysis) -> String {
    let r = &a.report;
    let s = &a.summary;
    let mut out = String::new();

    let _ = writeln!(out, "AGREEMENT");
    let _ = writeln!(out, "  alpha (nominal)        {} over {} items", opt(r.alpha), r.alpha_items);
    let pc = &r.pair_counts;
    let _ = writeln!(
        out,
        "  annotator pairs        {} (agree {}, disagree {}) from {} items, {} skipped",
        pc.pairs, pc.agreeing, pc.disagreeing, pc.items, pc.skipped_items
    );
    if let Some(m) = r.source_label_match {
        let _ = writeln!(out, "  source label match     {m:.3}");
    }

    let _ = writeln!(out, "\nTESTS");
    let _ = writeln!(
        out,
        "  {:<32} {:>10} {:>7} {:>9} {:>9}  family",
        "name", "statistic", "df", "p", "p_adj"
    );
    for t in &r.tests {
        let family = r
            .families
            .iter()
            .find(|(_, members)| members.contains(&t.test_name))
            .map_or("-", |(f, _)| f.as_str());
        let _ = writeln!(
            out,
            "  {:<32} {:>10.3} {:>7.2} {:>9} {:>9}{} {}",
            t.test_name,
            t.statistic,
            t.df,
            p(t.p_raw),
            p(t.p_adjusted),
            if t.significant() { "*" } else { " " },
            family
        );
    }
    for (name, why) in &r.errors {
        let _ = writeln!(out, "  {name:<32} not computed: {why}");
    }

    let _ = writeln!(out, "\nTRIALS");
    let excluded: Vec<String> = s.excluded.iter().map(|(k, n)| format!("{k} {n}")).collect();
    let _ = writeln!(
        out,
        "  {} trials, {} retained, exclusion rate {:.3}{}",
        s.trials,
        s.retained,
        s.exclusion_rate,
        if excluded.is_empty() { String::new() } else { format!(" ({})", excluded.join(", ")) }
    );

    let _ = writeln!(out, "\nREADING BEHAVIOR");
    let rows = [
        ("re-read any section", rate(&s.reread.any)),
        ("re-read a response", rate(&s.reread.response)),
        ("re-read prompt", rate(&s.reread.prompt)),
        ("re-read chosen", rate(&s.reread.chosen)),
        ("re-read rejected", rate(&s.reread.rejected)),
        ("last section is chosen", rate(&s.last_section_chosen)),
        ("  among re-readers", rate(&s.last_section_chosen_among_rereaders)),
        ("looped", rate(&s.looped)),
        ("path length", group(&s.path_length)),
        ("ms per response word", group(&s.ms_per_word_responses)),
        ("skipped words, chosen", group(&s.skipped_chosen)),
        ("skipped words, rejected", group(&s.skipped_rejected)),
    ];
    for (name, value) in rows {
        let _ = writeln!(out, "  {name:<24} {value}");
    }
    let c = &s.coverage;
    let _ = writeln!(
        out,
        "  {:<24} overall {:.3}, prompt {:.3}, chosen {:.3}, rejected {:.3}, responses {:.3}",
        "coverage", c.overall, c.prompt, c.chosen, c.rejected, c.responses
    );
    let positions: Vec<String> = s.chosen_position.iter().map(|(k, n)| format!("{k} {n}")).collect();
    let _ = writeln!(out, "  {:<24} {}", "chosen position", positions.join(", "));

    let _ = writeln!(out, "\nSKIP RATE BY RESPONSE DECILE");
    let _ = write!(out, "  {:<9}", "decile");
    for i in 1..=10 {
        let _ = write!(out, " {i:>6}");
    }
    let _ = writeln!(out);
    let d = &s.skip_deciles;
    for (name, values) in [("chosen", &d.chosen), ("rejected", &d.rejected), ("all", &d.all)] {
        let _ = write!(out, "  {name:<9}");
        for v in values {
            let _ = write!(out, " {:>6}", v.map_or_else(|| "-".into(), |v| format!("{v:.3}")));
        }
        let _ = writeln!(out);
    }

    if let Some(bins) = &s.similarity {
        let _ = writeln!(out, "\nRESPONSE RE-READ BY SIMILARITY QUARTILE");
        for b in bins {
            let _ = writeln!(
                out,
                "  q{} [{:.3}, {:.3}] {} stimuli  {}",
                b.quartile,
                b.min_similarity,
                b.max_similarity,
                b.stimuli,
                rate(&b.reread_response)
            );
        }
    }
    out
}
