use proptest::prelude::*;

use slogan_audit::corpus::{Corpus, Slogan, Taxonomy};
use slogan_audit::lexicon::{count_corpus, count_text, match_terms, normalize_text, Lexicon};

const ALPHABET: [&str; 20] = [
    "competitive", "interest", "rate", "home", "loans", "personal", "touch", "dedicated",
    "support", "financial", "planning", "future", "peace", "of", "mind", "secure", "tailored",
    "solutions", "growth", "the",
];

fn tokens(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(&ALPHABET[..]), 0..=max)
        .prop_map(|v| v.into_iter().map(str::to_owned).collect())
}

/// Greedy longest match by scanning every phrase at every position.
fn brute_force(tokens: &[String], phrases: &[Vec<String>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let best = phrases
            .iter()
            .filter(|p| tokens[i..].starts_with(p))
            .map(Vec::len)
            .max();
        match best {
            Some(len) => {
                out.push((i, len));
                i += len;
            }
            None => i += 1,
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matcher_equals_brute_force(toks in tokens(12)) {
        let lex = Lexicon::default();
        let hits = match_terms(&toks, &lex);
        for (ci, dict) in lex.dictionaries().iter().enumerate() {
            let got: Vec<(usize, usize)> = hits[ci].iter().map(|h| (h.token_start, h.token_len)).collect();
            prop_assert_eq!(got, brute_force(&toks, dict.phrase_tokens()));
        }
    }

    #[test]
    fn separator_splits_counts_additively(a in tokens(12), b in tokens(12)) {
        let lex = Lexicon::default();
        let count = |t: &[String]| -> Vec<usize> { match_terms(t, &lex).iter().map(Vec::len).collect() };
        let mut joined = a.clone();
        joined.push("zzsep".into());
        joined.extend(b.iter().cloned());
        let (ca, cb, cj) = (count(&a), count(&b), count(&joined));
        for c in 0..ca.len() {
            prop_assert_eq!(cj[c], ca[c] + cb[c]);
            prop_assert!(cj[c] >= ca[c]);
        }
    }

    #[test]
    fn hits_cover_their_phrase(toks in tokens(12)) {
        let lex = Lexicon::default();
        for (ci, cat_hits) in match_terms(&toks, &lex).iter().enumerate() {
            let dict = &lex.dictionaries()[ci];
            for h in cat_hits {
                prop_assert_eq!(&toks[h.token_start..h.token_end()], &dict.phrase_tokens()[h.phrase][..]);
            }
        }
    }

    #[test]
    fn count_text_agrees_with_match_terms(words in tokens(12), sep in prop::sample::select(vec![" ", ", ", "! ", " - ", "  "])) {
        let lex = Lexicon::default();
        let text = words.join(sep).to_uppercase();
        let expected: Vec<u32> = match_terms(&normalize_text(&text), &lex)
            .iter()
            .map(|h| h.len() as u32)
            .collect();
        prop_assert_eq!(count_text(&text, &lex), expected);
    }
}

#[test]
fn corpus_counts_are_sums_of_slogan_counts() {
    let tax = Taxonomy::default();
    let lex = Lexicon::default();
    let texts = [
        "Secure your future with tailored solutions and dedicated support!",
        "Competitive interest rate, home loans, personal touch.",
        "Nothing to see here",
        "Growth, growth and more GROWTH",
    ];
    let slogans: Vec<Slogan> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Slogan {
            group_id: if i % 2 == 0 { "male" } else { "female" }.into(),
            index: i,
            prompt: "p".into(),
            text: (*t).into(),
            model: "m".into(),
            created_at: chrono::DateTime::UNIX_EPOCH,
        })
        .collect();
    let corpus = Corpus::new(slogans, &tax).unwrap();
    let counts = count_corpus(&corpus, &lex);
    for (ci, cat) in lex.category_ids().iter().enumerate() {
        for g in ["male", "female"] {
            let expected: u64 = corpus
                .group(g)
                .map(|s| u64::from(count_text(&s.text, &lex)[ci]))
                .sum();
            assert_eq!(counts.raw_count(g, cat), Some(expected));
            let gc = counts.group(g).unwrap();
            assert_eq!(gc.per_slogan(ci).iter().map(|&x| u64::from(x)).sum::<u64>(), expected);
        }
    }
    // "growth" is both an empowerment and a demographic-specific term.
    assert_eq!(count_text(texts[3], &lex), vec![3, 0, 0, 3]);
}

#[test]
fn custom_lexicon_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("lex.json");
    std::fs::write(&p, r#"{"thrift": ["save", "nest egg"], "luck": ["lucky", "jackpot"]}"#).unwrap();
    let lex = Lexicon::load(&p).unwrap();
    assert_eq!(lex.category_ids(), vec!["thrift", "luck"]);
    assert_eq!(count_text("Save your NEST-EGG, feel lucky", &lex), vec![2, 1]);
}
