//! Deterministic template baseline.
//!
//! A single master pattern with sensible back-offs:
//!
//! ```text
//! TITLE, known as GIVEN_NAME, (born DATE_OF_BIRTH in PLACE_OF_BIRTH;
//! died DATE_OF_DEATH in PLACE_OF_DEATH) is/was an POSITION_HELD and
//! OCCUPATION from CITIZENSHIP.
//! ```
//!
//! Every optional clause is omitted when its slot is absent, "is" flips to
//! "was" when a death date is present, and determiner agreement plus a
//! country-article lexicon handle the surface details. With eight optional
//! clause slots the lattice admits up to 2^8 skeletons before the agreement
//! rules multiply surface variants; the renderer is total and deterministic
//! over any record that carries a title.
//!
//! Values other than dates are copied verbatim from the record, so the
//! baseline never hallucinates: every content token in the output traces
//! back to some input fact.

use std::collections::BTreeSet;

use crate::corpus::FactRecord;
use crate::error::{Error, Result};

/// Month names used when rendering dates, January first.
const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

/// Lexicons steering determiner and article choice.
#[derive(Debug, Clone)]
pub struct TemplateRules {
    /// Word-initial characters that select "an" over "a".
    pub an_initials: BTreeSet<char>,
    /// Citizenship values that take a "the" article (space-joined form).
    pub the_countries: BTreeSet<String>,
    /// Month names indexed by month-1.
    pub month_names: [String; 12],
}

impl Default for TemplateRules {
    fn default() -> Self {
        TemplateRules {
            an_initials: ['a', 'e', 'i', 'o', 'u'].into_iter().collect(),
            the_countries: [
                "united states of america",
                "united kingdom",
                "netherlands",
                "philippines",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            month_names: MONTHS.map(String::from),
        }
    }
}

/// A possibly partial date: the year is required, month and day back off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartialDate {
    pub year: i64,
    pub month: Option<u32>,
    pub day: Option<u32>,
}

impl PartialDate {
    /// Parse `yyyy`, `yyyy-mm` or `yyyy-mm-dd` from a single token. Range
    /// checks are deferred to [`format_date`].
    pub fn parse(token: &str) -> Option<PartialDate> {
        let mut parts = token.split('-');
        let year: i64 = parts.next()?.parse().ok()?;
        let month = match parts.next() {
            Some(p) => Some(p.parse().ok()?),
            None => None,
        };
        let day = match parts.next() {
            Some(p) => Some(p.parse().ok()?),
            None => None,
        };
        if parts.next().is_some() {
            return None;
        }
        Some(PartialDate { year, month, day })
    }
}

/// "was" when a death date is present, otherwise "is".
pub fn choose_copula(record: &FactRecord) -> &'static str {
    if record.has_slot("DATE_OF_DEATH") {
        "was"
    } else {
        "is"
    }
}

/// "an" when the following word starts with a configured initial, else "a".
pub fn choose_determiner<'a>(next_word: &str, rules: &'a TemplateRules) -> &'a str {
    match next_word.chars().next() {
        Some(c) if rules.an_initials.contains(&c) => "an",
        _ => "a",
    }
}

/// Render a date as `[d, monthname, yyyy]` with no leading zero on the day,
/// backing off to `[monthname, yyyy]` or `[yyyy]` when components are
/// missing. An out-of-range month is an error.
pub fn format_date(date: &PartialDate, rules: &TemplateRules) -> Result<Vec<String>> {
    let mut out = Vec::with_capacity(3);
    if let Some(m) = date.month {
        if !(1..=12).contains(&m) {
            return Err(Error::Invalid(format!("invalid month {m}")));
        }
        if let Some(d) = date.day {
            out.push(d.to_string());
        }
        out.push(rules.month_names[(m - 1) as usize].clone());
    }
    out.push(date.year.to_string());
    Ok(out)
}

/// Date slots render through [`format_date`] when the value is a single
/// parseable ISO token; anything else is copied verbatim.
fn date_tokens(record: &FactRecord, slot: &str, rules: &TemplateRules) -> Result<Option<Vec<String>>> {
    let fact = match record.fact(slot) {
        Some(f) => f,
        None => return Ok(None),
    };
    if fact.value_tokens.len() == 1 {
        if let Some(date) = PartialDate::parse(&fact.value_tokens[0]) {
            return format_date(&date, rules).map(Some);
        }
    }
    Ok(Some(fact.value_tokens.clone()))
}

fn value_tokens(record: &FactRecord, slot: &str) -> Option<Vec<String>> {
    record.fact(slot).map(|f| f.value_tokens.clone())
}

/// Fill the master template for one record. The output is already in
/// corpus-tokenizer form (punctuation as standalone tokens).
pub fn render(record: &FactRecord, rules: &TemplateRules) -> Result<Vec<String>> {
    if record.title_tokens.is_empty() {
        return Err(Error::Invalid("record has no title".into()));
    }
    let mut out: Vec<String> = record.title_tokens.clone();

    if let Some(given) = value_tokens(record, "GIVEN_NAME") {
        out.push(",".into());
        out.push("known".into());
        out.push("as".into());
        out.extend(given);
        out.push(",".into());
    }

    let born_date = date_tokens(record, "DATE_OF_BIRTH", rules)?;
    let born_place = value_tokens(record, "PLACE_OF_BIRTH");
    let died_date = date_tokens(record, "DATE_OF_DEATH", rules)?;
    let died_place = value_tokens(record, "PLACE_OF_DEATH");
    let born = born_date.is_some() || born_place.is_some();
    let died = died_date.is_some() || died_place.is_some();
    if born || died {
        out.push("(".into());
        if born {
            out.push("born".into());
            if let Some(d) = born_date {
                out.extend(d);
            }
            if let Some(p) = born_place {
                out.push("in".into());
                out.extend(p);
            }
        }
        if born && died {
            out.push(";".into());
        }
        if died {
            out.push("died".into());
            if let Some(d) = died_date {
                out.extend(d);
            }
            if let Some(p) = died_place {
                out.push("in".into());
                out.extend(p);
            }
        }
        out.push(")".into());
    }

    let position = value_tokens(record, "POSITION_HELD");
    let occupation = value_tokens(record, "OCCUPATION");
    let citizenship = value_tokens(record, "CITIZENSHIP");
    if position.is_some() || occupation.is_some() || citizenship.is_some() {
        out.push(choose_copula(record).into());
        let head = position.as_ref().or(occupation.as_ref());
        if let Some(head) = head {
            out.push(choose_determiner(&head[0], rules).into());
        }
        if let Some(p) = position {
            out.extend(p);
            if let Some(o) = occupation {
                out.push("and".into());
                out.extend(o);
            }
        } else if let Some(o) = occupation {
            out.extend(o);
        }
        if let Some(c) = citizenship {
            out.push("from".into());
            if rules.the_countries.contains(&c.join(" ")) {
                out.push("the".into());
            }
            out.extend(c);
        }
    }

    out.push(".".into());
    Ok(out)
}
