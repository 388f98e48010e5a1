//! Seeded synthetic market data with a correlated news feed.
//!
//! Prices follow a multiplicative random walk. Some days are drawn as event
//! days: the event's articles appear that day with matching polarity, and
//! the price reacts by exactly +/- the jump magnitude on the FOLLOWING day.
//! That one-day lag is the point of the generator: it plants a signal in the
//! news stream that the price history alone cannot contain, so an end-to-end
//! test can verify the fusion step actually extracts it. The reaction is a
//! transient excursion: the underlying walk holds its level through the
//! event, so the price relaxes back once the event day has passed and jumps
//! never accumulate into a level trend. Non-event days get neutral filler,
//! some of it containing balanced sentiment words so the scorer is exercised
//! on ambiguous text.
//!
//! Generation is a pure function of the config (seed included); concurrent
//! generation with distinct seeds is safe. The outputs use exactly the
//! formats the ingestion modules consume, plus a ground-truth event log.

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;
use thiserror::Error;

use crate::timeseries::{OhlcvRow, OhlcvSeries};

/// Errors from generation (config validation only; a valid config cannot
/// fail).
#[derive(Debug, Error)]
pub enum SynthError {
    #[error("bad synth config: {reason}")]
    BadConfig { reason: String },
}

/// Generator parameters. Defaults: 250 days from 2020-01-01, base price 120,
/// 0.1% daily volatility, 8% daily event probability, 8% jump magnitude,
/// 2 to 5 articles per day. The default volatility sits well below the jump
/// magnitude so event moves dominate the noise floor, which is the regime
/// the generator exists to produce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub days: usize,
    pub base_price: f64,
    /// Standard deviation of the daily return on non-jump days.
    pub volatility: f64,
    /// Chance that a given day carries an event (and next-day jump).
    pub jump_probability: f64,
    /// Exact fractional next-day move an event causes. The move is a
    /// one-day excursion from the underlying walk, not a permanent shift.
    pub jump_magnitude: f64,
    pub articles_min: usize,
    pub articles_max: usize,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 250,
            base_price: 120.0,
            volatility: 0.001,
            jump_probability: 0.08,
            jump_magnitude: 0.08,
            articles_min: 2,
            articles_max: 5,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |reason: &str| SynthError::BadConfig { reason: reason.to_string() };
        if self.days == 0 {
            return Err(bad("days must be at least 1"));
        }
        if !(self.base_price.is_finite() && self.base_price > 0.0) {
            return Err(bad("base price must be positive"));
        }
        if !(self.volatility.is_finite() && self.volatility >= 0.0) {
            return Err(bad("volatility must be non-negative"));
        }
        if !(self.jump_probability.is_finite() && (0.0..=1.0).contains(&self.jump_probability)) {
            return Err(bad("jump probability must lie in [0, 1]"));
        }
        // an upper bound below 1 keeps negative spikes from zeroing the price
        if !(self.jump_magnitude.is_finite() && (0.0..1.0).contains(&self.jump_magnitude)) {
            return Err(bad("jump magnitude must lie in [0, 1)"));
        }
        if self.articles_min == 0 {
            return Err(bad("articles_min must be at least 1"));
        }
        if self.articles_max < self.articles_min {
            return Err(bad("articles_max must be at least articles_min"));
        }
        Ok(())
    }
}

/// One ground-truth event: articles on `date`, price jump the day after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthEvent {
    pub date: NaiveDate,
    /// +1 for a positive event, -1 for a negative one.
    pub direction: i8,
    /// Fractional size of the next-day move.
    pub magnitude: f64,
}

/// Everything one generation run produces.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub series: OhlcvSeries,
    /// News-API-shaped JSON, ready for the feed parser.
    pub feed_json: String,
    pub events: Vec<SynthEvent>,
}

/// Renders the event log as `date,direction,magnitude` CSV.
pub fn events_to_csv(events: &[SynthEvent]) -> String {
    let mut out = String::from("date,direction,magnitude\n");
    for e in events {
        out.push_str(&format!("{},{},{}\n", e.date, e.direction, e.magnitude));
    }
    out
}

// Sources must stay resolvable in the shipped reputation table.
const SOURCES: [&str; 7] = [
    "Reuters",
    "Bloomberg",
    "Financial Times",
    "Wall Street Daily",
    "Market Watchers",
    "Trader Forum",
    "Penny Stock Tips",
];

// Word pools for event articles; every word is in the shipped lexicon with
// the matching polarity, so an event day scores decisively.
const POS_VERBS: [&str; 5] = ["rally", "surge", "soar", "climb", "advance"];
const POS_ADJS: [&str; 4] = ["strong", "robust", "stellar", "impressive"];
const POS_NOUNS: [&str; 4] = ["gains", "growth", "profits", "momentum"];
const NEG_VERBS: [&str; 5] = ["plunge", "tumble", "slump", "sink", "slide"];
const NEG_NOUNS: [&str; 5] = ["losses", "lawsuit", "fraud", "crisis", "recession"];
const NEG_MOODS: [&str; 4] = ["fears", "concerns", "worries", "uncertainty"];

// Filler titles contain no lexicon words at all.
const NEUTRAL_TITLES: [&str; 5] = [
    "ACME holds annual meeting on schedule",
    "ACME announces quarterly report date",
    "ACME updates corporate calendar",
    "Analysts publish notes on ACME",
    "ACME files routine paperwork",
];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool[rng.gen_range(0..pool.len())]
}

struct ArticleDraft {
    source: &'static str,
    title: String,
    body: String,
    published_at: String,
}

fn draft_article(rng: &mut ChaCha8Rng, date: NaiveDate, polarity: Option<i8>) -> ArticleDraft {
    let (title, body) = match polarity {
        Some(1) => (
            format!(
                "ACME shares {} on {} {}",
                pick(rng, &POS_VERBS),
                pick(rng, &POS_ADJS),
                pick(rng, &POS_NOUNS)
            ),
            format!(
                "Analysts point to {} {} across the sector.",
                pick(rng, &POS_ADJS),
                pick(rng, &POS_NOUNS)
            ),
        ),
        Some(_) => (
            format!(
                "ACME shares {} amid {} {}",
                pick(rng, &NEG_VERBS),
                pick(rng, &NEG_NOUNS),
                pick(rng, &NEG_MOODS)
            ),
            format!(
                "Investors brace for {} as {} spread.",
                pick(rng, &NEG_NOUNS),
                pick(rng, &NEG_MOODS)
            ),
        ),
        None => {
            // Half the filler is plain; half mentions one word of each
            // polarity, which ties back to neutral.
            let title = pick(rng, &NEUTRAL_TITLES).to_string();
            let body = if rng.gen::<bool>() {
                format!(
                    "Commentators weigh {} against {} and call it even.",
                    pick(rng, &POS_NOUNS),
                    pick(rng, &NEG_NOUNS)
                )
            } else {
                "Traders see no clear direction for the stock.".to_string()
            };
            (title, body)
        }
    };
    let hour = rng.gen_range(9..17);
    let minute = rng.gen_range(0..60);
    ArticleDraft {
        source: pick(rng, &SOURCES),
        title,
        body,
        published_at: format!("{date}T{hour:02}:{minute:02}:00Z"),
    }
}

/// Generates the coupled price series, news feed, and event log.
pub fn generate(config: &SynthConfig) -> Result<SynthOutput, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let dates: Vec<NaiveDate> =
        (0..config.days).map(|i| config.start_date + Duration::days(i as i64)).collect();

    // Event days; the last day is excluded because its jump would land
    // outside the series.
    let mut event_dir: Vec<Option<i8>> = vec![None; config.days];
    let mut events = Vec::new();
    for i in 0..config.days {
        let roll: f64 = rng.gen();
        if i + 1 < config.days && roll < config.jump_probability {
            let direction: i8 = if rng.gen::<bool>() { 1 } else { -1 };
            event_dir[i] = Some(direction);
            events.push(SynthEvent {
                date: dates[i],
                direction,
                magnitude: config.jump_magnitude,
            });
        }
    }

    // Closes: a multiplicative walk. The day after an event is displaced by
    // exactly the jump magnitude while the walk itself holds its level, so
    // the excursion is transient. Spikes chain off the previous close when
    // events land on consecutive days, which keeps the next-day return of
    // every logged event exact.
    let mut closes = Vec::with_capacity(config.days);
    closes.push(config.base_price);
    let mut walk = config.base_price;
    for i in 1..config.days {
        match event_dir[i - 1] {
            Some(dir) => {
                closes.push(closes[i - 1] * (1.0 + f64::from(dir) * config.jump_magnitude));
            }
            None => {
                walk *= (1.0 + config.volatility * normal.sample(&mut rng)).max(0.01);
                closes.push(walk);
            }
        }
    }

    let rows: Vec<OhlcvRow> = (0..config.days)
        .map(|i| {
            let open = if i == 0 { closes[0] } else { closes[i - 1] };
            let close = closes[i];
            let span = 0.5 * config.volatility;
            let high = open.max(close) * (1.0 + span * rng.gen::<f64>());
            let low = open.min(close) * (1.0 - span * rng.gen::<f64>());
            let volume = (1.0e6 * (0.3 * normal.sample(&mut rng)).exp()).max(1.0) as u64;
            OhlcvRow { date: dates[i], open, high, low, close, adj_close: close, volume }
        })
        .collect();
    let series = OhlcvSeries::from_rows(rows).expect("generated rows are valid by construction");

    let mut feed_articles = Vec::new();
    for i in 0..config.days {
        let count = rng.gen_range(config.articles_min..=config.articles_max);
        for _ in 0..count {
            let draft = draft_article(&mut rng, dates[i], event_dir[i]);
            feed_articles.push(json!({
                "source": {"id": null, "name": draft.source},
                "author": null,
                "title": draft.title,
                "description": draft.body,
                "url": null,
                "publishedAt": draft.published_at,
            }));
        }
    }
    let feed_json = serde_json::to_string(&json!({
        "status": "ok",
        "totalResults": feed_articles.len(),
        "articles": feed_articles,
    }))
    .expect("feed serializes");

    Ok(SynthOutput { series, feed_json, events })
}
