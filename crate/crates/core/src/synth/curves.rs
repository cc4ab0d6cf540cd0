//! Speaking-score curve templates.
//!
//! Each template builds smooth logistic-edged activity spans and then clamps
//! frames that must be strictly active or strictly silent, so the classifier
//! recovers the template by construction while the shapes stay organic.

use crate::annotate::{InteractionPattern, SpeakingScoreCurve};
use crate::error::{Error, Result};
use crate::seeds;
use rand::Rng;

const LO: f32 = -0.78;
const EDGE_K: f32 = 2.2;

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Smooth indicator of the span [a, b] (frame units).
fn bump(t: f32, a: f32, b: f32) -> f32 {
    sigmoid(EDGE_K * (t - a)) * sigmoid(EDGE_K * (b - t))
}

struct SpeakerPlan {
    /// active spans (a, b) inclusive of both ends, in frames
    spans: Vec<(f32, f32)>,
    /// plateau modulation: level(t) = plateau + mod_amp * sin(2 pi t / period + phase)
    plateau: f32,
    mod_amp: f32,
    period: f32,
    phase: f32,
}

impl SpeakerPlan {
    fn level(&self, t: f32) -> f32 {
        self.plateau + self.mod_amp * ((2.0 * std::f32::consts::PI * t / self.period) + self.phase).sin()
    }

    fn value(&self, t: f32) -> f32 {
        let mut acc = 0.0f32;
        for &(a, b) in &self.spans {
            acc += bump(t, a, b);
        }
        let acc = acc.min(1.0);
        LO + (self.level(t) - LO) * acc
    }

    fn inside(&self, t: f32, shrink: f32) -> bool {
        self.spans
            .iter()
            .any(|&(a, b)| t >= a + shrink && t <= b - shrink)
    }

    fn outside(&self, t: f32, grow: f32) -> bool {
        self.spans.iter().all(|&(a, b)| t < a - grow || t > b + grow)
    }
}

/// Generate per-person speaking-score curves realizing a template.
///
/// `classify_pattern` on the result returns the requested template for every
/// seed; `Mixed` is a classification outcome, not a generatable template.
pub fn gen_speaking_curves(
    template: InteractionPattern,
    n_persons: usize,
    length_frames: usize,
    fps: f32,
    seed: u64,
) -> Result<Vec<SpeakingScoreCurve>> {
    if !(2..=4).contains(&n_persons) {
        return Err(Error::Format(format!(
            "n_persons must be in [2,4], got {n_persons}"
        )));
    }
    if template == InteractionPattern::Mixed {
        return Err(Error::UnsupportedTemplate("mixed".into()));
    }
    if length_frames < 15 {
        return Err(Error::Format(format!(
            "need at least 15 frames, got {length_frames}"
        )));
    }
    let mut rng = seeds::rng(seed, "curves", template as u64);
    let n = n_persons;
    let lf = length_frames as f32;

    let mut plans: Vec<SpeakerPlan> = (0..n)
        .map(|_| SpeakerPlan {
            spans: Vec::new(),
            plateau: rng.gen_range(0.52..0.60),
            mod_amp: rng.gen_range(0.22..0.30),
            period: rng.gen_range(9.0..14.0),
            phase: rng.gen_range(0.0..std::f32::consts::TAU),
        })
        .collect();

    match template {
        InteractionPattern::Monologue => {
            let speaker = rng.gen_range(0..n);
            let onset = rng.gen_range(3..=6) as f32;
            plans[speaker].spans.push((onset, lf + 10.0));
        }
        InteractionPattern::TurnTaking => {
            // round-robin turns; adjacent spans are laid out so exactly the
            // integer boundary frame is clamped active for both speakers,
            // giving one positive-overlap frame per handoff (well under a
            // tenth of the active frames even on 15-frame clips)
            let turns = if length_frames < 40 { 2 } else { 3.max(n) };
            let first = rng.gen_range(0..n);
            let mut bounds: Vec<f32> = (0..=turns)
                .map(|k| (k as f32 * lf / turns as f32).round())
                .collect();
            for b in bounds.iter_mut().skip(1).take(turns - 1) {
                *b += rng.gen_range(-1i32..=1) as f32;
            }
            for k in 0..turns {
                let who = (first + k) % n;
                let a = if k == 0 { 1.0 } else { bounds[k] - 0.5 };
                let b = if k == turns - 1 {
                    lf - 2.0
                } else {
                    bounds[k + 1] + 0.5
                };
                plans[who].spans.push((a, b));
            }
        }
        InteractionPattern::OverTalking => {
            let a = rng.gen_range(0..n);
            let b = (a + 1 + rng.gen_range(0..n - 1)) % n;
            debug_assert_ne!(a, b);
            plans[a].spans.push((1.0, (0.75 * lf).round()));
            plans[b].spans.push(((0.25 * lf).round(), lf - 2.0));
        }
        InteractionPattern::TalkingListening => {
            // each turn separated by a fully silent gap
            let turns = if length_frames < 40 { 2 } else { n.max(2) };
            let gap = (0.07 * lf).round().max(2.0);
            let lead = 1.0;
            let tail = 1.0;
            let seg = (lf - lead - tail - gap * (turns as f32 - 1.0)) / turns as f32;
            let first = rng.gen_range(0..n);
            for k in 0..turns {
                let who = (first + k) % n;
                let a = lead + k as f32 * (seg + gap);
                plans[who].spans.push((a, a + seg));
            }
        }
        InteractionPattern::Mixed => unreachable!(),
    }

    let mut curves = Vec::with_capacity(n);
    for plan in &plans {
        let mut scores = Vec::with_capacity(length_frames);
        for t in 0..length_frames {
            let tf = t as f32;
            let noise = rng.gen_range(-0.04..0.04f32);
            let mut v = plan.value(tf) + noise;
            // clamp the frames that decide the classification
            if plan.inside(tf, 0.5) {
                v = v.max(0.08);
            }
            if plan.outside(tf, 1.0) {
                v = v.min(-0.05);
            }
            scores.push(v.clamp(-1.0, 1.0));
        }
        curves.push(SpeakingScoreCurve::new(scores, fps)?);
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{classify_pattern, PatternThresholds};

    const TEMPLATES: [InteractionPattern; 4] = [
        InteractionPattern::Monologue,
        InteractionPattern::TurnTaking,
        InteractionPattern::OverTalking,
        InteractionPattern::TalkingListening,
    ];

    #[test]
    fn round_trip_turn_taking_example() {
        let curves = gen_speaking_curves(InteractionPattern::TurnTaking, 2, 150, 15.0, 7).unwrap();
        let st = classify_pattern(&curves, &PatternThresholds::default()).unwrap();
        assert_eq!(st.pattern, InteractionPattern::TurnTaking);
    }

    #[test]
    fn monologue_has_exactly_one_positive_mean_curve() {
        for seed in 0..20 {
            let curves =
                gen_speaking_curves(InteractionPattern::Monologue, 3, 150, 15.0, seed).unwrap();
            let positives = curves
                .iter()
                .filter(|c| c.scores.iter().sum::<f32>() > 0.0)
                .count();
            assert_eq!(positives, 1, "seed {seed}");
        }
    }

    #[test]
    fn over_talking_overlap_recounted_independently() {
        for seed in 0..20 {
            let curves =
                gen_speaking_curves(InteractionPattern::OverTalking, 2, 150, 15.0, seed).unwrap();
            let n = curves[0].len();
            let mut both = 0usize;
            let mut any = 0usize;
            for t in 0..n {
                let a = curves[0].scores[t] > 0.0;
                let b = curves[1].scores[t] > 0.0;
                if a || b {
                    any += 1;
                }
                if a && b {
                    both += 1;
                }
            }
            let overlap = both as f32 / any as f32;
            assert!(overlap >= 0.3, "seed {seed}: overlap {overlap}");
        }
    }

    #[test]
    fn round_trip_all_templates_many_seeds_and_person_counts() {
        let th = PatternThresholds::default();
        for template in TEMPLATES {
            for seed in 0..25u64 {
                for n in 2..=4usize {
                    for len in [15usize, 150] {
                        let curves =
                            gen_speaking_curves(template, n, len, 15.0, seed).unwrap();
                        assert_eq!(curves.len(), n);
                        let st = classify_pattern(&curves, &th).unwrap();
                        assert_eq!(
                            st.pattern, template,
                            "template {template:?} seed {seed} n {n} len {len} stats {st:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn mixed_template_is_rejected() {
        assert!(matches!(
            gen_speaking_curves(InteractionPattern::Mixed, 2, 150, 15.0, 0),
            Err(crate::error::Error::UnsupportedTemplate(_))
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let a = gen_speaking_curves(InteractionPattern::TurnTaking, 3, 90, 15.0, 42).unwrap();
        let b = gen_speaking_curves(InteractionPattern::TurnTaking, 3, 90, 15.0, 42).unwrap();
        assert_eq!(a, b);
    }
}
