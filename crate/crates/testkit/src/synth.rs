//! Sample-by-sample evaluation of the sawtooth mix, in f32 as the
//! generated code computes it.

/// `(freq, start, dur, gain)`.
pub type VoiceSpec = (f32, u64, u64, f32);

/// One sawtooth sample at offset `x` from the voice start.
pub fn sawtooth(rate: f32, freq: f32, x: i32) -> f32 {
    let period = (rate / freq).round();
    let half = (period / 2.0).trunc();
    let xs = (x as u32 as f32) % period;
    xs / half - 1.0
}

/// The mixed buffer: for each sample, the gain-weighted sum over active
/// voices in score order, starting from 0.
pub fn render(rate: u32, length: u64, voices: &[VoiceSpec]) -> Vec<f32> {
    (0..length)
        .map(|i| {
            let mut acc = 0.0f32;
            for &(freq, start, dur, gain) in voices {
                if dur > 0 && i >= start && i < start + dur {
                    acc += gain * sawtooth(rate as f32, freq, (i - start) as i32);
                }
            }
            acc
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_samples_by_hand() {
        // period 4, half period 2: x mod 4 / 2 - 1
        assert_eq!(render(8, 5, &[(2.0, 0, 5, 1.0)]), vec![-1.0, -0.5, 0.0, 0.5, -1.0]);
    }
}
