use crate::error::{Error, Result};

/// Average frame-level vectors into one utterance-level vector.
pub fn temporal_pool<V: AsRef<[f32]>>(frames: &[V]) -> Result<Vec<f32>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptyInput("temporal_pool needs at least one frame".into()))?;
    let m = first.as_ref().len();
    let mut acc = vec![0f64; m];
    for (i, frame) in frames.iter().enumerate() {
        let frame = frame.as_ref();
        if frame.len() != m {
            return Err(Error::dims(format!("frame {i}"), m, frame.len()));
        }
        for (a, &v) in acc.iter_mut().zip(frame) {
            *a += v as f64;
        }
    }
    let n = frames.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}
