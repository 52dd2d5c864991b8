use super::{check_interval, Column, SeriesFrame};
use crate::error::{Error, Result};

/// Sum consecutive samples into a coarser sampling interval.
///
/// Windows start at the frame's first sample. A trailing window that is not
/// fully covered is dropped. An output sample is gap-marked when any of its
/// source samples was.
pub fn aggregate(frame: &SeriesFrame, target_interval: u32) -> Result<SeriesFrame> {
    check_interval(target_interval)?;
    let source = frame.interval();
    if target_interval < source || target_interval % source != 0 {
        return Err(Error::config(format!(
            "cannot aggregate {source}-minute samples to {target_interval} minutes"
        )));
    }
    let ratio = (target_interval / source) as usize;
    let full = frame.len() / ratio;
    let dropped = frame.len() - full * ratio;
    if dropped > 0 {
        log::warn!(
            "aggregating to {target_interval} min drops {dropped} trailing sample(s) of a partial window"
        );
    }

    let columns = frame
        .columns()
        .iter()
        .map(|col| {
            let values = col
                .values
                .chunks_exact(ratio)
                .map(|w| w.iter().sum())
                .collect();
            let gap_mask = col
                .gap_mask
                .chunks_exact(ratio)
                .map(|w| w.iter().any(|g| *g))
                .collect();
            Column::with_gaps(col.sensor_id.clone(), values, gap_mask)
        })
        .collect();
    SeriesFrame::new(frame.start_time(), target_interval, columns)
}
