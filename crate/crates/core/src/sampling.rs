//! Early-time window selection for adaptation data.

use serde::{Deserialize, Serialize};

use crate::dataio::Trajectory;
use crate::error::{Error, Result};

/// `sqrt(H0 / g)`.
pub fn characteristic_time(h0_m: f64, g: f64) -> Result<f64> {
    if !(h0_m > 0.0) || !(g > 0.0) {
        return Err(Error::config(
            "characteristic_time",
            format!("need H0 > 0 and g > 0, got H0={h0_m}, g={g}"),
        ));
    }
    Ok((h0_m / g).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub tau_c_s: f64,
    pub multiple: f64,
    pub n_frames_selected: usize,
}

/// Frames covering `t <= multiple * tau_c` after the `history_len` frames
/// that seed the first prediction, i.e. `history_len + ceil(multiple *
/// tau_c / dt)` frames, capped at the trajectory length.
pub fn window_spec(t: &Trajectory, multiple: f64, history_len: usize, g: f64) -> Result<WindowSpec> {
    if !(multiple > 0.0) {
        return Err(Error::config("window_tau_multiple", "must be > 0"));
    }
    let tau = characteristic_time(t.initial_height(), g)?;
    // dt is stored as f32: 0.175 / 0.0025 comes out as 70.0000017
    let steps = (multiple * tau / t.dt_s * (1.0 - 1e-6)).ceil().max(0.0) as usize;
    let n = (history_len + steps).min(t.n_frames);
    if n < history_len + 2 {
        return Err(Error::config(
            "window_tau_multiple",
            format!("window of {n} frames is shorter than {} frames", history_len + 2),
        ));
    }
    Ok(WindowSpec {
        tau_c_s: tau,
        multiple,
        n_frames_selected: n,
    })
}

pub fn select_window(t: &Trajectory, multiple: f64, history_len: usize, g: f64) -> Result<Trajectory> {
    let spec = window_spec(t, multiple, history_len, g)?;
    t.slice_frames(0, spec.n_frames_selected)
}
