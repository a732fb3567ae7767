use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or mutually inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A tap delay cannot be realized by the delay hardware.
    #[error("sizing error: element {element} needs {delay_ps:.3} ps, exceeding {limit_ps:.3} ps ({what})")]
    Sizing {
        element: usize,
        delay_ps: f64,
        limit_ps: f64,
        what: &'static str,
    },

    /// The frequency-to-angle map is not one-to-one.
    #[error("frequency-to-angle map is not injective: {} colliding angle pairs (first: {:?})", collisions.len(), collisions.first())]
    NonInjective {
        /// Pairs of colliding angles in degrees, with the shared subcarrier bin.
        collisions: Vec<(f64, f64, i64)>,
    },

    /// No spectral lobe stands out of the received PSD.
    #[error("no detection: peak lobe {peak_over_median_db:.2} dB above median (need 3 dB)")]
    NoDetection { peak_over_median_db: f64 },

    /// Received and reference sequences could not be aligned.
    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
