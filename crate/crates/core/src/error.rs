use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown game `{0}`")]
    UnknownGame(String),

    #[error("game {game} does not support {n_players} players")]
    UnsupportedPlayerCount { game: String, n_players: usize },

    #[error("invalid payoff tensor: {0}")]
    InvalidPayoffs(String),

    #[error("invalid transition schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed observation: {0}")]
    MalformedObservation(String),

    /// Numerical breakdown inside an agent's inference or precision update.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("trial failed at step {step} (agent {agent}): {source}")]
    Trial {
        step: usize,
        agent: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error at `{path}`: {message}")]
    ConfigSchema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
