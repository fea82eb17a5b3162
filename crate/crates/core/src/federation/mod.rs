//! The party graph and its synchronous training round.
//!
//! Companies fit their transforms and upload once. Each industry server runs
//! on its own thread, aligns its companies' rows by customer id and owns a
//! variational encoder. The global server runs in the caller's thread, owns
//! the classifier and the labels, and drives every round:
//! embeddings up, global update, gradients down, encoder updates.

mod codec;
mod party;
mod session;
mod transport;

pub use codec::{decode, decode_header, encode, Header, Message, Split, HEADER_LEN, MAGIC, PROTOCOL_VERSION};
pub use party::{
    accuracy, encoder_stream, encoder_update, eps_stream, global_pass, global_stream, split_columns, CompanyNode,
    GlobalPass, IndustryBatch, IndustryServer, TrainingConfig,
};
pub use session::{
    Evaluation, GlobalServer, MetricsReport, PartyStates, Phase, RoundState, Session, SessionConfig, SessionData,
    UpdateEvent, Updater,
};
pub use transport::{link_pair, FrameLog, InprocLink, Link, TappedLink, TcpLink, TransportKind, TCP_TIMEOUT};
