//! Plot buffers, bags and the remote gateway.

pub mod bag;
pub mod gateway;
pub mod plot;

pub use bag::{Bag, BagData, BagError, BagHeader, BagRecord, BagRecorder, Replayer};
pub use gateway::{Client, Frame, Gateway, GatewayContext, Request, Session};
pub use plot::{PlotError, PlotSeries, PlotStore, TopicHistory};
