//! Service boundary of the requirement change management core: a route
//! table shared by the HTTP server and the command line.

pub mod cli;
pub mod http;
pub mod router;

pub use router::{ApiRequest, ApiResponse, Method, Service, ACTOR_HEADER, ROUTES};
