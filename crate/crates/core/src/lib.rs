//! Commitment alignment over information protocols.
//!
//! Parses protocols and commitments, synthesizes forwarding protocols that
//! keep a commitment's debtor and creditor aligned, simulates asynchronous
//! enactments and checks the results by bounded enumeration.

pub mod commitment;
pub mod enactment;
pub mod protocol;
pub mod semantics;
pub mod sim;
pub mod syntax;
pub mod synthesis;
pub mod verify;
