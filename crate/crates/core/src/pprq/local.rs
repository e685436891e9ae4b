//! All four parties in one process, connected by socket pairs.

use std::os::unix::net::UnixStream;

use rand::{CryptoRng, RngCore};

use super::primary::{serve_user, PrimaryContext, PrimaryReport};
use super::secondary::{handle_connection, PendingSessions, SecondaryContext, SecondaryReport};
use super::user::{run_query, QueryOutcome, QueryRequest};
use super::Result;
use crate::wire::{FramedLink, Transcript};

/// Each party's result. A failing party does not hide the others.
#[derive(Debug)]
pub struct LocalRun {
    pub outcome: Result<QueryOutcome>,
    pub primary: Result<PrimaryReport>,
    pub secondary: Result<Option<SecondaryReport>>,
    /// Every frame C2 exchanged with C1.
    pub c2_view: Transcript,
    /// Every frame C2 exchanged with the user.
    pub user_view: Transcript,
}

pub fn run_local<R: RngCore + CryptoRng + Send>(
    primary: &PrimaryContext,
    secondary: &SecondaryContext,
    request: &QueryRequest,
    rng: &mut R,
) -> std::io::Result<LocalRun> {
    let (bob_c1, c1_bob) = UnixStream::pair()?;
    let (bob_c2, c2_bob) = UnixStream::pair()?;
    let (c1_c2, c2_c1) = UnixStream::pair()?;
    let c2_view = Transcript::new();
    let user_view = Transcript::new();
    let pending = PendingSessions::new();

    let (outcome, primary, secondary) = std::thread::scope(|s| {
        let c1 = s.spawn(|| serve_user(primary, FramedLink::new(c1_bob), move || Ok(FramedLink::new(c1_c2))));
        let c2_user = s.spawn(|| {
            handle_connection(secondary, FramedLink::new(c2_bob).with_transcript(user_view.clone()), &pending)
        });
        let c2_c1 = {
            let link = FramedLink::new(c2_c1).with_transcript(c2_view.clone());
            let pending = &pending;
            s.spawn(move || handle_connection(secondary, link, pending))
        };
        let bob = s.spawn(|| run_query(FramedLink::new(bob_c1), FramedLink::new(bob_c2), request, rng));

        let primary = c1.join().expect("primary cloud panicked");
        let registered = c2_user.join().expect("secondary cloud panicked");
        let secondary = c2_c1.join().expect("secondary cloud panicked");
        // Whatever C1 left unclaimed would keep the user waiting.
        pending.clear();
        let outcome = bob.join().expect("user panicked");
        let secondary = registered.and(secondary);
        (outcome, primary, secondary)
    });
    Ok(LocalRun { outcome, primary, secondary, c2_view, user_view })
}
