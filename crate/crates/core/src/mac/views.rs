use rand::Rng;

use crate::codec::{BitmapCode, SlotBitmap};

/// What a node itself observed in the latest occurrence of a data slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Perceived {
    #[default]
    Nothing,
    Decoded,
    /// Energy from two or more frames, none decodable.
    Collision,
}

/// Local usage code of one data slot.
///
/// `claims` counts fresh neighbours whose own bitmap says TRANSMITTING.
pub fn own_view_entry(owned: bool, perceived: Perceived, claims: usize) -> BitmapCode {
    if owned {
        BitmapCode::Transmitting
    } else if perceived == Perceived::Collision || claims >= 2 {
        BitmapCode::Collision
    } else if perceived == Perceived::Decoded || claims == 1 {
        BitmapCode::NeighbourTransmitting
    } else {
        BitmapCode::Idle
    }
}

/// Fuses the local bitmap with fresh neighbour bitmaps.
///
/// COLLISION anywhere wins; own TRANSMITTING is kept; any other sign of use
/// (own or reported) gives NEIGHBOUR_TRANSMITTING.
pub fn merge_views<'a>(own: &SlotBitmap, neighbours: impl IntoIterator<Item = &'a SlotBitmap>) -> SlotBitmap {
    let mut merged: Vec<BitmapCode> = own.codes().to_vec();
    for view in neighbours {
        for (m, &n) in merged.iter_mut().zip(view.codes()) {
            *m = match (*m, n) {
                (BitmapCode::Collision, _) | (_, BitmapCode::Collision) => BitmapCode::Collision,
                (BitmapCode::Transmitting, _) => BitmapCode::Transmitting,
                (BitmapCode::NeighbourTransmitting, _) => BitmapCode::NeighbourTransmitting,
                (BitmapCode::Idle, BitmapCode::Idle) => BitmapCode::Idle,
                (BitmapCode::Idle, _) => BitmapCode::NeighbourTransmitting,
            };
        }
    }
    SlotBitmap::from_codes(merged)
}

/// Uniform choice among the `candidates` that are IDLE in `merged`.
pub fn select_tsa<R: Rng + ?Sized>(
    merged: &SlotBitmap,
    candidates: impl IntoIterator<Item = u16>,
    rng: &mut R,
) -> Option<u16> {
    let idle: Vec<u16> = candidates.into_iter().filter(|&s| merged.get(s).is_idle()).collect();
    if idle.is_empty() {
        None
    } else {
        Some(idle[rng.random_range(0..idle.len())])
    }
}
