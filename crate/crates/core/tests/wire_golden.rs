use uavfed_core::fedlearn::{comm_cost, decode, encode, quantize, quantize_full, FlMessage};
use uavfed_core::nn::Group;

fn golden() -> Vec<u8> {
    let text = include_str!("golden/fl_message_v1.hex");
    text.split_whitespace().map(|h| u8::from_str_radix(h, 16).unwrap()).collect()
}

fn message() -> FlMessage {
    FlMessage {
        sender: 2,
        blobs: vec![
            quantize(Group::Vel, &[0.0, 1.0, 0.5, 0.25], &[16, 12, 8, 4]).unwrap(),
            quantize_full(Group::Critic, &[-1.0, 1.0]).unwrap(),
        ],
        rep: 0.75,
    }
}

#[test]
fn codes_match_hand_rounding() {
    let m = message();
    assert_eq!(m.blobs[0].codes, vec![0, 4095, 128, 4]);
    assert_eq!(m.blobs[1].codes, vec![0, u32::MAX]);
    assert!(m.blobs[1].full_precision);
}

#[test]
fn encoding_matches_golden_bytes() {
    assert_eq!(encode(&message()), golden());
}

#[test]
fn golden_bytes_decode_to_message() {
    assert_eq!(decode(&golden()).unwrap(), message());
}

#[test]
fn wire_exceeds_accounted_cost_by_one_word_per_blob() {
    let m = message();
    assert_eq!(comm_cost(&m), 71);
    assert_eq!(encode(&m).len(), 79);
}

#[test]
fn corrupt_messages_are_rejected() {
    let g = golden();
    let mut bad = g.clone();
    bad[0] = b'X';
    assert!(decode(&bad).is_err());
    let mut bad = g.clone();
    bad[4] = 9;
    assert!(decode(&bad).is_err());
    assert!(decode(&g[..g.len() - 1]).is_err());
    let mut long = g.clone();
    long.push(0);
    assert!(decode(&long).is_err());
    let mut bad = g;
    bad[19] = 0x70;
    assert!(decode(&bad).is_err());
}
