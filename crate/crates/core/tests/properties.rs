//! Property tests for the structural invariants.

use proptest::prelude::*;

use jurysim_core::case::{
    difficulty_of, CategoryLabel, ChatTurn, DisputeCase, EvidencePiece, GroundTruthVotes,
    MediaItem, Side, TransactionMeta,
};
use jurysim_core::corpus::{
    gap_score, largest_remainder, stratified_partition, Corpus, PartitionSpec,
};
use jurysim_core::gateway::sample_frames;
use jurysim_core::prompts::extract_json;

fn text_strategy() -> impl Strategy<Value = String> {
    // Printable text without the media-reference syntax.
    "[ -~]{1,40}".prop_map(|s| s.replace("[media:", "(media:"))
}

fn media_strategy(tag: String) -> impl Strategy<Value = MediaItem> {
    (
        0u32..300,
        proptest::option::of(text_strategy()),
        any::<bool>(),
    )
        .prop_map(move |(frames, surrogate, video)| {
            if video {
                MediaItem::video(&format!("v{tag}"), frames, surrogate.as_deref())
            } else {
                MediaItem::image(&format!("i{tag}"), None, surrogate.as_deref())
            }
        })
}

fn piece_strategy(side: &'static str, index: usize) -> impl Strategy<Value = EvidencePiece> {
    (
        text_strategy(),
        proptest::option::of(media_strategy(format!("{side}{index}"))),
    )
        .prop_map(move |(claim, media)| {
            let mut piece = EvidencePiece {
                evidence_id: format!("{side}{index}"),
                text_claim: claim,
                images: vec![],
                videos: vec![],
            };
            if let Some(media) = media {
                match media.kind {
                    jurysim_core::case::MediaKind::Image => piece.images.push(media),
                    jurysim_core::case::MediaKind::Video => piece.videos.push(media),
                }
            }
            piece
        })
}

fn case_strategy() -> impl Strategy<Value = DisputeCase> {
    let pieces = |side: &'static str| {
        proptest::collection::vec(any::<u8>(), 1..4).prop_flat_map(move |v| {
            let strategies: Vec<_> = (0..v.len()).map(|i| piece_strategy(side, i)).collect();
            strategies
        })
    };
    (
        "[a-z0-9]{1,12}",
        text_strategy(),
        proptest::collection::vec((any::<bool>(), text_strategy()), 0..4),
        pieces("b"),
        pieces("s"),
        proptest::option::of(0u32..=17),
    )
        .prop_map(|(id, product, chat, buyer, seller, votes)| DisputeCase {
            case_id: id,
            meta: TransactionMeta {
                product_text: product,
                chat_history: chat
                    .into_iter()
                    .map(|(b, text)| ChatTurn {
                        role: if b { Side::Buyer } else { Side::Seller },
                        text,
                    })
                    .collect(),
                category: None,
                price: None,
            },
            buyer_evidence: buyer,
            seller_evidence: seller,
            ground_truth: votes.map(|b| GroundTruthVotes::new(b, 17 - b)),
        })
}

proptest! {
    /// Canonical file encoding round-trips byte-identically.
    #[test]
    fn case_roundtrip_is_byte_identical(case in case_strategy()) {
        let encoded = case.to_canonical_json();
        let decoded = DisputeCase::from_json(&encoded).unwrap();
        prop_assert_eq!(decoded.to_canonical_json(), encoded);
    }

    /// Exactly one side holds a strict majority of 17 votes.
    #[test]
    fn seventeen_votes_never_tie(buyer in 0u32..=17) {
        let votes = GroundTruthVotes::new(buyer, 17 - buyer);
        let buyer_majority = votes.buyer_votes > votes.seller_votes;
        let seller_majority = votes.seller_votes > votes.buyer_votes;
        prop_assert!(buyer_majority ^ seller_majority);
        prop_assert_eq!(difficulty_of(votes).margin % 2, 1);
    }

    /// Wrapping any JSON value in a fence and extracting it is identity.
    #[test]
    fn extract_json_inverts_fencing(text in text_strategy(), number in any::<i64>()) {
        let value = serde_json::json!({"text": text, "number": number});
        let wrapped = format!("model says:\n```json\n{value}\n```\nthanks");
        prop_assert_eq!(extract_json(&wrapped).unwrap(), value);
    }

    /// Sampled frames are sorted, duplicate-free, bounded and of the
    /// stated length for any count and cap.
    #[test]
    fn sample_frames_invariants(frame_count in 0u32..5000, cap in 1u32..200) {
        let sampled = sample_frames(frame_count, cap);
        prop_assert_eq!(sampled.len() as u32, frame_count.min(cap));
        for pair in sampled.windows(2) {
            prop_assert!(pair[0] < pair[1]);
        }
        if frame_count > 0 {
            prop_assert!(*sampled.last().unwrap() < frame_count);
        }
    }

    /// Gap scores stay inside [-1, 1] whenever defined.
    #[test]
    fn gap_scores_are_bounded(buyer in 0u32..1000, seller in 0u32..1000) {
        match gap_score(f64::from(buyer), f64::from(seller)) {
            Some(gap) => prop_assert!((-1.0..=1.0).contains(&gap)),
            None => prop_assert_eq!((buyer, seller), (0, 0)),
        }
    }

    /// Largest remainder allocates exactly n with per-set error below 1.
    #[test]
    fn largest_remainder_is_exact_and_tight(n in 0usize..10_000) {
        let ratios = [3.0, 1.0, 2.0];
        let alloc = largest_remainder(n, &ratios);
        prop_assert_eq!(alloc.iter().sum::<usize>(), n);
        for (count, weight) in alloc.iter().zip(ratios) {
            let ideal = n as f64 * weight / 6.0;
            prop_assert!((*count as f64 - ideal).abs() <= 1.0);
        }
    }

    /// Partition outputs are disjoint, cover the corpus, and deviate from
    /// the ideal per-stratum split by at most one case per set.
    #[test]
    fn partition_covers_and_is_tight(
        sizes in proptest::collection::vec(1usize..40, 1..5),
        seed in any::<u64>(),
    ) {
        let mut cases = Vec::new();
        for (stratum, size) in sizes.iter().enumerate() {
            let margin = 2 * stratum as u32 + 1;
            let buyer = (17 + margin) / 2;
            for i in 0..*size {
                cases.push(DisputeCase {
                    case_id: format!("s{stratum}c{i:03}"),
                    meta: TransactionMeta {
                        product_text: "p".into(),
                        chat_history: vec![],
                        category: CategoryLabel::new("Other", "Uncategorized Secondhand Items"),
                        price: None,
                    },
                    buyer_evidence: vec![EvidencePiece {
                        evidence_id: "b1".into(),
                        text_claim: "c".into(),
                        images: vec![],
                        videos: vec![],
                    }],
                    seller_evidence: vec![],
                    ground_truth: Some(GroundTruthVotes::new(buyer, 17 - buyer)),
                });
            }
        }
        let corpus = Corpus::from_cases(cases).unwrap();
        let spec = PartitionSpec { ratios: [3.0, 1.0, 2.0], seed };
        let partition = stratified_partition(&corpus, &spec).unwrap();

        let mut all: Vec<&String> = partition
            .train
            .iter()
            .chain(&partition.val)
            .chain(&partition.test)
            .collect();
        prop_assert_eq!(all.len(), corpus.len());
        all.sort();
        all.dedup();
        prop_assert_eq!(all.len(), corpus.len(), "sets must be disjoint");

        for (stratum, size) in sizes.iter().enumerate() {
            let prefix = format!("s{stratum}c");
            for (ids, weight) in [
                (&partition.train, 3.0),
                (&partition.val, 1.0),
                (&partition.test, 2.0),
            ] {
                let actual = ids.iter().filter(|id| id.starts_with(&prefix)).count() as f64;
                let ideal = *size as f64 * weight / 6.0;
                prop_assert!((actual - ideal).abs() <= 1.0);
            }
        }
    }
}
