//! Hot-path benchmarks: cosine retrieval scans, frame sampling,
//! stratified partitioning and metric aggregation.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use jurysim_core::case::{
    CategoryLabel, DisputeCase, EvidencePiece, GroundTruthVotes, TransactionMeta, VerdictLabel,
};
use jurysim_core::corpus::{stratified_partition, Corpus, PartitionSpec};
use jurysim_core::gateway::{sample_frames, EmbeddingVector};
use jurysim_core::metrics::{metrics_report, PredictionRecord};
use jurysim_core::precedent::{GuidelineSet, PrecedentBase, PrecedentRecord};

fn random_vector(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    EmbeddingVector::new((0..dim).map(|_| rng.random_range(-1.0f32..=1.0)).collect())
}

fn bench_retrieval(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dim = 64;
    let mut base = PrecedentBase::new(dim);
    for i in 0..3000 {
        base.insert(
            PrecedentRecord {
                precedent_id: format!("p{i:04}"),
                case_text: String::new(),
                juror_decisions: vec![],
                vector: random_vector(&mut rng, dim),
            },
            GuidelineSet {
                precedent_id: format!("p{i:04}"),
                norms: vec!["n".into()],
            },
        )
        .unwrap();
    }
    let query = random_vector(&mut rng, dim);
    c.bench_function("retrieval_scan_3000x64", |b| {
        b.iter(|| base.retrieve_by_vector(black_box(&query)).unwrap())
    });
}

fn bench_sample_frames(c: &mut Criterion) {
    c.bench_function("sample_frames_3600_cap30", |b| {
        b.iter(|| sample_frames(black_box(3600), black_box(30)))
    });
}

fn synth_case(id: usize, category: &str, sub: &str, margin: u32) -> DisputeCase {
    let buyer = (17 + margin) / 2;
    DisputeCase {
        case_id: format!("c{id:05}"),
        meta: TransactionMeta {
            product_text: "bench product".into(),
            chat_history: vec![],
            category: CategoryLabel::new(category, sub),
            price: None,
        },
        buyer_evidence: vec![EvidencePiece {
            evidence_id: "b1".into(),
            text_claim: "claim".into(),
            images: vec![],
            videos: vec![],
        }],
        seller_evidence: vec![],
        ground_truth: Some(GroundTruthVotes::new(buyer, 17 - buyer)),
    }
}

fn bench_partition(c: &mut Criterion) {
    let cases: Vec<DisputeCase> = (0..6000)
        .map(|i| synth_case(i, "Fashion & Bags", "Hats", [1, 3, 5, 7][i % 4]))
        .collect();
    let corpus = Corpus::from_cases(cases).unwrap();
    let spec = PartitionSpec::default();
    c.bench_function("stratified_partition_6000", |b| {
        b.iter(|| stratified_partition(black_box(&corpus), black_box(&spec)).unwrap())
    });
}

fn bench_metrics(c: &mut Criterion) {
    let records: Vec<PredictionRecord> = (0..10_000)
        .map(|i| {
            let actual_seller = 8 + (i % 2) as u32;
            let predicted_seller = 8 + ((i / 3) % 2) as u32;
            PredictionRecord {
                case_id: format!("c{i}"),
                predicted: if predicted_seller > 8 {
                    VerdictLabel::Seller
                } else {
                    VerdictLabel::Buyer
                },
                predicted_split: (17 - predicted_seller, predicted_seller),
                actual: if actual_seller > 8 {
                    VerdictLabel::Seller
                } else {
                    VerdictLabel::Buyer
                },
                actual_split: (17 - actual_seller, actual_seller),
                category: None,
                difficulty: 1,
                rounds_used: 1,
                tokens_used: 100,
            }
        })
        .collect();
    c.bench_function("metrics_report_10000", |b| {
        b.iter_batched(
            || records.clone(),
            |r| metrics_report(black_box(&r)).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(
    benches,
    bench_retrieval,
    bench_sample_frames,
    bench_partition,
    bench_metrics
);
criterion_main!(benches);
