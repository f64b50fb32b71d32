//! The offline gateway: a scripted chat backend keyed by the last user
//! message and a seeded embedder, both logging every call.

use jitflow::gateway::{
    CallLog, ChatBackend, ChatMessage, ChatRequest, Embedder, MockChat, MockEmbedder, MockReply,
};
use jitflow::retrieval::cosine_similarity;
use serde_json::json;

pub fn run_example() {
    let log = CallLog::new();
    let chat = MockChat::from_messages([(
        "Which feeders are available?",
        MockReply::ToolCall {
            name: "list_feeders".into(),
            arguments: json!({}),
        },
    )])
    .with_log(log.clone());
    let embedder = MockEmbedder::new(42).with_log(log.clone());

    let reply = chat
        .complete(&ChatRequest::new(vec![ChatMessage::user(
            "Which feeders are available?",
        )]))
        .unwrap();
    println!(
        "reply: {:?} ({} tokens)",
        reply.content,
        reply.usage.total()
    );

    let a = embedder.embed("power flow on Glover").unwrap();
    let b = embedder.embed("power flow on Stowe").unwrap();
    println!(
        "dimension {}, cosine {:.4}",
        a.dimension(),
        cosine_similarity(&a, &b).unwrap()
    );

    for e in log.events() {
        println!("{:?} {} {}", e.kind, e.backend, &e.digest[..12]);
    }
    assert_eq!(log.len(), 3);
}

fn main() {
    run_example();
}
