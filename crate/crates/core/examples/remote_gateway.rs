//! Shows the chat-completions request body for a tool-calling turn. With
//! `JITFLOW_ENDPOINT` and `JITFLOW_MODEL` set (and optionally
//! `JITFLOW_API_KEY`), it also sends the request.

use jitflow::agent::render_system_prompt;
use jitflow::corpus::reference_environment;
use jitflow::env::FUNCTIONAL_TOOLS;
use jitflow::gateway::{ChatBackend, ChatMessage, ChatRequest, RemoteChat, RemoteConfig};

pub fn run_example() {
    let env = reference_environment();
    let query = "How many capacitors are in the Rochester feeder?";
    let mut request = ChatRequest::new(vec![
        ChatMessage::system(render_system_prompt(query, &[], env.schemas())),
        ChatMessage::user(query),
    ]);
    request.tools = env
        .schemas()
        .iter()
        .filter(|s| FUNCTIONAL_TOOLS.contains(&s.name.as_str()))
        .cloned()
        .collect();

    let body = jitflow::gateway::chat_body("any-model", &request);
    let tools = body["tools"].as_array().map_or(0, Vec::len);
    println!(
        "{} messages, {tools} tools",
        body["messages"].as_array().unwrap().len()
    );
    println!(
        "{}",
        serde_json::to_string_pretty(&body["tools"][0]).unwrap()
    );

    let (Ok(endpoint), Ok(model)) = (
        std::env::var("JITFLOW_ENDPOINT"),
        std::env::var("JITFLOW_MODEL"),
    ) else {
        println!("JITFLOW_ENDPOINT / JITFLOW_MODEL not set; not sending");
        return;
    };
    let chat = RemoteChat::new(RemoteConfig {
        endpoint,
        model,
        embedding_model: None,
        api_key: std::env::var("JITFLOW_API_KEY").ok(),
        timeout_secs: 60,
    });
    match chat.complete(&request) {
        Ok(r) => println!("response: {:?}, usage {:?}", r.content, r.usage),
        Err(e) => println!("request failed: {e}"),
    }
}

fn main() {
    run_example();
}
