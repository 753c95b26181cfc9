mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use fps_core::agent::{Belief, Opinion};
use fps_core::backend::llm::{LlmBackend, LlmConfig};
use fps_core::backend::prompts::PromptSet;
use fps_core::backend::{CallContext, OpinionBackend};
use fps_core::error::BackendError;
use fps_core::persona::{default_name_pool, generate_persona, Persona, ProfileKind};
use fps_core::simulator::run_simulation;
use fps_core::SimulationConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{completion, is_opinion_request, StubServer};

fn config(url: &str, max_retries: u32) -> LlmConfig {
    LlmConfig {
        endpoint_url: url.to_owned(),
        max_retries,
        retry_base_delay_ms: 0,
        timeout_secs: 10.0,
        ..LlmConfig::default()
    }
}

fn persona() -> Persona {
    generate_persona(
        &mut ChaCha8Rng::seed_from_u64(3),
        0,
        &ProfileKind::Random.profile(),
        &default_name_pool(),
    )
    .unwrap()
}

fn previous() -> Opinion {
    Opinion {
        belief: Belief::Believe,
        tweet: "I think it's true.".into(),
        reasoning: String::new(),
        day: 1,
    }
}

fn ctx() -> CallContext<'static> {
    CallContext {
        run_seed: 0,
        agent_id: 0,
        day: 1,
        topic: "a dam has cracked",
    }
}

#[test]
fn request_carries_model_and_prompts() {
    let server = StubServer::start(|_, _| (200, completion("Belief: 0\nTweet: Nope.")));
    let mut cfg = config(&server.url, 0);
    cfg.api_key = Some("secret".into());
    cfg.temperature = 0.3;
    let backend = LlmBackend::new(cfg, PromptSet::default()).unwrap();
    let opinion = backend
        .llm_form_opinion(&persona(), "a dam has cracked", "", &previous(), true)
        .unwrap();
    assert_eq!(opinion.draft.belief, Belief::Disbelieve);
    assert_eq!(opinion.draft.reasoning, "");

    let body: serde_json::Value = serde_json::from_str(&server.requests()[0]).unwrap();
    assert_eq!(body["model"], "gpt-3.5-turbo-1106");
    assert_eq!(body["temperature"], 0.3);
    let messages = body["messages"].as_array().unwrap();
    assert_eq!(messages[0]["role"], "system");
    assert!(messages[0]["content"].as_str().unwrap().contains(&persona().name));
    let user = messages[1]["content"].as_str().unwrap();
    assert!(user.contains("a dam has cracked"));
    assert!(user.contains("I think it's true."));
    assert!(user.contains("Provide reasoning"));
    assert_eq!(backend.calls(), 1);
}

#[test]
fn reask_uses_the_stricter_prompt() {
    let server = StubServer::start(|i, _| {
        if i == 0 {
            (200, completion("Sure! Here is my take."))
        } else {
            (200, completion("**Belief:** 1\n**Tweet:** Yes."))
        }
    });
    let backend = LlmBackend::new(config(&server.url, 2), PromptSet::default()).unwrap();
    let o = backend
        .llm_form_opinion(&persona(), "t", "m", &previous(), false)
        .unwrap();
    assert_eq!(o.retries, 1);
    assert_eq!(o.draft.tweet, "Yes.");
    let requests = server.requests();
    assert!(!requests[0].contains("could not be read"));
    assert!(requests[1].contains("could not be read"));
    assert_eq!(backend.retries(), 1);
}

#[test]
fn server_errors_are_retried() {
    let server = StubServer::start(|i, _| match i {
        0 => (503, "overloaded".into()),
        1 => (200, "{not json".into()),
        _ => (200, completion("A short summary.")),
    });
    let backend = LlmBackend::new(config(&server.url, 3), PromptSet::default()).unwrap();
    let summary = backend.summarize(&ctx(), &persona(), &[]).unwrap();
    assert_eq!(summary, "A short summary.");
    assert_eq!(server.request_count(), 3);
}

#[test]
fn client_errors_fail_fast() {
    let server = StubServer::start(|_, _| (401, "{\"error\":\"bad key\"}".into()));
    let backend = LlmBackend::new(config(&server.url, 3), PromptSet::default()).unwrap();
    let err = backend.summarize(&ctx(), &persona(), &[]).unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 401, .. }), "{err}");
    assert_eq!(server.request_count(), 1);
}

#[test]
fn transport_retries_are_bounded() {
    let server = StubServer::start(|_, _| (500, "boom".into()));
    let backend = LlmBackend::new(config(&server.url, 2), PromptSet::default()).unwrap();
    let err = backend
        .integrate(&ctx(), &persona(), "old", "new", 2000)
        .unwrap_err();
    assert!(matches!(err, BackendError::Http { status: 500, .. }));
    assert_eq!(server.request_count(), 3);
}

#[test]
fn unreachable_endpoint_is_a_network_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    drop(listener);
    let backend = LlmBackend::new(config(&url, 0), PromptSet::default()).unwrap();
    let err = backend.summarize(&ctx(), &persona(), &[]).unwrap_err();
    assert!(matches!(err, BackendError::Network(_)), "{err}");
}

#[test]
fn simulation_over_llm_backend() {
    // Alternate replies so beliefs actually move.
    let counter = Arc::new(AtomicUsize::new(0));
    let c = Arc::clone(&counter);
    let server = StubServer::start(move |_, body| {
        if is_opinion_request(body) {
            let k = c.fetch_add(1, Ordering::SeqCst);
            (200, completion(&format!("Belief: {}\nTweet: take {k}\nReasoning: r", k % 2)))
        } else {
            (200, completion("Mixed views today."))
        }
    });
    let mut cfg = SimulationConfig::new("a dam has cracked");
    cfg.n_agents = 5;
    cfg.horizon = 2;
    cfg.contacts_per_day = [1, 2].into();
    cfg.llm = config(&server.url, 0);
    cfg.llm.max_concurrent_requests = 2;
    let backend = LlmBackend::new(cfg.llm.clone(), PromptSet::default()).unwrap();
    let trace = run_simulation(&cfg, &backend, &PromptSet::default(), &default_name_pool()).unwrap();
    assert_eq!(trace.backend, "llm");
    assert_eq!(trace.backend_failures, 0);
    assert_eq!(counter.load(Ordering::SeqCst), 10);
    // summarize + integrate + opinion per agent per day
    assert_eq!(server.request_count(), 30);
    for day in &trace.records[1..] {
        for r in day {
            assert!(r.tweet.starts_with("take "));
            assert_eq!(r.long_term, "Mixed views today.");
        }
    }
}
