//! Scripted providers for tests: each call consumes the next step.

use async_trait::async_trait;
use parking_lot::Mutex;
use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use super::{CallError, Capability, Provider, ProviderPayload, ProviderRequest};

#[derive(Debug, Clone)]
pub enum StubStep {
    Reply(ProviderPayload),
    Transient(String),
    Permanent(String),
    /// Sleep, then perform the inner step.
    Delayed(u64, Box<StubStep>),
}

#[derive(Debug, Clone)]
pub struct StubCall {
    pub request: ProviderRequest,
}

type Responder = dyn Fn(&ProviderRequest, usize) -> StubStep + Send + Sync;

pub struct StubProvider {
    model: String,
    capability: Capability,
    accepts_audio: bool,
    steps: Mutex<VecDeque<StubStep>>,
    responder: Option<Box<Responder>>,
    calls: Mutex<Vec<StubCall>>,
}

/// Provider that answers with `steps` in order and records every request.
pub fn make_stub(capability: Capability, model: &str, steps: Vec<StubStep>) -> Arc<StubProvider> {
    Arc::new(StubProvider {
        model: model.into(),
        capability,
        accepts_audio: true,
        steps: Mutex::new(steps.into()),
        responder: None,
        calls: Mutex::new(Vec::new()),
    })
}

impl StubProvider {
    /// Provider that computes each step from the request and the 0-based
    /// call number.
    pub fn from_fn(
        capability: Capability,
        model: &str,
        f: impl Fn(&ProviderRequest, usize) -> StubStep + Send + Sync + 'static,
    ) -> Arc<Self> {
        Arc::new(Self {
            model: model.into(),
            capability,
            accepts_audio: true,
            steps: Mutex::new(VecDeque::new()),
            responder: Some(Box::new(f)),
            calls: Mutex::new(Vec::new()),
        })
    }

    pub fn text_only(self: Arc<Self>) -> Arc<Self> {
        let mut me = Arc::try_unwrap(self).unwrap_or_else(|_| panic!("stub already shared"));
        me.accepts_audio = false;
        Arc::new(me)
    }

    pub fn calls(&self) -> Vec<StubCall> {
        self.calls.lock().clone()
    }
}

fn perform(
    step: StubStep,
) -> std::pin::Pin<Box<dyn std::future::Future<Output = Result<ProviderPayload, CallError>> + Send>>
{
    Box::pin(async move {
        match step {
            StubStep::Reply(p) => Ok(p),
            StubStep::Transient(m) => Err(CallError::Transient(m)),
            StubStep::Permanent(m) => Err(CallError::Permanent(m)),
            StubStep::Delayed(ms, inner) => {
                tokio::time::sleep(Duration::from_millis(ms)).await;
                perform(*inner).await
            }
        }
    })
}

#[async_trait]
impl Provider for StubProvider {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn capability(&self) -> Capability {
        self.capability
    }

    fn accepts_audio(&self) -> bool {
        self.accepts_audio
    }

    async fn call(&self, request: &ProviderRequest) -> Result<ProviderPayload, CallError> {
        let n = {
            let mut calls = self.calls.lock();
            calls.push(StubCall {
                request: request.clone(),
            });
            calls.len() - 1
        };
        let step = match &self.responder {
            Some(f) => f(request, n),
            None => match self.steps.lock().pop_front() {
                Some(s) => s,
                None => return Err(CallError::StubExhausted(n)),
            },
        };
        perform(step).await
    }
}
