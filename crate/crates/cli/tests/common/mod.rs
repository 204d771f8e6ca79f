#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::mpsc;
use std::thread::JoinHandle;

use axum::Router;
use rubricflow_cli::api::{self, AppState};

/// A server on an ephemeral port, running on its own runtime thread.
pub struct Running {
    pub addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Running {
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn spawn_with(
    make: impl FnOnce(
            tokio::net::TcpListener,
            tokio::sync::oneshot::Receiver<()>,
        ) -> std::pin::Pin<Box<dyn std::future::Future<Output = ()> + Send>>
        + Send
        + 'static,
) -> Running {
    let (addr_tx, addr_rx) = mpsc::channel();
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            make(listener, stop_rx).await;
        });
    });
    let addr = addr_rx.recv().unwrap();
    Running { addr, stop: Some(stop_tx), thread: Some(thread) }
}

pub fn spawn_gateway(state: AppState) -> Running {
    spawn_with(move |listener, stop| {
        Box::pin(async move {
            api::serve(listener, state, async move {
                let _ = stop.await;
            })
            .await
            .unwrap();
        })
    })
}

pub fn spawn_router(router: Router) -> Running {
    spawn_with(move |listener, stop| {
        Box::pin(async move {
            axum::serve(listener, router)
                .with_graceful_shutdown(async move {
                    let _ = stop.await;
                })
                .await
                .unwrap();
        })
    })
}

pub fn segment_path(seg: &str) -> String {
    seg.replace(' ', "%20")
}
