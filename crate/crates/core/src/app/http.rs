//! Static file server for the operator console.

use std::io;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;

use tiny_http::{Header, Request, Response, Server};

const FALLBACK_PAGE: &str = "<!doctype html>\n<html><head><title>contact-bridge</title></head>\n<body><h1>contact-bridge</h1>\n<p>No console build is configured. Connect a client to the WebSocket gateway; its port is listed in <a href=\"/config.json\">/config.json</a>.</p>\n</body></html>\n";

pub fn content_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("html" | "htm") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("ico") => "image/x-icon",
        Some("wasm") => "application/wasm",
        Some("txt") => "text/plain; charset=utf-8",
        Some("woff2") => "font/woff2",
        _ => "application/octet-stream",
    }
}

/// Maps a request path onto `root`, refusing anything that would escape it.
pub fn resolve_path(root: &Path, url: &str) -> Option<PathBuf> {
    let path = url.split(['?', '#']).next().unwrap_or("");
    let mut out = root.to_path_buf();
    for part in path.split('/').filter(|p| !p.is_empty()) {
        let part = percent_decode(part)?;
        let mut comps = Path::new(&part).components();
        match (comps.next(), comps.next()) {
            (Some(Component::Normal(c)), None) => out.push(c),
            _ => return None,
        }
    }
    if out.is_dir() {
        out.push("index.html");
    }
    Some(out)
}

fn percent_decode(s: &str) -> Option<String> {
    let b = s.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'%' {
            let hex = std::str::from_utf8(b.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(b[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

pub struct StaticServer {
    server: Arc<Server>,
    addr: SocketAddr,
    thread: Option<JoinHandle<()>>,
}

impl StaticServer {
    /// Serves `root` (or a built-in page when `None`) plus `/config.json`
    /// announcing the gateway port.
    pub fn serve(addr: impl ToSocketAddrs, root: Option<PathBuf>, ws_port: Option<u16>) -> io::Result<Self> {
        let server = Server::http(addr).map_err(io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| io::Error::other("not an IP listener"))?;
        let server = Arc::new(server);
        let config = serde_json::json!({ "ws_port": ws_port }).to_string();
        let srv = server.clone();
        let thread = std::thread::Builder::new().name("http".into()).spawn(move || {
            for req in srv.incoming_requests() {
                if let Err(e) = respond(req, root.as_deref(), &config) {
                    log::debug!("http: {e}");
                }
            }
        })?;
        log::info!("console on http://{addr}");
        Ok(Self {
            server,
            addr,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for StaticServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn header(value: &str) -> Header {
    Header::from_bytes("Content-Type", value).expect("static header")
}

fn respond(req: Request, root: Option<&Path>, config: &str) -> io::Result<()> {
    if !matches!(req.method(), tiny_http::Method::Get | tiny_http::Method::Head) {
        return req.respond(Response::from_string("method not allowed").with_status_code(405));
    }
    let url = req.url().to_string();
    if url.split('?').next() == Some("/config.json") {
        return req.respond(Response::from_string(config).with_header(header("application/json")));
    }
    let Some(root) = root else {
        return if url == "/" || url.starts_with("/index.html") {
            req.respond(Response::from_string(FALLBACK_PAGE).with_header(header("text/html; charset=utf-8")))
        } else {
            req.respond(Response::from_string("not found").with_status_code(404))
        };
    };
    let Some(path) = resolve_path(root, &url) else {
        return req.respond(Response::from_string("forbidden").with_status_code(403));
    };
    match std::fs::File::open(&path) {
        Ok(f) if path.is_file() => req.respond(Response::from_file(f).with_header(header(content_type(&path)))),
        _ => req.respond(Response::from_string("not found").with_status_code(404)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpStream;

    fn get(addr: SocketAddr, path: &str) -> (u16, String, String) {
        let mut s = TcpStream::connect(addr).unwrap();
        write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
        let mut text = String::new();
        s.read_to_string(&mut text).unwrap();
        let (head, body) = text.split_once("\r\n\r\n").unwrap();
        let status = head[9..12].parse().unwrap();
        let ctype = head
            .lines()
            .find_map(|l| l.strip_prefix("Content-Type: "))
            .unwrap_or("")
            .to_string();
        (status, ctype, body.to_string())
    }

    #[test]
    fn resolves_inside_root_only() {
        let root = Path::new("/srv/console");
        assert_eq!(resolve_path(root, "/app.js?v=1"), Some(root.join("app.js")));
        assert_eq!(resolve_path(root, "/a%20b.css"), Some(root.join("a b.css")));
        assert_eq!(resolve_path(root, "/../etc/passwd"), None);
        assert_eq!(resolve_path(root, "/%2e%2e/etc/passwd"), None);
        assert_eq!(resolve_path(root, "/a%2f..%2f..%2fx"), None);
    }

    #[test]
    fn serves_console_and_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("index.html"), "<p>console</p>").unwrap();
        std::fs::write(dir.path().join("main.js"), "let x = 1;").unwrap();
        let srv = StaticServer::serve("127.0.0.1:0", Some(dir.path().to_path_buf()), Some(9871)).unwrap();
        let addr = srv.local_addr();
        assert_eq!(
            get(addr, "/"),
            (200, "text/html; charset=utf-8".into(), "<p>console</p>".into())
        );
        assert_eq!(get(addr, "/main.js").1, "text/javascript; charset=utf-8");
        assert_eq!(get(addr, "/missing.js").0, 404);
        assert_eq!(get(addr, "/../Cargo.toml").0, 403);
        let (status, ctype, body) = get(addr, "/config.json");
        assert_eq!((status, ctype.as_str()), (200, "application/json"));
        assert_eq!(
            serde_json::from_str::<serde_json::Value>(&body).unwrap()["ws_port"],
            9871
        );
        srv.shutdown();
    }

    #[test]
    fn fallback_page_without_console() {
        let srv = StaticServer::serve("127.0.0.1:0", None, None).unwrap();
        let (status, _, body) = get(srv.local_addr(), "/");
        assert_eq!(status, 200);
        assert!(body.contains("config.json"));
        assert_eq!(get(srv.local_addr(), "/app.js").0, 404);
    }
}
