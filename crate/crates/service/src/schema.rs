//! OpenAPI description served at `GET /schema`.

use serde_json::{json, Map, Value};

/// Every routed operation as `(method, path)`.
pub const ROUTES: &[(&str, &str)] = &[
    ("GET", "/healthz"),
    ("GET", "/schema"),
    ("GET", "/runs"),
    ("POST", "/runs"),
    ("GET", "/runs/{id}"),
    ("POST", "/runs/{id}/advance"),
    ("GET", "/runs/{id}/pairs"),
    ("GET", "/runs/{id}/pairs/{pid}"),
    ("POST", "/runs/{id}/pairs/{pid}/followup"),
];

fn schema_ref(name: &str) -> Value {
    json!({"$ref": format!("#/components/schemas/{name}")})
}

fn body(name: &str) -> Value {
    json!({"content": {"application/json": {"schema": schema_ref(name)}}})
}

fn error(description: &str) -> Value {
    json!({"description": description, "content": {"application/json": {"schema": schema_ref("ErrorBody")}}})
}

struct Op {
    summary: &'static str,
    request: Option<&'static str>,
    ok: (u16, &'static str),
    errors: &'static [(u16, &'static str)],
    query: Option<Value>,
}

fn operation(method: &str, path: &str) -> Op {
    let none: Option<&'static str> = None;
    match (method, path) {
        ("GET", "/healthz") => Op {
            summary: "Liveness check",
            request: none,
            ok: (200, "Health"),
            errors: &[],
            query: None,
        },
        ("GET", "/schema") => Op {
            summary: "This document",
            request: none,
            ok: (200, "OpenApi"),
            errors: &[],
            query: None,
        },
        ("GET", "/runs") => Op {
            summary: "List runs",
            request: none,
            ok: (200, "RunList"),
            errors: &[],
            query: None,
        },
        ("POST", "/runs") => Op {
            summary: "Create a run from uploaded or generated experiences",
            request: Some("CreateRun"),
            ok: (201, "RunView"),
            errors: &[
                (400, "malformed body or invalid experiences"),
                (409, "run id already exists"),
                (413, "body too large"),
            ],
            query: None,
        },
        ("GET", "/runs/{id}") => Op {
            summary: "Run state, stage outputs and job progress",
            request: none,
            ok: (200, "RunView"),
            errors: &[(404, "unknown run")],
            query: None,
        },
        ("POST", "/runs/{id}/advance") => Op {
            summary: "Execute the next stage (202 when refinement starts in the background)",
            request: Some("AdvanceRequest"),
            ok: (200, "RunView"),
            errors: &[
                (400, "malformed body"),
                (404, "unknown run"),
                (409, "stage out of order or a job is running"),
                (422, "invalid stage parameters"),
                (502, "refinement backend failed"),
            ],
            query: None,
        },
        ("GET", "/runs/{id}/pairs") => Op {
            summary: "List plan pairs",
            request: none,
            ok: (200, "PairList"),
            errors: &[(404, "unknown run")],
            query: None,
        },
        ("GET", "/runs/{id}/pairs/{pid}") => Op {
            summary: "Narrative, explanation, metrics and session of one pair",
            request: none,
            ok: (200, "PairView"),
            errors: &[(400, "invalid level"), (404, "unknown run or pair")],
            query: Some(json!({
                "name": "level", "in": "query", "required": false,
                "schema": {"type": "integer", "minimum": 1, "maximum": 3}
            })),
        },
        ("POST", "/runs/{id}/pairs/{pid}/followup") => Op {
            summary: "Send a follow-up request to the pair's refinement session",
            request: Some("FollowUpRequest"),
            ok: (200, "FollowUpResponse"),
            errors: &[
                (400, "malformed or empty request"),
                (404, "unknown run or pair"),
                (409, "run not refined yet"),
                (502, "refinement backend failed"),
            ],
            query: None,
        },
        _ => unreachable!("route without schema entry: {method} {path}"),
    }
}

fn path_params(path: &str) -> Vec<Value> {
    path.split('/')
        .filter_map(|seg| seg.strip_prefix('{')?.strip_suffix('}'))
        .map(|name| json!({"name": name, "in": "path", "required": true, "schema": {"type": "string"}}))
        .collect()
}

fn object(required: &[&str], props: Value) -> Value {
    json!({"type": "object", "required": required, "properties": props})
}

fn components() -> Value {
    let s = |t: &str| json!({"type": t});
    let opt_obj = json!({"type": "object", "nullable": true});
    json!({
        "ErrorBody": object(&["error", "kind"], json!({"error": s("string"), "kind": s("string")})),
        "Health": object(&["status", "version"], json!({"status": s("string"), "version": s("string")})),
        "OpenApi": s("object"),
        "CreateRun": object(&[], json!({
            "corpus_id": s("string"),
            "experiences": {"type": "array", "items": schema_ref("ExperienceRecord")},
            "generate": object(&["seed", "n"], json!({"seed": s("integer"), "n": s("integer"), "config": s("object")})),
        })),
        "ExperienceRecord": object(&["plan_id", "events"], json!({
            "plan_id": s("string"),
            "events": {"type": "array", "items": object(
                &["actor", "action", "item", "start", "end", "doubted"],
                json!({
                    "actor": {"type": "string", "enum": ["robot", "human"]},
                    "action": {"type": "string", "enum": ["inspect", "re_inspect"]},
                    "item": s("string"),
                    "start": s("number"),
                    "end": s("number"),
                    "doubted": s("boolean"),
                }),
            )},
        })),
        "AdvanceRequest": object(&["stage"], json!({
            "stage": {"type": "string", "enum": ["classified", "inferred", "narrated", "refined", "evaluated"]},
            "params": {"type": "object", "description":
                "classified: alpha; narrated: specificity or levels; refined: backend, in_flight, follow_up, wait; evaluated: mu0"},
        })),
        "RunState": object(&["corpus_id", "stage", "plans"], json!({
            "corpus_id": s("string"),
            "stage": s("string"),
            "plans": {"type": "array", "items": s("string")},
            "artifacts": s("object"),
            "params": s("object"),
        })),
        "RunView": {"allOf": [schema_ref("RunState"), object(&[], json!({
            "job": opt_obj.clone(),
            "intervals": opt_obj.clone(),
            "inference": opt_obj.clone(),
            "narratives": opt_obj.clone(),
            "report": opt_obj.clone(),
        }))]},
        "RunList": object(&["runs"], json!({"runs": {"type": "array", "items": schema_ref("RunState")}})),
        "PairList": object(&["corpus_id", "count", "pairs"], json!({
            "corpus_id": s("string"),
            "count": s("integer"),
            "pairs": {"type": "array", "items": object(&["pair_id", "plans", "labels"], json!({
                "pair_id": s("string"), "plans": s("array"), "labels": s("array"),
            }))},
        })),
        "PairView": object(&["pair_id", "plans", "labels", "level"], json!({
            "pair_id": s("string"),
            "plans": s("array"),
            "labels": s("array"),
            "level": s("integer"),
            "narrative": {"type": "string", "nullable": true},
            "explanation": opt_obj.clone(),
            "metrics": opt_obj.clone(),
            "session": opt_obj,
        })),
        "FollowUpRequest": object(&["request"], json!({"request": s("string"), "level": s("integer")})),
        "FollowUpResponse": object(&["explanation", "metrics", "session"], json!({
            "explanation": s("object"), "metrics": s("object"), "session": s("object"),
        })),
    })
}

pub fn document() -> Value {
    let mut paths = Map::new();
    for &(method, path) in ROUTES {
        let op = operation(method, path);
        let mut responses = Map::new();
        responses.insert(
            op.ok.0.to_string(),
            json!({"description": "success", "content": {"application/json": {"schema": schema_ref(op.ok.1)}}}),
        );
        if method == "POST" && path.ends_with("/advance") {
            responses.insert("202".into(), json!({"description": "refinement job started", "content": body("RunView")["content"]}));
        }
        for &(code, why) in op.errors {
            responses.insert(code.to_string(), error(why));
        }
        let mut params = path_params(path);
        params.extend(op.query);
        let mut entry = json!({"summary": op.summary, "parameters": params, "responses": responses});
        if let Some(req) = op.request {
            let mut b = body(req);
            b["required"] = json!(true);
            entry["requestBody"] = b;
        }
        let item = paths.entry(path.to_string()).or_insert_with(|| json!({}));
        item[method.to_ascii_lowercase()] = entry;
    }
    json!({
        "openapi": "3.0.3",
        "info": {"title": "planexplain", "version": env!("CARGO_PKG_VERSION")},
        "paths": paths,
        "components": {"schemas": components()},
    })
}
