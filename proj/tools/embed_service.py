"""Reference embedding service for the crosswalk engine.

Serves POST /embed with {"texts": [...]} and answers
{"model": name, "vectors": [[...], ...]} in input order. Vectors are the
raw mean-pooled sentence-transformers outputs; the engine normalises.

    python tools/embed_service.py --model sentence-transformers/all-MiniLM-L6-v2 --port 8081
    export CROSSWALK_EMBED_SERVICE=http://127.0.0.1:8081
"""

import argparse
import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from threading import Lock

log = logging.getLogger("embed_service")


def make_handler(model, model_name, lock):
    class Handler(BaseHTTPRequestHandler):
        def _reply(self, status, body):
            payload = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):
            if self.path.rstrip("/") in ("/healthz", ""):
                self._reply(200, {"status": "ok", "model": model_name})
            else:
                self._reply(404, {"error": "not found"})

        def do_POST(self):
            if self.path.rstrip("/") != "/embed":
                self._reply(404, {"error": "not found"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                request = json.loads(self.rfile.read(length))
                texts = request["texts"]
                if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
                    raise ValueError("'texts' must be a list of strings")
            except (ValueError, KeyError, TypeError) as exc:
                self._reply(400, {"error": str(exc)})
                return
            with lock:
                vectors = model.encode(texts, convert_to_numpy=True, normalize_embeddings=False)
            self._reply(200, {"model": model_name, "vectors": vectors.tolist()})

        def log_message(self, fmt, *args):
            log.info("%s " + fmt, self.address_string(), *args)

    return Handler


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--model", default="sentence-transformers/all-MiniLM-L6-v2")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8081)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")

    from sentence_transformers import SentenceTransformer

    model = SentenceTransformer(args.model, device=args.device)
    server = ThreadingHTTPServer((args.host, args.port), make_handler(model, args.model, Lock()))
    log.info("serving %s on http://%s:%d", args.model, args.host, args.port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


if __name__ == "__main__":
    main()
