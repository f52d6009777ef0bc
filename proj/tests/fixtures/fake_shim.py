#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Minimal stand-in for the interpreter service, used by the client tests.

Speaks the newline-delimited JSON protocol on stdin/stdout. Flags:
  --hang       never answer exec requests
  --bad-hello  answer the handshake with the wrong version
"""
import builtins
import contextlib
import io
import json
import sys
import time

TOOLS = ["inspect_file_as_text", "wikipedia_qa", "web_qa", "visit_qa",
         "find_archived_url", "local_visualizer", "final_answer"]
ALLOWED = {"math", "statistics"}

inp = sys.stdin.buffer
out = sys.stdout.buffer
real_import = builtins.__import__


def send(obj):
    out.write((json.dumps(obj) + "\n").encode())
    out.flush()


def recv():
    line = inp.readline()
    if not line:
        sys.exit(0)
    return json.loads(line)


class Stop(Exception):
    pass


class ToolError(Exception):
    pass


def guarded_import(name, *args, **kwargs):
    if name.split(".")[0] not in ALLOWED:
        raise ImportError(f"import of '{name}' is not allowed")
    return real_import(name, *args, **kwargs)


def make_tool(req_id, name):
    def tool(*args, **kwargs):
        if args:
            raise TypeError(f"{name} takes keyword arguments only")
        send({"id": req_id, "op": "tool_call", "tool": name, "kwargs": [[k, v] for k, v in kwargs.items()]})
        reply = recv()
        if not reply["ok"]:
            raise ToolError(reply["error"])
        if reply.get("stop"):
            raise Stop()
        return reply["result"]
    return tool


def main():
    hang = "--hang" in sys.argv
    hello = recv()
    send({"op": "hello", "version": 2 if "--bad-hello" in sys.argv else hello.get("version")})
    sessions = {}
    while True:
        req = recv()
        op = req.get("op")
        if op == "shutdown":
            return
        if op == "reset":
            sessions.pop(req["session"], None)
            send({"id": req["id"], "syntax_ok": True, "ok": True, "stdout": "", "error": None})
            continue
        if hang:
            time.sleep(3600)
        ns = sessions.setdefault(req["session"], {"__builtins__": dict(vars(builtins), __import__=guarded_import)})
        for t in TOOLS:
            ns[t] = make_tool(req["id"], t)
        try:
            code = compile(req["code"], "<step>", "exec")
        except SyntaxError as e:
            send({"id": req["id"], "syntax_ok": False, "ok": False, "stdout": "", "error": f"SyntaxError: {e.msg}"})
            continue
        buf = io.StringIO()
        error = None
        try:
            with contextlib.redirect_stdout(buf):
                exec(code, ns)
        except Stop:
            pass
        except Exception as e:  # noqa: BLE001
            error = f"{type(e).__name__}: {e}"
        send({"id": req["id"], "syntax_ok": True, "ok": error is None, "stdout": buf.getvalue(), "error": error})


if __name__ == "__main__":
    main()
