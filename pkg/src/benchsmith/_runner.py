"""Child-process workflow runner. Stdlib-only and free of package imports so
any interpreter command can point at it directly.

Protocol (one JSON object per line, stdin -> stdout):
  parent sends config   {"session_dir", "allowed_read_roots", "preamble",
                         "memory_mb", "deny_subprocess"}
  child replies         {"ready": true} | {"ready": false, "error": ...}
  parent sends blocks   {"code": "..."}
  child replies         {"ok": bool, "stdout": "...", "stderr": "..."}

All blocks execute in one shared namespace; stdout/stderr of the executed
code are captured per block. An audit hook confines writes to the session
directory and reads to the session, dataset paths, and interpreter
installation paths.
"""

import io
import json
import os
import sys
import traceback


def _install_guard(session_dir, allowed_read_roots, deny_subprocess):
    session_dir = os.path.abspath(session_dir)
    read_roots = [os.path.abspath(r) for r in allowed_read_roots]
    read_roots.append(session_dir)

    def _norm(path):
        if isinstance(path, bytes):
            path = path.decode("utf-8", "replace")
        if not isinstance(path, str):
            return None  # fd-based operations are left alone
        return os.path.normpath(os.path.join(os.getcwd(), path))

    def _under(path, root):
        return path == root or path.startswith(root + os.sep)

    def _read_allowed(path):
        return any(_under(path, root) for root in read_roots)

    def _write_allowed(path):
        return _under(path, session_dir)

    WRITE_MODES = set("wax+")

    def hook(event, args):
        if event == "open":
            path, mode, flags = args[0], args[1], args[2]
            path = _norm(path)
            if path is None:
                return
            wants_write = False
            if mode is not None:
                wants_write = bool(WRITE_MODES.intersection(mode))
            else:
                wants_write = bool(flags & (os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_TRUNC | os.O_APPEND))
            if wants_write:
                if not _write_allowed(path):
                    raise PermissionError(f"sandbox: write outside session dir: {path}")
            elif not _read_allowed(path):
                raise PermissionError(f"sandbox: read outside allowed roots: {path}")
        elif event in ("os.remove", "os.rename", "os.rmdir", "os.truncate", "os.mkdir", "os.link", "os.symlink"):
            for candidate in args:
                path = _norm(candidate)
                if path is not None and not _write_allowed(path):
                    raise PermissionError(f"sandbox: {event} outside session dir: {path}")
        elif deny_subprocess and event in ("subprocess.Popen", "os.system", "os.exec", "os.fork", "os.posix_spawn", "os.spawn"):
            raise PermissionError(f"sandbox: {event} is disabled")

    sys.addaudithook(hook)


def _apply_memory_limit(memory_mb):
    if not memory_mb:
        return
    try:
        import resource

        limit = int(memory_mb) * 1024 * 1024
        resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    except (ImportError, ValueError, OSError):
        pass


def _reply(obj):
    sys.__stdout__.write(json.dumps(obj) + "\n")
    sys.__stdout__.flush()


def main():
    config = json.loads(sys.stdin.readline())
    session_dir = config["session_dir"]
    os.chdir(session_dir)
    os.environ["HOME"] = session_dir
    os.environ["TMPDIR"] = session_dir
    os.environ["MPLCONFIGDIR"] = os.path.join(session_dir, ".mpl")

    _apply_memory_limit(config.get("memory_mb"))

    namespace = {"__name__": "__main__"}
    preamble = config.get("preamble") or ""

    _install_guard(session_dir, config.get("allowed_read_roots", []),
                   config.get("deny_subprocess", True))

    if preamble:
        try:
            exec(compile(preamble, "<preamble>", "exec"), namespace)
        except BaseException:
            _reply({"ready": False, "error": traceback.format_exc()})
            return
    _reply({"ready": True})

    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        block = json.loads(line)
        out, err = io.StringIO(), io.StringIO()
        old_out, old_err = sys.stdout, sys.stderr
        sys.stdout, sys.stderr = out, err
        ok = True
        try:
            exec(compile(block["code"], "<block>", "exec"), namespace)
        except BaseException:
            ok = False
            traceback.print_exc(file=err)
        finally:
            sys.stdout, sys.stderr = old_out, old_err
        _reply({"ok": ok, "stdout": out.getvalue(), "stderr": err.getvalue()})


if __name__ == "__main__":
    main()
