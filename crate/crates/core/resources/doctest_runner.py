# Doctest sandbox runner.
#
# Protocol: read one JSON request from stdin:
#   {"code": str, "doctests": [{"input": str, "expected": str}],
#    "timeout_s": float, "memory_mb": int | null}
# and write one JSON result to stdout:
#   {"status": "ok" | "compile_error" | "setup_error" | "runtime_error",
#    "per_test": [{"ok": bool, "got": str}], "stderr": str}
# Exit code 0 means the protocol succeeded regardless of the code outcome.
#
# Each doctest runs under a wall-clock timer; submissions must not reach the
# filesystem, network, or process machinery, so the usual suspects are
# blocked at import time.
import contextlib
import io
import json
import signal
import sys

BLOCKED_MODULES = frozenset({
    "os", "subprocess", "sys", "shutil", "pathlib", "glob", "tempfile",
    "socket", "http", "urllib", "requests", "ftplib", "smtplib", "ssl",
    "importlib", "runpy", "ctypes", "multiprocessing", "threading",
    "concurrent", "_thread", "signal", "resource", "pty", "tty", "fcntl",
    "mmap", "webbrowser",
})


class TestTimeout(Exception):
    pass


def _alarm(_signum, _frame):
    raise TestTimeout("per-test time limit exceeded")


def normalize(text):
    lines = [line.rstrip() for line in text.rstrip("\n").split("\n")]
    return "\n".join(lines)


def make_globals():
    import builtins

    real_import = builtins.__import__

    def guarded_import(name, *args, **kwargs):
        root = name.split(".")[0]
        if root in BLOCKED_MODULES:
            raise ImportError(f"module '{root}' is not available in the sandbox")
        return real_import(name, *args, **kwargs)

    sandbox_builtins = {}
    for attr in dir(builtins):
        sandbox_builtins[attr] = getattr(builtins, attr)
    sandbox_builtins["__import__"] = guarded_import
    sandbox_builtins["open"] = None
    sandbox_builtins["input"] = None
    return {"__name__": "__main__", "__builtins__": sandbox_builtins}


def run_one(source, env, timeout_s):
    buffer = io.StringIO()
    signal.setitimer(signal.ITIMER_REAL, timeout_s)
    try:
        with contextlib.redirect_stdout(buffer):
            try:
                compiled = compile(source, "<doctest>", "eval")
            except SyntaxError:
                compiled = compile(source, "<doctest>", "exec")
                exec(compiled, env)
                value = None
            else:
                value = eval(compiled, env)
        got = buffer.getvalue()
        if value is not None:
            got += repr(value) + "\n"
        return got, None
    except TestTimeout:
        return buffer.getvalue(), "TimeoutError: per-test time limit exceeded"
    except BaseException as exc:  # noqa: BLE001 - every submission failure counts
        return buffer.getvalue(), f"{type(exc).__name__}: {exc}"
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)


def main():
    request = json.load(sys.stdin)
    code = request["code"]
    doctests = request["doctests"]
    timeout_s = float(request.get("timeout_s", 5.0))
    memory_mb = request.get("memory_mb")

    if memory_mb:
        try:
            import resource

            cap = int(memory_mb) * 1024 * 1024
            resource.setrlimit(resource.RLIMIT_AS, (cap, cap))
        except (ImportError, ValueError, OSError):
            pass

    signal.signal(signal.SIGALRM, _alarm)
    not_run = [{"ok": False, "got": "not run"} for _ in doctests]
    stderr_notes = []

    try:
        compiled = compile(code, "<submission>", "exec")
    except (SyntaxError, ValueError) as exc:
        emit("compile_error", not_run, f"{type(exc).__name__}: {exc}")
        return

    env = make_globals()
    signal.setitimer(signal.ITIMER_REAL, max(timeout_s, 1.0))
    try:
        exec(compiled, env)
    except TestTimeout:
        emit("setup_error", not_run, "TimeoutError: module execution timed out")
        return
    except BaseException as exc:  # noqa: BLE001
        emit("setup_error", not_run, f"{type(exc).__name__}: {exc}")
        return
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)

    per_test = []
    any_raised = False
    for test in doctests:
        got, error = run_one(test["input"], env, timeout_s)
        if error is not None:
            any_raised = True
            per_test.append({"ok": False, "got": error})
            stderr_notes.append(error)
        else:
            ok = normalize(got) == normalize(test["expected"])
            per_test.append({"ok": ok, "got": got})

    status = "runtime_error" if any_raised else "ok"
    emit(status, per_test, "\n".join(stderr_notes))


def emit(status, per_test, stderr):
    json.dump({"status": status, "per_test": per_test, "stderr": stderr}, sys.stdout)
    sys.stdout.write("\n")
    sys.stdout.flush()


if __name__ == "__main__":
    main()
