import hashlib
import json
import os
import tempfile

from . import __version__


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def artifact_header(config, seed):
    return {"tool": "topdown", "version": __version__,
            "config_sha256": config_hash(config), "seed": seed}


def atomic_write(path, data):
    """Write ``data`` (str or bytes) to a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class LineWriter:
    """Append complete lines to ``<path>.partial``; rename to ``path`` on close.

    Each line goes out in a single write followed by a flush, so an
    interrupted run leaves a partial file that ends on a line boundary.
    """

    def __init__(self, path):
        self.path = path
        self.partial = path + ".partial"
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._fh = open(self.partial, "w")

    def write_line(self, line):
        self._fh.write(line.rstrip("\n") + "\n")
        self._fh.flush()

    def close(self):
        self._fh.flush()
        os.fsync(self._fh.fileno())
        self._fh.close()
        os.replace(self.partial, self.path)

    def abort(self):
        self._fh.close()
