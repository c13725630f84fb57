"""Run manifest: per-stage input/output digests, seeds, and timings.

Digests are 64-bit FNV-1a over file bytes. A stage consuming an artifact
that some earlier stage produced gets a staleness check for free: if the
file on disk no longer matches the digest recorded at production time, the
stage refuses to run.
"""

import json
import os

from . import __version__
from . import _kernels as kernels
from .errors import StaleInputError

_CHUNK = 1 << 20


def file_digest(path):
    h = kernels.fnv1a64(b"")
    with open(path, "rb") as fh:
        while True:
            chunk = fh.read(_CHUNK)
            if not chunk:
                break
            h = kernels.fnv1a64(chunk, h)
    return f"{h:016x}"


class RunManifest:
    def __init__(self, out_dir, config_hash):
        self.path = os.path.join(out_dir, "manifest.json")
        self.config_hash = config_hash
        self.data = {"config_hash": config_hash, "version": __version__,
                     "stages": {}}

    @classmethod
    def load_or_create(cls, out_dir, config_hash):
        """Stage records persist across config edits; each stage notes the
        config hash it ran under."""
        m = cls(out_dir, config_hash)
        if os.path.exists(m.path):
            with open(m.path, encoding="utf-8") as fh:
                m.data = json.load(fh)
            m.data["config_hash"] = config_hash
        return m

    def _recorded_outputs(self):
        out = {}
        for stage in self.data["stages"].values():
            out.update(stage.get("outputs", {}))
        return out

    def check_inputs(self, paths):
        """Raise StaleInputError if any path was produced by an earlier stage
        and has changed since. Digests of all inputs are returned for
        recording."""
        recorded = self._recorded_outputs()
        digests = {}
        for path in paths:
            key = os.path.basename(path)
            if not os.path.exists(path):
                raise StaleInputError(
                    f"missing input {path}; run the stage that produces it")
            digest = file_digest(path)
            digests[key] = digest
            if key in recorded and recorded[key] != digest:
                raise StaleInputError(
                    f"{path} changed since it was produced "
                    f"(recorded {recorded[key]}, found {digest}); re-run the "
                    f"producing stage")
        return digests

    def record_stage(self, name, inputs, output_paths, seeds=None, wall_s=None):
        self.data["stages"][name] = {
            "config_hash": self.config_hash,
            "inputs": inputs,
            "outputs": {os.path.basename(p): file_digest(p) for p in output_paths},
            "seeds": seeds or {},
            "wall_s": wall_s,
        }
        self.save()

    def save(self):
        os.makedirs(os.path.dirname(self.path) or ".", exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=1, sort_keys=True)
