"""E2E-Test: Report-Service als uvicorn-Prozess gegen echte Laufverzeichnisse."""

from __future__ import annotations

import os
import subprocess
import sys
import tempfile
import time
import unittest
from pathlib import Path
from urllib.parse import urlparse

import httpx

ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from app.cli import main  # noqa: E402

TINY_CONFIG = """\
base_channels=2
epochs=2
warmup_epochs=0
batch_size=8
train_sizes=A:8,B:2,C:2,S1:2,S2:2,S3:2
test_per_device=1
synth_freq_bins=32
synth_frames=16
"""


def _wait_for_http(url: str, timeout_seconds: int) -> None:
    """Pollt den Endpunkt, bis er antwortet oder das Timeout greift."""
    deadline = time.time() + timeout_seconds
    while time.time() < deadline:
        try:
            if httpx.get(url, timeout=2).status_code < 500:
                return
        except httpx.HTTPError:
            pass
        time.sleep(0.5)
    raise RuntimeError(f"Server did not respond in time: {url}")


def _start_server(base_url: str, env_overrides: dict[str, str]) -> subprocess.Popen:
    parsed = urlparse(base_url)
    env = os.environ.copy()
    env.update(env_overrides)
    env["PYTHONPATH"] = str(ROOT)
    cmd = [
        sys.executable, "-m", "uvicorn", "app.main:app",
        "--host", parsed.hostname or "127.0.0.1",
        "--port", str(parsed.port or 8000),
        "--log-level", "warning",
    ]
    return subprocess.Popen(cmd, cwd=str(ROOT), env=env)


class ReportServiceE2ETest(unittest.TestCase):
    @classmethod
    def setUpClass(cls) -> None:
        cls.base_url = os.getenv("E2E_BASE_URL", "http://127.0.0.1:8765")
        cls._tmp = tempfile.TemporaryDirectory()
        cls.tmp = Path(cls._tmp.name)
        config = cls.tmp / "tiny.env"
        config.write_text(TINY_CONFIG, encoding="utf-8")
        cls.runs = cls.tmp / "runs"
        if main(["train", "--config", str(config), "--seeds", "0", "--out", str(cls.runs)]) != 0:
            raise RuntimeError("Training für den E2E-Test fehlgeschlagen.")
        if main(["generate-data", "--config", str(config), "--seed", "0", "--out", str(cls.tmp / "cache")]) != 0:
            raise RuntimeError("Datenexport für den E2E-Test fehlgeschlagen.")
        cls.server = _start_server(
            cls.base_url, {"BCRA_RUNS_DIR": str(cls.runs), "BCRA_CACHE_DIR": str(cls.tmp / "cache")}
        )
        try:
            _wait_for_http(f"{cls.base_url}/health", 30)
        except Exception:
            cls.server.terminate()
            cls._tmp.cleanup()
            raise

    @classmethod
    def tearDownClass(cls) -> None:
        cls.server.terminate()
        try:
            cls.server.wait(timeout=10)
        except subprocess.TimeoutExpired:
            cls.server.kill()
        cls._tmp.cleanup()

    def test_metrics_of_trained_run(self):
        resp = httpx.get(f"{self.base_url}/api/runs/seed_0/metrics", timeout=10)

        self.assertEqual(resp.status_code, 200)
        epochs = resp.json()["epochs"]
        self.assertEqual([e["epoch"] for e in epochs], [1, 2])
        self.assertTrue(all("overall" in e for e in epochs))

    def test_inspect_uploaded_checkpoint(self):
        payload = (self.runs / "seed_0" / "best.bcra").read_bytes()

        resp = httpx.post(
            f"{self.base_url}/api/inspect",
            files={"file": ("best.bcra", payload, "application/octet-stream")},
            timeout=60,
        )

        self.assertEqual(resp.status_code, 200)
        body = resp.json()
        self.assertEqual(body["meta"]["seed"], 0)
        self.assertEqual(body["resnorm_placements"], 5)

    def test_feature_image_from_exported_data(self):
        resp = httpx.get(f"{self.base_url}/api/features/A-train-00000/image", timeout=10)

        self.assertEqual(resp.status_code, 200)
        self.assertEqual(resp.headers["content-type"], "image/png")


if __name__ == "__main__":
    unittest.main()
