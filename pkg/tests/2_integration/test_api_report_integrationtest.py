import json
import os
import sys
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
from fastapi.testclient import TestClient

# Allow running from any working directory
ROOT = Path(__file__).resolve().parents[2]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import app.main as main  # noqa: E402
from app.audio.feature_cache import save_features  # noqa: E402
from app.config import ModelConfig  # noqa: E402
from app.main import app  # noqa: E402
from app.model.bcresnet import build  # noqa: E402
from app.model.checkpoint import encode_checkpoint  # noqa: E402


class ApiReportIntegrationTest(unittest.TestCase):
    def setUp(self) -> None:
        self.client = TestClient(app)
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self) -> None:
        self._tmp.cleanup()

    def test_health(self) -> None:
        resp = self.client.get("/health")
        self.assertEqual(resp.status_code, 200)
        self.assertEqual(resp.json(), {"status": "ok"})

    def test_inspect_real_checkpoint(self) -> None:
        payload = encode_checkpoint(build(ModelConfig(base_channels=2), seed=0), meta={"seed": 0})

        resp = self.client.post(
            "/api/inspect", files={"file": ("m.bcra", payload, "application/octet-stream")}
        )

        self.assertEqual(resp.status_code, 200)
        body = resp.json()
        self.assertEqual(body["model"]["base_channels"], 2)
        self.assertEqual(body["meta"], {"seed": 0})
        self.assertFalse(body["compressed"])
        self.assertEqual(body["receptive_field"], [109, 109])
        self.assertEqual(body["receptive_field_pool_windows"], [115, 115])
        self.assertEqual(body["resnorm_placements"], 5)
        self.assertEqual(body["stage_shapes"][-1], ["logits", [1, 10]])
        self.assertEqual(body["size"]["total_bytes"], 4 * body["params"]["total"])

    def test_inspect_corrupt_file_is_bad_request(self) -> None:
        resp = self.client.post(
            "/api/inspect", files={"file": ("m.bcra", b"NOPE-not-a-checkpoint", "application/octet-stream")}
        )

        self.assertEqual(resp.status_code, 400)
        self.assertIn("Offset 0", resp.json()["detail"])

    def test_inspect_unexpected_error(self) -> None:
        with patch.object(main, "inspect_checkpoint", side_effect=RuntimeError("Speicher voll")):
            resp = self.client.post("/api/inspect", files={"file": ("m.bcra", b"x", "application/octet-stream")})

        self.assertEqual(resp.status_code, 500)
        self.assertIn("Speicher voll", resp.json()["detail"])

    def test_run_metrics(self) -> None:
        run_dir = self.tmp / "seed_0"
        run_dir.mkdir()
        records = [{"epoch": 1, "lr": 0.03, "train_loss": 2.1}, {"epoch": 2, "lr": 0.0, "train_loss": 1.7}]
        (run_dir / "metrics.jsonl").write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")

        with patch.dict(os.environ, {"BCRA_RUNS_DIR": str(self.tmp)}):
            ok = self.client.get("/api/runs/seed_0/metrics")
            missing = self.client.get("/api/runs/seed_9/metrics")

        self.assertEqual(ok.status_code, 200)
        self.assertEqual(ok.json(), {"run_id": "seed_0", "epochs": records})
        self.assertEqual(missing.status_code, 404)

    def test_run_metrics_rejects_bad_id(self) -> None:
        with patch.object(main, "read_metrics", side_effect=ValueError("Ungültige Lauf-ID")):
            resp = self.client.get("/api/runs/x/metrics")

        self.assertEqual(resp.status_code, 400)

    def test_feature_image(self) -> None:
        save_features(self.tmp / "data.bcaf", {"A-test-00000": np.arange(12.0).reshape(3, 4)})

        with patch.dict(os.environ, {"BCRA_CACHE_DIR": str(self.tmp)}):
            ok = self.client.get("/api/features/A-test-00000/image")
            missing = self.client.get("/api/features/B-test-00000/image")
            bad_name = self.client.get("/api/features/A-test-00000/image", params={"cache": "../x.bcaf"})

        self.assertEqual(ok.status_code, 200)
        self.assertEqual(ok.headers["content-type"], "image/png")
        self.assertTrue(ok.content.startswith(b"\x89PNG"))
        self.assertEqual(missing.status_code, 404)
        self.assertEqual(bad_name.status_code, 400)

    def test_feature_image_rejects_directory_names(self) -> None:
        # **Gegeben:** Cache-Namen, die auf Verzeichnisse oder andere Pfade zeigen
        with patch.dict(os.environ, {"BCRA_CACHE_DIR": str(self.tmp)}):
            for name in ("..", ".", "a..bcaf", ".bcaf"):
                with self.subTest(cache=name):
                    # **Wenn:** ein Bild aus diesem Cache angefragt wird
                    resp = self.client.get("/api/features/A-test-00000/image", params={"cache": name})
                    # **Dann:** lehnt die API den Namen ab, statt das Dateisystem zu lesen
                    self.assertEqual(resp.status_code, 400)


if __name__ == "__main__":
    unittest.main()
