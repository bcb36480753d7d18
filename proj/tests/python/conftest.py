import os
import shutil
import subprocess
from pathlib import Path

import pytest

# Small enough that a whole pretrain -> metatrain -> evaluate chain takes seconds.
TINY = {
    "num_classes": "12",
    "input_dim": "6",
    "samples_per_class": "16",
    "num_base": "6",
    "way": "2",
    "shot": "3",
    "pretrain_epochs": "5",
    "hidden_dim1": "12",
    "hidden_dim2": "12",
    "feature_dim": "8",
    "iterations": "10",
    "aggregator_hidden": "8",
    "relation_hidden": "8",
    "base_refine_rounds": "2",
    "finetune_steps": "3",
}


@pytest.fixture
def tiny():
    return dict(TINY)


def _cli_path():
    path = os.environ.get("SCGN_CLI")
    if path:
        return path
    for candidate in (Path(__file__).resolve().parents[2] / "build" / "scgn_cli", shutil.which("scgn_cli")):
        if candidate and Path(candidate).exists():
            return str(candidate)
    return None


@pytest.fixture
def cli():
    path = _cli_path()
    if path is None:
        pytest.skip("scgn_cli not built")

    def run(*args, check=None):
        proc = subprocess.run([path, *map(str, args)], capture_output=True, text=True)
        if check is not None:
            assert proc.returncode == check, proc.stderr
        return proc

    return run


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text("# tiny run\n" + "".join(f"{k} = {v}\n" for k, v in TINY.items()))
    return path
